//! Bidirectional GRU regressor written from scratch: cells, stacked
//! bidirectional layers, backpropagation through time, Adam and training.

mod adam;
mod gru;
mod io;
mod network;
mod train;

pub use adam::{adam_step, effective_learning_rate, AdamState, Parameters};
pub use gru::{CandidateForm, CellCache, GruCell};
pub use io::{load_network, read_network, save_network, write_network, write_network_annotated};
pub use network::{flip, BiLayer, ForwardCache, LayerSpec, Mode, Network, NetworkSpec};
pub use train::{make_windows, make_windows_in, mse_loss, predict, train, SequenceBatch, TrainOutcome, TrainingConfig};
