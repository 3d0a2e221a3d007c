//! Flat model files: a text header describing the architecture and tensor
//! shapes, a `data` line, then every parameter as little-endian `f64` in
//! [`Parameters::tensors`] order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::adam::Parameters;
use super::gru::CandidateForm;
use super::network::{LayerSpec, Network, NetworkSpec};
use crate::error::{Error, Result};

const MAGIC: &str = "soh-network 1";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

pub fn write_network<W: Write>(net: &Network, out: W) -> std::io::Result<()> {
    write_network_annotated(net, out, &[])
}

/// Like [`write_network`] with `#` comment lines after the magic line.
pub fn write_network_annotated<W: Write>(net: &Network, mut out: W, comments: &[String]) -> std::io::Result<()> {
    let spec = &net.spec;
    writeln!(out, "{MAGIC}")?;
    for c in comments {
        writeln!(out, "# {}", c.replace('\n', " "))?;
    }
    writeln!(out, "window_length {}", spec.window_length)?;
    writeln!(out, "input_size {}", spec.input_size)?;
    writeln!(out, "candidate_form {}", spec.candidate_form.as_str())?;
    writeln!(out, "input_offset {}", net.input_offset)?;
    for l in &spec.layers {
        let back = l.backward_units.map_or("-".to_string(), |u| u.to_string());
        writeln!(
            out,
            "layer {} {} {} {}",
            l.forward_units, back, l.forward_dropout, l.backward_dropout
        )?;
    }
    let tensors = net.tensors();
    let lens: Vec<String> = tensors.iter().map(|t| t.len().to_string()).collect();
    writeln!(out, "tensors {}", lens.join(" "))?;
    writeln!(out, "data")?;
    for t in tensors {
        for v in t {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

fn parse<T: std::str::FromStr>(field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| bad(format!("cannot parse {what} from `{field}`")))
}

pub fn read_network<R: Read>(input: R) -> Result<Network> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    let mut next_line = |reader: &mut BufReader<R>| -> Result<String> {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| bad(format!("unreadable header: {e}")))?;
        if n == 0 {
            return Err(bad("unexpected end of header"));
        }
        Ok(line.trim_end().to_string())
    };
    if next_line(&mut reader)? != MAGIC {
        return Err(bad("missing `soh-network 1` header"));
    }
    let mut spec = NetworkSpec {
        window_length: 0,
        input_size: 1,
        layers: Vec::new(),
        candidate_form: CandidateForm::ResetGated,
    };
    let mut lens: Option<Vec<usize>> = None;
    let mut input_offset = 0.0;
    loop {
        let l = next_line(&mut reader)?;
        let fields: Vec<&str> = l.split_whitespace().collect();
        if l.starts_with('#') {
            continue;
        }
        match fields.as_slice() {
            ["data"] => break,
            ["input_offset", v] => input_offset = parse(v, "input_offset")?,
            ["window_length", v] => spec.window_length = parse(v, "window_length")?,
            ["input_size", v] => spec.input_size = parse(v, "input_size")?,
            ["candidate_form", "reset_gated"] => spec.candidate_form = CandidateForm::ResetGated,
            ["candidate_form", "concatenated"] => spec.candidate_form = CandidateForm::Concatenated,
            ["layer", f, b, df, db] => spec.layers.push(LayerSpec {
                forward_units: parse(f, "forward units")?,
                backward_units: if *b == "-" {
                    None
                } else {
                    Some(parse(b, "backward units")?)
                },
                forward_dropout: parse(df, "forward dropout")?,
                backward_dropout: parse(db, "backward dropout")?,
            }),
            ["tensors", rest @ ..] => {
                lens = Some(rest.iter().map(|v| parse(v, "tensor length")).collect::<Result<_>>()?)
            }
            _ => return Err(bad(format!("unrecognized header line `{l}`"))),
        }
    }
    let mut net = Network::zeros(&spec).map_err(|e| bad(format!("invalid architecture: {e}")))?;
    net.input_offset = input_offset;
    let expected: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
    match lens {
        Some(l) if l == expected => {}
        Some(l) => {
            return Err(bad(format!(
                "tensor lengths {l:?} do not match the architecture {expected:?}"
            )))
        }
        None => return Err(bad("missing tensor length line")),
    }
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| bad(format!("unreadable data: {e}")))?;
    let count: usize = expected.iter().sum();
    if bytes.len() != count * 8 {
        return Err(bad(format!("expected {} data bytes, found {}", count * 8, bytes.len())));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    for t in net.tensors_mut() {
        for v in t.iter_mut() {
            *v = values.next().expect("length checked");
            if !v.is_finite() {
                return Err(bad("non-finite parameter value"));
            }
        }
    }
    Ok(net)
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_network(net, BufWriter::new(file)).map_err(|e| io_err(path, e))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_network(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from;

    #[test]
    fn round_trip_is_exact() {
        let spec = NetworkSpec::dual_bigru(4, [3, 2, 2, 5], [0.01, 0.02, 0.03, 0.04])
            .with_candidate_form(CandidateForm::Concatenated);
        let mut net = Network::initialize(&spec, &mut rng_from(4)).unwrap();
        net.dense_bias = 0.123456789;
        net.input_offset = 0.1 + 0.2;
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        let back = read_network(buf.as_slice()).unwrap();
        assert_eq!(back, net);
        let mut annotated = Vec::new();
        write_network_annotated(&net, &mut annotated, &["manifest 0123".into()]).unwrap();
        assert!(annotated.starts_with(b"soh-network 1\n# manifest 0123\n"));
        assert_eq!(read_network(annotated.as_slice()).unwrap(), net);
    }

    #[test]
    fn truncated_and_garbage_files_are_rejected() {
        let spec = NetworkSpec::dual_bigru(2, [2; 4], [0.0; 4]);
        let net = Network::zeros(&spec).unwrap();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        assert!(read_network(&buf[..buf.len() - 3]).is_err());
        assert!(read_network(&b"hello\n"[..]).is_err());
        assert!(read_network(&b""[..]).is_err());
        assert!(load_network("/nonexistent/model.bin").is_err());
    }
}
