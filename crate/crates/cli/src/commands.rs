use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde::Serialize;
use soh_core::hiselect::{condition, HiName};
use soh_core::ingest::{monthly_aggregate, parse_cycle_file, parse_fleet_file};
use soh_core::neuralnet::{load_network, make_windows, make_windows_in, predict, write_network_annotated, Network};
use soh_core::pipeline::synth::{synthesize_cycles, synthesize_fleet, write_cycles, write_fleet};
use soh_core::pipeline::{
    evaluate_metrics, extract, fleet_series, mean_metrics, run_fleet, run_single_battery_with_models, split_series,
    Metrics, PredictionReport, RunConfig, SplitSpec, TrainedModel,
};
use soh_core::ssa::{HyperparameterSpace, HYPERPARAMETER_NAMES};

use crate::manifest::{RunDir, RunManifest};

/// Invalid invocation; reported with usage exit status.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub struct Session {
    pub config: RunConfig,
    pub out_root: PathBuf,
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<()> {
    report_problems(config.violations())
}

fn report_problems(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        return Ok(());
    }
    let list: Vec<String> = problems.iter().map(|p| format!("  - {p}")).collect();
    bail!("invalid configuration:\n{}", list.join("\n"))
}

pub fn parse_split(s: &str) -> std::result::Result<SplitSpec, String> {
    if let Some(i) = s.strip_prefix("index:") {
        return i
            .parse()
            .map(SplitSpec::Index)
            .map_err(|_| format!("bad index in `{s}`"));
    }
    let (value, scale) = match s.strip_suffix('%') {
        Some(p) => (p, 0.01),
        None => (s, 1.0),
    };
    let f: f64 = value
        .parse()
        .map_err(|_| format!("expected a fraction like 0.25, a percentage like 25%, or index:N; got `{s}`"))?;
    Ok(SplitSpec::Fraction(f * scale))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

#[derive(Serialize)]
struct MetricsToml {
    rmse: f64,
    mae: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mape_percent: Option<f64>,
}

impl From<Metrics> for MetricsToml {
    fn from(m: Metrics) -> Self {
        Self {
            rmse: m.rmse,
            mae: m.mae,
            mape_percent: m.mape,
        }
    }
}

#[derive(Serialize)]
struct Runtime {
    runtime_s: f64,
}

// ---- synth ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Cycles,
    Fleet,
    Both,
}

pub fn synth(ctx: &Session, kind: SynthKind) -> Result<RunDir> {
    let cfg = &ctx.config;
    let mut problems: Vec<String> = cfg.synth.cycles.violations();
    problems.extend(cfg.synth.fleet.violations());
    report_problems(problems)?;
    let mut m = RunManifest::new("synth", cfg);
    m.option("kind", format!("{kind:?}").to_lowercase());
    let dir = RunDir::create(&ctx.out_root, &m)?;
    let header = [dir.header()];
    if kind != SynthKind::Fleet {
        let data = synthesize_cycles(&cfg.synth.cycles, cfg.seed)?;
        write_cycles(dir.file("cycles.csv"), &data, cfg.synth.cycles.current_a, &header)?;
        dir.csv(
            "cycles_truth.csv",
            &["cycle", "soh"],
            data.records
                .iter()
                .zip(&data.true_soh)
                .map(|(r, s)| vec![r.cycle_index.to_string(), s.to_string()]),
        )?;
        eprintln!("synthesized {} cycles", data.records.len());
    }
    if kind != SynthKind::Cycles {
        let data = synthesize_fleet(&cfg.synth.fleet, cfg.seed)?;
        write_fleet(dir.file("fleet.csv"), &data, &header)?;
        dir.csv(
            "fleet_truth.csv",
            &["vehicle", "month", "soh"],
            data.true_soh.iter().flat_map(|(v, soh)| {
                soh.iter()
                    .enumerate()
                    .map(move |(i, s)| vec![v.clone(), (i + 1).to_string(), s.to_string()])
            }),
        )?;
        eprintln!(
            "synthesized {} charging segments from {} vehicles",
            data.segments.len(),
            data.true_soh.len()
        );
    }
    Ok(dir)
}

// ---- extract ----

#[derive(Debug, Default, Clone, clap::Args)]
pub struct ExtractArgs {
    /// Cycle dataset (delimited text with a header row).
    #[arg(long, value_name = "PATH")]
    pub cycles: Option<PathBuf>,
    /// Column holding the cycle number.
    #[arg(long, value_name = "NAME")]
    pub cycle_col: Option<String>,
    /// Column holding time in seconds.
    #[arg(long, value_name = "NAME")]
    pub time_col: Option<String>,
    /// Column holding terminal voltage.
    #[arg(long, value_name = "NAME")]
    pub voltage_col: Option<String>,
    /// Column holding cumulative charge in Ah.
    #[arg(long, value_name = "NAME", conflicts_with = "current_col")]
    pub charge_col: Option<String>,
    /// Column holding current in A; charge is integrated from it.
    #[arg(long, value_name = "NAME")]
    pub current_col: Option<String>,
    /// Column holding per-cycle measured capacity in Ah.
    #[arg(long, value_name = "NAME")]
    pub capacity_col: Option<String>,
    /// Indicator to keep: MF, PF, Kur, CF, WF, Area, Peak or auto.
    #[arg(long, value_name = "NAME")]
    pub hi: Option<String>,
    /// Skip Hankel-SVD denoising of the chosen indicator.
    #[arg(long)]
    pub no_denoise: bool,
}

pub fn cmd_extract(ctx: &Session, args: &ExtractArgs) -> Result<RunDir> {
    let mut cfg = ctx.config.clone();
    let schema = &mut cfg.cycles.schema;
    if let Some(c) = &args.cycle_col {
        schema.cycle = c.clone();
    }
    if let Some(c) = &args.time_col {
        schema.time = c.clone();
    }
    if let Some(c) = &args.voltage_col {
        schema.voltage = c.clone();
    }
    if let Some(c) = &args.charge_col {
        schema.charge = Some(c.clone());
    }
    if let Some(c) = &args.current_col {
        schema.charge = None;
        schema.current = Some(c.clone());
    }
    if let Some(c) = &args.capacity_col {
        schema.capacity = Some(c.clone());
    }
    if let Some(h) = &args.hi {
        cfg.extraction.hi = h.clone();
    }
    if args.no_denoise {
        cfg.extraction.denoise = false;
    }
    if let Some(p) = &args.cycles {
        cfg.cycles.path = Some(p.clone());
    }
    let path = cfg.cycles.path.clone().ok_or_else(|| {
        UsageError("a cycle dataset is required: pass --cycles PATH or set cycles.path in the configuration".into())
    })?;
    report_problems(cfg.extraction.violations())?;
    let parsed = parse_cycle_file(&path, &cfg.cycles.schema).with_context(|| format!("reading {}", path.display()))?;
    let ex =
        extract(&parsed.records, &cfg.extraction).with_context(|| format!("extracting from {}", path.display()))?;

    let mut m = RunManifest::new("extract", &cfg);
    m.input("cycles", &path)?;
    let dir = RunDir::create(&ctx.out_root, &m)?;

    let mut header = vec!["cycle", "soh"];
    header.extend(HiName::ALL.iter().map(|n| n.as_str()));
    dir.csv(
        "features.csv",
        &header,
        ex.features.iter().zip(&ex.soh.values).map(|(f, s)| {
            let mut row = vec![f.cycle_index.to_string(), s.to_string()];
            row.extend(HiName::ALL.iter().map(|&n| f.get(n).to_string()));
            row
        }),
    )?;
    let conditioned = ex
        .candidates
        .iter()
        .map(|c| condition(c, cfg.extraction.conditioning().denoise))
        .collect::<soh_core::Result<Vec<_>>>()?;
    let mut header = vec!["cycle".to_string(), "soh".to_string()];
    header.extend(conditioned.iter().map(|c| c.label()));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    dir.csv(
        "conditioned.csv",
        &header_refs,
        (0..ex.soh.len()).map(|i| {
            let mut row = vec![ex.soh.index[i].to_string(), ex.soh.values[i].to_string()];
            row.extend(conditioned.iter().map(|c| c.values[i].to_string()));
            row
        }),
    )?;
    dir.csv(
        "correlation.csv",
        &["rank", "name", "coefficient", "degenerate"],
        ex.report.ranking.iter().enumerate().map(|(r, &i)| {
            let e = &ex.report.entries[i];
            vec![
                (r + 1).to_string(),
                e.name.to_string(),
                e.coefficient.to_string(),
                e.degenerate.to_string(),
            ]
        }),
    )?;
    dir.csv(
        "area_sweep.csv",
        &["below_peak", "above_peak", "correlation", "note"],
        ex.sweep.candidates.iter().map(|c| {
            vec![
                c.below_peak.to_string(),
                c.above_peak.to_string(),
                fmt_opt(c.correlation),
                c.note.clone().unwrap_or_default(),
            ]
        }),
    )?;
    dir.csv(
        "hi.csv",
        &["index", "soh", "hi"],
        (0..ex.soh.len()).map(|i| {
            vec![
                ex.soh.index[i].to_string(),
                ex.soh.values[i].to_string(),
                ex.chosen.values[i].to_string(),
            ]
        }),
    )?;

    #[derive(Serialize)]
    struct Summary {
        chosen: String,
        correlation_mode: String,
        area_below_peak_v: f64,
        area_above_peak_v: f64,
        area_correlation: f64,
        cycles: usize,
        dropped_rows: usize,
        non_monotone_rows: usize,
    }
    dir.toml(
        "extraction.toml",
        &Summary {
            chosen: ex.chosen.label(),
            correlation_mode: format!("{:?}", cfg.extraction.correlation).to_lowercase(),
            area_below_peak_v: ex.sweep.below_peak,
            area_above_peak_v: ex.sweep.above_peak,
            area_correlation: ex.sweep.correlation,
            cycles: parsed.records.len(),
            dropped_rows: parsed.dropped_rows,
            non_monotone_rows: parsed.non_monotone_rows,
        },
    )?;
    eprintln!(
        "extracted {} cycles; chosen indicator {}",
        parsed.records.len(),
        ex.chosen.label()
    );
    Ok(dir)
}

// ---- indicator tables ----

struct HiTable {
    index: Vec<u32>,
    soh: Vec<f64>,
    hi: Vec<f64>,
}

fn read_hi_table(path: &Path, column: &str) -> Result<HiTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let soh_col = find("soh").ok_or_else(|| anyhow!("{}: no `soh` column", path.display()))?;
    let hi_col = find(column).ok_or_else(|| {
        anyhow!(
            "{}: no `{column}` column (available: {})",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(", ")
        )
    })?;
    let idx_col = find("index").or_else(|| find("cycle")).or_else(|| find("month"));
    let mut t = HiTable {
        index: Vec::new(),
        soh: Vec::new(),
        hi: Vec::new(),
    };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: record {}", path.display(), line + 1))?;
        let num = |c: usize| -> Result<f64> {
            rec[c]
                .parse()
                .with_context(|| format!("{}: record {}: bad number `{}`", path.display(), line + 1, &rec[c]))
        };
        t.soh.push(num(soh_col)?);
        t.hi.push(num(hi_col)?);
        t.index.push(match idx_col {
            Some(c) => rec[c]
                .parse()
                .with_context(|| format!("{}: record {}: bad index", path.display(), line + 1))?,
            None => line as u32 + 1,
        });
    }
    ensure!(!t.soh.is_empty(), "{}: no data rows", path.display());
    Ok(t)
}

#[derive(Debug, Clone, clap::Args)]
pub struct SeriesArgs {
    /// Indicator table, e.g. `hi.csv` from `soh extract`.
    #[arg(long, value_name = "PATH")]
    pub hi_file: PathBuf,
    /// Column of the table used as the indicator.
    #[arg(long, value_name = "NAME", default_value = "hi")]
    pub column: String,
    /// Prediction starting point: fraction (0.25), percentage (25%) or index:N.
    #[arg(long, value_name = "SPLIT", value_parser = parse_split)]
    pub split: Option<SplitSpec>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Input window length.
    #[arg(long, value_name = "N")]
    pub window: Option<usize>,
}

fn write_report(dir: &RunDir, report: &PredictionReport, models: &[TrainedModel]) -> Result<()> {
    dir.csv(
        "predictions.csv",
        &["position", "index", "truth", "predicted"],
        report.points.iter().map(|p| {
            vec![
                p.position.to_string(),
                p.index.to_string(),
                p.truth.to_string(),
                p.predicted.to_string(),
            ]
        }),
    )?;
    let mut header = vec!["seed", "rmse", "mae", "mape"];
    header.extend(HYPERPARAMETER_NAMES);
    dir.csv(
        "seeds.csv",
        &header,
        report.runs.iter().map(|r| {
            let mut row = vec![
                r.seed.to_string(),
                r.metrics.rmse.to_string(),
                r.metrics.mae.to_string(),
                fmt_opt(r.metrics.mape),
            ];
            match HyperparameterSpace::default().position_of(&r.network, &r.training) {
                Ok(pos) => row.extend(pos.iter().map(f64::to_string)),
                Err(_) => row.extend(HYPERPARAMETER_NAMES.iter().map(|_| String::new())),
            }
            row
        }),
    )?;
    #[derive(Serialize)]
    struct Summary {
        label: String,
        split: String,
        fingerprint: String,
        seeds: Vec<String>,
        metrics: MetricsToml,
    }
    dir.toml(
        "summary.toml",
        &Summary {
            label: report.label.clone(),
            split: report.split.to_string(),
            fingerprint: report.fingerprint.clone(),
            seeds: report.runs.iter().map(|r| r.seed.to_string()).collect(),
            metrics: report.metrics.into(),
        },
    )?;
    let traced: Vec<_> = report
        .runs
        .iter()
        .filter_map(|r| Some((r.seed, r.tuning.as_ref()?)))
        .collect();
    if !traced.is_empty() {
        let mut header = vec!["seed", "iteration", "best_fitness"];
        header.extend(HYPERPARAMETER_NAMES);
        dir.csv(
            "ssa_history.csv",
            &header,
            traced.iter().flat_map(|(seed, t)| {
                t.history.iter().map(move |h| {
                    let mut row = vec![seed.to_string(), h.iteration.to_string(), h.best_fitness.to_string()];
                    row.extend(h.best_position.iter().map(f64::to_string));
                    row
                })
            }),
        )?;
    }
    for (i, (m, r)) in models.iter().zip(&report.runs).enumerate() {
        let path = dir.file(&format!("model-{i}.bin"));
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_network_annotated(
            &m.network,
            BufWriter::new(file),
            &[dir.header(), format!("seed {}", r.seed)],
        )
        .with_context(|| format!("writing {}", path.display()))?;
    }
    dir.toml(
        "runtime.toml",
        &Runtime {
            runtime_s: report.runtime_s,
        },
    )?;
    Ok(())
}

pub fn cmd_train(ctx: &Session, args: &TrainArgs, tune: bool) -> Result<RunDir> {
    let mut cfg = ctx.config.clone();
    if let Some(s) = args.series.split {
        cfg.experiment.split = s;
    }
    if let Some(w) = args.window {
        cfg.experiment.window_length = w;
    }
    validate(&cfg)?;
    let path = &args.series.hi_file;
    let table = read_hi_table(path, &args.series.column)?;
    let name = if tune { "hpo" } else { "train" };
    let mut m = RunManifest::new(name, &cfg);
    m.input("hi", path)?;
    m.option("column", &args.series.column);
    let exp = cfg.experiment_config(tune);
    let (report, models) =
        run_single_battery_with_models(&exp, &args.series.column, &table.index, &table.hi, &table.soh)?;
    let dir = RunDir::create(&ctx.out_root, &m)?;
    write_report(&dir, &report, &models)?;
    eprintln!(
        "{name}: {} seeds, split {}, mean rmse {:.6}, mae {:.6}",
        report.runs.len(),
        report.split,
        report.metrics.rmse,
        report.metrics.mae
    );
    Ok(dir)
}

// ---- predict ----

#[derive(Debug, Clone, clap::Args)]
pub struct PredictArgs {
    /// Serialized model; repeat to average several.
    #[arg(long = "model", value_name = "PATH", required = true)]
    pub models: Vec<PathBuf>,
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Predict every window instead of only the test region.
    #[arg(long)]
    pub all: bool,
}

pub fn cmd_predict(ctx: &Session, args: &PredictArgs) -> Result<RunDir> {
    let mut cfg = ctx.config.clone();
    if let Some(s) = args.series.split {
        cfg.experiment.split = s;
    }
    let mut m = RunManifest::new("predict", &cfg);
    let mut nets: Vec<Network> = Vec::new();
    for (i, p) in args.models.iter().enumerate() {
        ensure!(
            p.is_file(),
            "model file {} does not exist; train one with `soh train` or `soh hpo`",
            p.display()
        );
        nets.push(load_network(p).with_context(|| format!("loading model {}", p.display()))?);
        m.input(format!("model-{i}"), p)?;
    }
    let w = nets[0].spec.window_length;
    if let Some(bad) = nets.iter().position(|n| n.spec.window_length != w) {
        bail!(
            "model {} uses window {} but the first model uses {w}",
            args.models[bad].display(),
            nets[bad].spec.window_length
        );
    }
    let path = &args.series.hi_file;
    let table = read_hi_table(path, &args.series.column)?;
    m.input("hi", path)?;
    m.option("column", &args.series.column);
    m.option("all", args.all);
    let windows = if args.all {
        make_windows(&table.hi, &table.soh, w)?
    } else {
        let (_, test) = split_series(&table.hi, &table.soh, cfg.experiment.split)?;
        make_windows_in(&table.hi, &table.soh, w, test)?
    };
    let mut mean = vec![0.0; windows.len()];
    for n in &nets {
        for (acc, p) in mean.iter_mut().zip(predict(n, &windows.inputs)?) {
            *acc += p / nets.len() as f64;
        }
    }
    if let Some(p) = mean.iter().position(|v| !v.is_finite()) {
        bail!(
            "non-finite prediction for the window ending at position {}",
            windows.end_indices[p]
        );
    }
    let metrics = evaluate_metrics(&windows.targets, &mean)?;
    let dir = RunDir::create(&ctx.out_root, &m)?;
    dir.csv(
        "predictions.csv",
        &["position", "index", "truth", "predicted"],
        windows.end_indices.iter().enumerate().map(|(i, &pos)| {
            vec![
                pos.to_string(),
                table.index[pos].to_string(),
                windows.targets[i].to_string(),
                mean[i].to_string(),
            ]
        }),
    )?;
    #[derive(Serialize)]
    struct Summary {
        models: usize,
        windows: usize,
        region: String,
        metrics: MetricsToml,
    }
    dir.toml(
        "summary.toml",
        &Summary {
            models: nets.len(),
            windows: windows.len(),
            region: if args.all {
                "all".into()
            } else {
                cfg.experiment.split.to_string()
            },
            metrics: metrics.into(),
        },
    )?;
    eprintln!(
        "predicted {} windows with {} model(s): rmse {:.6}, mae {:.6}",
        windows.len(),
        nets.len(),
        metrics.rmse,
        metrics.mae
    );
    Ok(dir)
}

// ---- fleet ----

#[derive(Debug, Default, Clone, clap::Args)]
pub struct FleetArgs {
    /// Fleet charging log (delimited text with a header row).
    #[arg(long, value_name = "PATH")]
    pub fleet: Option<PathBuf>,
    /// Vehicle whose full history trains the model (default: first in the file).
    #[arg(long, value_name = "ID")]
    pub train_vehicle: Option<String>,
    /// Vehicle to predict; repeat for several (default: every other vehicle).
    #[arg(long = "test-vehicle", value_name = "ID")]
    pub test_vehicles: Vec<String>,
    /// Prediction starting month: index:N, a fraction or a percentage.
    #[arg(long, value_name = "SPLIT", value_parser = parse_split)]
    pub start: Option<SplitSpec>,
    /// Tune hyperparameters with sparrow search before the final training.
    #[arg(long)]
    pub tune: bool,
}

pub fn cmd_fleet(ctx: &Session, args: &FleetArgs) -> Result<RunDir> {
    let mut cfg = ctx.config.clone();
    if let Some(p) = &args.fleet {
        cfg.fleet.path = Some(p.clone());
    }
    if let Some(v) = &args.train_vehicle {
        cfg.fleet.train_vehicle = Some(v.clone());
    }
    if !args.test_vehicles.is_empty() {
        cfg.fleet.test_vehicles = args.test_vehicles.clone();
    }
    if let Some(s) = args.start {
        cfg.fleet.start = s;
    }
    let path = cfg.fleet.path.clone().ok_or_else(|| {
        UsageError("a fleet dataset is required: pass --fleet PATH or set fleet.path in the configuration".into())
    })?;
    validate(&cfg)?;
    let parsed = parse_fleet_file(&path, &cfg.fleet.schema).with_context(|| format!("reading {}", path.display()))?;
    let agg = monthly_aggregate(
        &parsed.segments,
        cfg.fleet.stat,
        cfg.fleet.min_events,
        cfg.fleet.min_soc_span,
    );
    let series = fleet_series(&agg, cfg.fleet.denominator)?;
    ensure!(!series.is_empty(), "{}: no vehicle has a usable month", path.display());
    let pick = |id: &str| {
        series.iter().find(|s| s.vehicle == id).cloned().ok_or_else(|| {
            let known: Vec<&str> = series.iter().map(|s| s.vehicle.as_str()).collect();
            anyhow!(
                "vehicle `{id}` has no usable monthly data in {} (available: {})",
                path.display(),
                known.join(", ")
            )
        })
    };
    let train = match &cfg.fleet.train_vehicle {
        Some(v) => pick(v)?,
        None => series[0].clone(),
    };
    let tests = if cfg.fleet.test_vehicles.is_empty() {
        series.iter().filter(|s| s.vehicle != train.vehicle).cloned().collect()
    } else {
        cfg.fleet
            .test_vehicles
            .iter()
            .map(|v| pick(v))
            .collect::<Result<Vec<_>>>()?
    };
    ensure!(!tests.is_empty(), "no test vehicles besides `{}`", train.vehicle);

    let mut m = RunManifest::new("fleet", &cfg);
    m.input("fleet", &path)?;
    m.option("tune", args.tune);
    let exp = cfg.fleet_experiment_config(args.tune);
    let reports = run_fleet(&train, &tests, cfg.fleet.start, &exp)?;
    let dir = RunDir::create(&ctx.out_root, &m)?;

    dir.csv(
        "monthly.csv",
        &["vehicle", "month", "events", "median_capacity", "mean_capacity"],
        agg.records.iter().map(|r| {
            vec![
                r.vehicle_id.clone(),
                r.month.to_string(),
                r.capacities.len().to_string(),
                r.median_capacity.to_string(),
                r.mean_capacity.to_string(),
            ]
        }),
    )?;
    dir.csv(
        "soh.csv",
        &["vehicle", "month", "soh"],
        series.iter().flat_map(|s| {
            s.months
                .iter()
                .zip(&s.soh)
                .map(|(m, v)| vec![s.vehicle.clone(), m.to_string(), v.to_string()])
        }),
    )?;
    dir.csv(
        "predictions.csv",
        &["vehicle", "position", "month", "truth", "predicted"],
        tests.iter().zip(&reports).flat_map(|(t, r)| {
            r.points.iter().map(|p| {
                vec![
                    t.vehicle.clone(),
                    p.position.to_string(),
                    p.index.to_string(),
                    p.truth.to_string(),
                    p.predicted.to_string(),
                ]
            })
        }),
    )?;
    dir.csv(
        "vehicles.csv",
        &["vehicle", "rmse", "mae", "mape"],
        tests.iter().zip(&reports).map(|(t, r)| {
            vec![
                t.vehicle.clone(),
                r.metrics.rmse.to_string(),
                r.metrics.mae.to_string(),
                fmt_opt(r.metrics.mape),
            ]
        }),
    )?;
    let per: Vec<Metrics> = reports.iter().map(|r| r.metrics).collect();
    let mean = mean_metrics(&per).ok_or_else(|| anyhow!("no fleet reports"))?;
    #[derive(Serialize)]
    struct Summary {
        train_vehicle: String,
        test_vehicles: usize,
        start: String,
        sparse_months: usize,
        rejected_segments: usize,
        cleaned_samples: usize,
        mean: MetricsToml,
        worst_rmse: f64,
    }
    dir.toml(
        "summary.toml",
        &Summary {
            train_vehicle: train.vehicle.clone(),
            test_vehicles: tests.len(),
            start: cfg.fleet.start.to_string(),
            sparse_months: agg.sparse_months.len(),
            rejected_segments: agg.rejected_segments,
            cleaned_samples: parsed.cleaned_samples,
            mean: mean.into(),
            worst_rmse: per.iter().map(|m| m.rmse).fold(0.0, f64::max),
        },
    )?;
    dir.toml(
        "runtime.toml",
        &Runtime {
            runtime_s: reports.iter().map(|r| r.runtime_s).fold(0.0, f64::max),
        },
    )?;
    eprintln!(
        "fleet: trained on {}, {} test vehicles, mean rmse {:.6}",
        train.vehicle,
        tests.len(),
        mean.rmse
    );
    Ok(dir)
}
