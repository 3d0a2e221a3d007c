use rand::Rng;
use rand_distr::StandardNormal;

use soh_core::hiselect::{HiName, RankSelection};
use soh_core::ingest::{
    monthly_aggregate, parse_cycle_file, parse_fleet_file, CycleSchema, FleetSchema, MonthlyStat, SohDenominator,
    MIN_SOC_SPAN,
};
use soh_core::neuralnet::{make_windows_in, NetworkSpec, TrainingConfig};
use soh_core::pipeline::synth::{
    synthesize_cycles, synthesize_fleet, synthesize_hi_family, write_cycles, write_fleet, CycleSynthParams,
    FleetSynthParams,
};
use soh_core::pipeline::{
    ablation_variants, extract, fleet_series, run_fleet, run_hi_ablation, run_single_battery, split_series,
    train_region, ExperimentConfig, ExtractionConfig, SplitSpec,
};
use soh_core::seeding::rng_from;

fn small_config(window: usize, units: usize, epochs: usize, seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        split: SplitSpec::Fraction(0.25),
        network: NetworkSpec::dual_bigru(window, [units; 4], [0.02; 4]),
        training: TrainingConfig {
            max_epochs: epochs,
            lr_drop_period: epochs * 7 / 10,
            batch_size: 8,
            ..TrainingConfig::default()
        },
        tuning: None,
        seeds,
    }
}

fn identity_series(n: usize, noise: f64, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<u32>) {
    let mut rng = rng_from(seed);
    let soh: Vec<f64> = (0..n)
        .map(|i| 1.0 - 0.2 * (i as f64 / (n - 1) as f64).powf(1.2))
        .collect();
    let hi = soh
        .iter()
        .map(|s| s + noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (hi, soh, (1..=n as u32).collect())
}

#[test]
fn identity_indicator_predicts_within_noise_floor() {
    let (hi, soh, idx) = identity_series(100, 0.005, 11);
    let cfg = small_config(5, 12, 250, vec![1, 2, 3]);
    let report = run_single_battery(&cfg, "identity", &idx, &hi, &soh).unwrap();
    assert_eq!(report.runs.len(), 3);
    assert_eq!(report.points.len(), 75 - 4);
    assert!(report.metrics.rmse < 0.02, "rmse {}", report.metrics.rmse);
    assert!(report.metrics.rmse >= report.metrics.mae);
    for r in &report.runs {
        assert!(r.metrics.rmse >= r.metrics.mae && r.metrics.mae >= 0.0);
    }
}

#[test]
fn reports_are_reproducible_apart_from_runtime() {
    let (hi, soh, idx) = identity_series(40, 0.005, 2);
    let cfg = small_config(4, 6, 40, vec![5, 9]);
    let mut a = run_single_battery(&cfg, "x", &idx, &hi, &soh).unwrap();
    let mut b = run_single_battery(&cfg, "x", &idx, &hi, &soh).unwrap();
    a.runtime_s = 0.0;
    b.runtime_s = 0.0;
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    let other = run_single_battery(
        &ExperimentConfig {
            seeds: vec![6, 9],
            ..cfg
        },
        "x",
        &idx,
        &hi,
        &soh,
    )
    .unwrap();
    assert_ne!(a.fingerprint, other.fingerprint);
    assert_ne!(a.points, other.points);
}

#[test]
fn training_never_sees_the_test_region() {
    let (hi, soh, _) = identity_series(40, 0.005, 4);
    let cfg = small_config(4, 6, 30, vec![1]);
    let (train, _) = split_series(&hi, &soh, cfg.split).unwrap();
    let k = train.end;
    let full = train_region(&cfg, &hi, &soh, k, 7).unwrap();
    let mut poisoned_hi = hi.clone();
    let mut poisoned_soh = soh.clone();
    for v in poisoned_hi[k..].iter_mut().chain(poisoned_soh[k..].iter_mut()) {
        *v = 1e6;
    }
    let poisoned = train_region(&cfg, &poisoned_hi, &poisoned_soh, k, 7).unwrap();
    assert_eq!(full.network, poisoned.network);
    let truncated = train_region(&cfg, &hi[..k], &soh[..k], k, 7).unwrap();
    assert_eq!(full.network, truncated.network);
}

#[test]
fn test_windows_stay_inside_the_test_region() {
    let (hi, soh, idx) = identity_series(30, 0.0, 1);
    for split in [SplitSpec::Fraction(0.25), SplitSpec::Index(10)] {
        let (train, test) = split_series(&hi, &soh, split).unwrap();
        assert_eq!(train.end, test.start);
        let w = make_windows_in(&hi, &soh, 4, test.clone()).unwrap();
        for (inp, &end) in w.inputs.iter().zip(&w.end_indices) {
            assert!(end + 1 - inp.len() >= test.start);
        }
        let cfg = ExperimentConfig {
            split,
            ..small_config(4, 4, 5, vec![0])
        };
        let report = run_single_battery(&cfg, "w", &idx, &hi, &soh).unwrap();
        assert_eq!(report.points.first().unwrap().position, test.start + 3);
        assert_eq!(report.points.last().unwrap().position, 29);
    }
}

#[test]
fn degenerate_splits_are_rejected() {
    let (hi, soh, idx) = identity_series(20, 0.0, 1);
    for split in [SplitSpec::Fraction(0.01), SplitSpec::Index(20), SplitSpec::Index(18)] {
        let cfg = ExperimentConfig {
            split,
            ..small_config(4, 4, 5, vec![0])
        };
        assert!(run_single_battery(&cfg, "d", &idx, &hi, &soh).is_err(), "{split}");
    }
}

#[test]
fn ablation_ranks_the_tracking_indicator_first() {
    let fam = synthesize_hi_family(60, 0.05, 3).unwrap();
    let picks: Vec<_> = fam
        .candidates
        .iter()
        .filter(|c| matches!(c.name, HiName::Mf | HiName::Pf))
        .cloned()
        .collect();
    let variants = ablation_variants(&picks, RankSelection::default()).unwrap();
    let idx: Vec<u32> = (1..=60).collect();
    let cfg = small_config(4, 8, 120, vec![1, 2]);
    let table = run_hi_ablation(&variants, &fam.soh, &idx, &[SplitSpec::Fraction(0.25)], &cfg).unwrap();
    assert_eq!(table.len(), 1);
    let labels: Vec<&str> = table[0].reports.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels.len(), 4);
    assert!(labels[0].starts_with("MF"), "{labels:?}");
    let rmses: Vec<f64> = table[0].reports.iter().map(|r| r.metrics.rmse).collect();
    assert!(rmses.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn fleet_self_consistency() {
    let params = FleetSynthParams {
        vehicles: 2,
        months: 24,
        ..FleetSynthParams::default()
    };
    let fleet = synthesize_fleet(&params, 8).unwrap();
    let agg = monthly_aggregate(&fleet.segments, MonthlyStat::Median, 3, MIN_SOC_SPAN);
    let series = fleet_series(&agg, SohDenominator::First).unwrap();
    assert_eq!(series.len(), 2);
    assert_eq!(series[0].months, (1..=24).collect::<Vec<u32>>());
    let cfg = small_config(4, 8, 200, vec![1, 2]);
    let reports = run_fleet(&series[0], &series[..1], SplitSpec::Index(2), &cfg).unwrap();
    assert_eq!(reports.len(), 1);
    assert!(reports[0].metrics.rmse < 0.005, "rmse {}", reports[0].metrics.rmse);
}

#[test]
fn synthetic_files_round_trip_through_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let cp = CycleSynthParams {
        cycles: 12,
        ..CycleSynthParams::default()
    };
    let cycles = synthesize_cycles(&cp, 5).unwrap();
    let cpath = dir.path().join("cycles.csv");
    write_cycles(&cpath, &cycles, cp.current_a, &["manifest abc".to_string()]).unwrap();
    let schema = CycleSchema {
        capacity: Some("capacity".into()),
        ..CycleSchema::default()
    };
    let parsed = parse_cycle_file(&cpath, &schema).unwrap();
    assert_eq!(parsed.records.len(), 12);
    for (a, b) in parsed.records.iter().zip(&cycles.records) {
        assert_eq!(a.cycle_index, b.cycle_index);
        assert!((a.measured_capacity - b.measured_capacity).abs() < 1e-6);
        assert_eq!(a.charge_curve.len(), b.charge_curve.len());
    }
    let ex = extract(&parsed.records, &ExtractionConfig::default()).unwrap();
    assert_eq!(ex.chosen.values.len(), 12);
    assert_eq!(ex.soh.index, (1..=12).collect::<Vec<u32>>());

    let fp = FleetSynthParams {
        vehicles: 2,
        months: 3,
        ..FleetSynthParams::default()
    };
    let fleet = synthesize_fleet(&fp, 5).unwrap();
    let fpath = dir.path().join("fleet.csv");
    write_fleet(&fpath, &fleet, &[]).unwrap();
    let schema = FleetSchema {
        temperature: Some("temperature".into()),
        ..FleetSchema::default()
    };
    let parsed = parse_fleet_file(&fpath, &schema).unwrap();
    assert_eq!(parsed.segments.len(), fleet.segments.len());
    let a = monthly_aggregate(&parsed.segments, MonthlyStat::Median, 1, MIN_SOC_SPAN);
    let b = monthly_aggregate(&fleet.segments, MonthlyStat::Median, 1, MIN_SOC_SPAN);
    for v in b.vehicles() {
        for ((ma, ca), (mb, cb)) in a.series(v).iter().zip(b.series(v)) {
            assert_eq!(*ma, mb);
            assert!((ca - cb).abs() / cb < 1e-6);
        }
    }
}
