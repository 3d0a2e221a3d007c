use proptest::prelude::*;
use soh_core::neuralnet::TrainingConfig;
use soh_core::seeding::rng_from;
use soh_core::ssa::*;

fn sphere(x: &[f64]) -> soh_core::Result<f64> {
    Ok(x.iter().map(|v| v * v).sum())
}

fn sphere_config(seed: u64) -> SsaConfig {
    SsaConfig {
        pop_size: 20,
        max_iter: 100,
        seed,
        ..SsaConfig::default()
    }
}

#[test]
fn sphere_converges_for_most_seeds() {
    let space = SearchSpace::uniform(5, -5.0, 5.0).unwrap();
    let bests: Vec<f64> = (0..10)
        .map(|seed| optimize(&space, &sphere_config(seed), sphere).unwrap().best.fitness)
        .collect();
    let hits = bests.iter().filter(|b| **b < 1e-2).count();
    assert!(hits >= 9, "{bests:?}");
}

#[test]
fn constant_fitness_gives_flat_history() {
    let space = SearchSpace::uniform(3, 0.0, 1.0).unwrap();
    let out = optimize(&space, &SsaConfig::default(), |_| Ok(2.5)).unwrap();
    assert_eq!(out.history.len(), 11);
    assert!(out.history.iter().all(|h| h.best_fitness == 2.5));
    assert!(space.contains(&out.best.position));
}

#[test]
fn same_seed_same_history() {
    let space = SearchSpace::uniform(4, -3.0, 3.0).unwrap();
    let a = optimize(&space, &sphere_config(5), sphere).unwrap();
    let b = optimize(&space, &sphere_config(5), sphere).unwrap();
    assert_eq!(a, b);
}

#[test]
fn initial_population_is_sorted_and_inside() {
    let space = SearchSpace::uniform(5, -5.0, 5.0).unwrap();
    let cfg = sphere_config(1);
    let pop = initialize_population(&space, &cfg, &mut rng_from(9), &sphere);
    assert_eq!(pop.len(), 20);
    assert!(pop.windows(2).all(|w| w[0].fitness <= w[1].fitness));
    assert!(pop.iter().all(|s| space.contains(&s.position)));
    let mean = pop.iter().map(|s| s.fitness).sum::<f64>() / pop.len() as f64;
    assert!(pop[0].fitness <= mean);
    let again = initialize_population(&space, &cfg, &mut rng_from(9), &sphere);
    assert_eq!(pop, again);
}

#[test]
fn integer_dimensions_are_rounded_at_evaluation() {
    let h = HyperparameterSpace::default();
    let space = h.encode().unwrap();
    let out = optimize(&space, &SsaConfig::default(), |p| {
        for (x, d) in p.iter().zip(&space.dims) {
            if d.kind == DimKind::Integer && x.fract() != 0.0 {
                return Ok(f64::INFINITY);
            }
        }
        Ok(p[0] + p[5])
    })
    .unwrap();
    assert!(out.best.fitness.is_finite());
}

#[test]
fn reference_epochs_give_reference_drop_period() {
    let h = HyperparameterSpace::default();
    let mut pos: Vec<f64> = h.encode().unwrap().dims.iter().map(|d| d.upper).collect();
    pos[4] = 500.0;
    let (spec, cfg) = h.decode(&pos, 5, &TrainingConfig::default()).unwrap();
    assert_eq!(cfg.lr_drop_period, 350);
    assert_eq!(spec.layers[0].forward_units, 200);
    assert_eq!(cfg.batch_size, 20);
    assert_eq!(spec.layers[1].backward_dropout, 0.2);
    assert_eq!(cfg.learning_rate, 0.015);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn history_monotone_and_bounds_hold(seed in any::<u64>(), shift in -2.0f64..2.0) {
        let space = SearchSpace::new(vec![
            Dimension { lower: -4.0, upper: 1.0, kind: DimKind::Continuous },
            Dimension { lower: 0.0, upper: 9.0, kind: DimKind::Integer },
            Dimension { lower: 2.0, upper: 3.0, kind: DimKind::Continuous },
        ]).unwrap();
        let cfg = SsaConfig { pop_size: 8, max_iter: 15, seed, ..SsaConfig::default() };
        let out = optimize(&space, &cfg, |x| {
            assert_eq!(x[1].fract(), 0.0);
            Ok(x.iter().map(|v| (v - shift).powi(2)).sum())
        }).unwrap();
        for w in out.history.windows(2) {
            prop_assert!(w[1].best_fitness <= w[0].best_fitness);
        }
        for h in &out.history {
            prop_assert!(space.contains(&h.best_position));
        }
    }

    #[test]
    fn update_rules_respect_bounds(seed in any::<u64>(), t in 1usize..10) {
        let space = SearchSpace::uniform(4, -1.0, 2.0).unwrap();
        let cfg = SsaConfig { pop_size: 10, ..SsaConfig::default() };
        let mut rng = rng_from(seed);
        let mut pop: Vec<Sparrow> = (0..10)
            .map(|i| Sparrow { position: space.sample(&mut rng), fitness: i as f64 })
            .collect();
        let mut draws = RngDraws(rng_from(seed ^ 0x5a));
        let worst = pop[9].clone();
        let best = pop[0].clone();
        update_producers(&mut pop, t, &space, &cfg, &mut draws);
        update_scroungers(&mut pop, &best.position, &worst.position, &space, &cfg, &mut draws);
        update_warners(&mut pop, &best, &worst, &space, &cfg, &mut draws);
        for s in &pop {
            prop_assert!(space.contains(&s.position));
        }
    }

    #[test]
    fn decoded_specs_are_valid(seed in any::<u64>()) {
        let h = HyperparameterSpace::default();
        let space = h.encode().unwrap();
        let pos = space.sample(&mut rng_from(seed));
        let (spec, cfg) = h.decode(&pos, 5, &TrainingConfig::default()).unwrap();
        prop_assert!(spec.validate().is_ok());
        prop_assert!(cfg.validate().is_ok());
        let back = h.position_of(&spec, &cfg).unwrap();
        prop_assert_eq!(h.decode(&back, 5, &TrainingConfig::default()).unwrap(), (spec, cfg));
    }
}
