mod common;

use common::{small_space, workload};
use knobtune::config_space::{
    gower_distance, sample_lhs, ConfigId, ConfigSpace, Configuration, KnobSpec, KnobValue, Scale,
};
use knobtune::executor::{penalty_for, EvalOutcome, SimExecutor};
use knobtune::history::RunHistory;
use knobtune::session::{run_session, Method, SessionConfig};
use knobtune::synthetic::{synthetic_space, synthetic_workload};
use knobtune::trace::{read_trace, write_trace, TraceEvent, TraceRecord};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn method() -> impl Strategy<Value = Method> {
    prop_oneof![
        Just(Method::Water),
        Just(Method::Original),
        Just(Method::FixedRandom),
        Just(Method::FixedCoverage),
    ]
}

fn quick_session(method: Method, seed: u64, fulls: f64) -> (f64, f64, Vec<TraceRecord>) {
    let space = synthetic_space(4, seed);
    let w = synthetic_workload(8, seed);
    let mut cfg = SessionConfig::new(method, seed).with_budget_s(fulls * w.total_cost());
    cfg.tuner.random_candidates = 100;
    cfg.tuner.forest.n_trees = 10;
    let out = run_session(&cfg, space.clone(), w.clone(), Box::new(SimExecutor::from_seed(&w, &space, seed)), None)
        .unwrap();
    (out.report.elapsed_s, w.total_cost(), out.trace)
}

/// Sparse matrix `[query][config]` of continuous latencies (ties have probability zero).
fn matrix() -> impl Strategy<Value = Vec<Vec<Option<f64>>>> {
    (1usize..6, 0usize..8).prop_flat_map(|(nq, nc)| {
        prop::collection::vec(
            prop::collection::vec(prop::option::weighted(0.8, 0.1f64..10.0), nc),
            nq,
        )
    })
}

fn history(m: &[Vec<Option<f64>>], config_order: &[usize]) -> RunHistory {
    let mut h = RunHistory::new(m.len());
    for &c in config_order {
        let config = Configuration {
            id: ConfigId(c as u32),
            values: vec![KnobValue::Number(c as f64)],
        };
        h.register(&config).unwrap();
        for (q, row) in m.iter().enumerate() {
            if let Some(l) = row[c] {
                h.record(q, config.id, l).unwrap();
            }
        }
    }
    h
}

fn numeric_space() -> ConfigSpace {
    ConfigSpace::new(vec![
        KnobSpec::continuous("lin", -5.0, 5.0, 0.0, Scale::Linear).unwrap(),
        KnobSpec::continuous("log", 0.01, 100.0, 1.0, Scale::Log).unwrap(),
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn sessions_overshoot_budget_by_at_most_one_run(m in method(), seed in 0u64..1000, fulls in 2.0f64..6.0) {
        let (elapsed, full_cost, trace) = quick_session(m, seed, fulls);
        let budget = fulls * full_cost;
        // Only the run in flight when the budget runs out may cross it, and no
        // run is charged more than the full-workload penalty.
        prop_assert!(elapsed <= budget + 2.0 * full_cost + 1e-9);
        prop_assert!(trace.windows(2).all(|w| w[0].elapsed_s <= w[1].elapsed_s));
        prop_assert!(trace.windows(2).all(|w| w[1].best_full_latency_s <= w[0].best_full_latency_s));
        let before_last = trace.iter().rev().nth(1).map_or(0.0, |r| r.elapsed_s);
        prop_assert!(before_last < budget);
    }

    #[test]
    fn sessions_are_deterministic(m in method(), seed in 0u64..1000) {
        let (_, _, a) = quick_session(m, seed, 3.0);
        let (_, _, b) = quick_session(m, seed, 3.0);
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #[test]
    fn representativity_is_a_ratio(m in matrix(), mask in any::<u8>()) {
        let h = history(&m, &(0..m[0].len()).collect::<Vec<_>>());
        let full: Vec<usize> = (0..m.len()).collect();
        let mut sub: Vec<usize> = full.iter().copied().filter(|q| mask & (1 << q) != 0).collect();
        if sub.is_empty() { sub.push(0); }
        let r = h.representativity(&sub, &full);
        prop_assert!((0.0..=1.0).contains(&r));
        let expected = if h.fully_covered_configs(&full).len() < 2 { 0.5 } else { 1.0 };
        prop_assert_eq!(h.representativity(&full, &full), expected);
    }

    #[test]
    fn representativity_ignores_config_order(m in matrix(), mask in any::<u8>(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let nc = m[0].len();
        let mut order: Vec<usize> = (0..nc).collect();
        let a = history(&m, &order);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = history(&m, &order);
        let full: Vec<usize> = (0..m.len()).collect();
        let mut sub: Vec<usize> = full.iter().copied().filter(|q| mask & (1 << q) != 0).collect();
        if sub.is_empty() { sub.push(0); }
        prop_assert_eq!(a.representativity(&sub, &full), b.representativity(&sub, &full));
    }

    #[test]
    fn lhs_is_stratified_on_every_numeric_knob(n in 1usize..40, seed in any::<u64>()) {
        let space = numeric_space();
        let sample = sample_lhs(&space, n, seed);
        prop_assert_eq!(sample.len(), n);
        for (k, knob) in space.knobs().iter().enumerate() {
            let mut units: Vec<f64> = sample.iter().map(|s| knob.to_unit(&s[k]).unwrap()).collect();
            units.sort_by(f64::total_cmp);
            for (i, u) in units.iter().enumerate() {
                let lo = i as f64 / n as f64 - 1e-9;
                let hi = (i + 1) as f64 / n as f64 + 1e-9;
                prop_assert!(*u >= lo && *u <= hi, "knob {} point {} at {} outside stratum", k, i, u);
            }
        }
    }

    #[test]
    fn gower_is_a_bounded_symmetric_distance(s1 in any::<u64>(), s2 in any::<u64>()) {
        let space = small_space();
        let a = space.sample_uniform(&mut ChaCha8Rng::seed_from_u64(s1));
        let b = space.sample_uniform(&mut ChaCha8Rng::seed_from_u64(s2));
        let d = gower_distance(&a, &b, &space);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, gower_distance(&b, &a, &space));
        prop_assert_eq!(gower_distance(&a, &a, &space), 0.0);
    }

    #[test]
    fn penalty_is_twice_the_default_cost(costs in prop::collection::vec(0.01f64..50.0, 1..10), mask in any::<u16>()) {
        let w = workload(&costs);
        let mut qs: Vec<usize> = (0..costs.len()).filter(|q| mask & (1 << q) != 0).collect();
        if qs.is_empty() { qs.push(0); }
        let expected = 2.0 * qs.iter().map(|&q| costs[q]).sum::<f64>();
        let p = penalty_for(&w, &qs);
        prop_assert_eq!(p, expected);
        prop_assert_eq!(EvalOutcome::Failed { penalized_total: p }.charged(), p);
        prop_assert_eq!(EvalOutcome::Timeout { penalized_total: p }.charged(), p);
    }

    #[test]
    fn history_survives_save_and_load(m in matrix(), retire in any::<u8>()) {
        let nc = m[0].len();
        let costs: Vec<f64> = (0..m.len()).map(|q| q as f64 + 1.0).collect();
        let w = workload(&costs);
        let space = ConfigSpace::new(vec![KnobSpec::continuous("x", 0.0, 100.0, 0.0, Scale::Linear).unwrap()]).unwrap();
        let mut h = history(&m, &(0..nc).collect::<Vec<_>>());
        for c in 0..nc {
            if retire & (1 << c) != 0 {
                h.retire(ConfigId(c as u32)).unwrap();
            }
        }
        if nc > 0 {
            h.set_default_config(ConfigId(0)).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        h.save(dir.path(), &w, &space).unwrap();
        let back = RunHistory::load(dir.path(), &w, &space).unwrap();
        prop_assert_eq!(back.configs(), h.configs());
        prop_assert_eq!(back.default_config(), h.default_config());
        for c in h.configs() {
            prop_assert_eq!(back.is_retired(c.id), h.is_retired(c.id));
            for q in 0..m.len() {
                prop_assert_eq!(back.get(q, c.id), h.get(q, c.id));
            }
        }
    }

    #[test]
    fn traces_survive_csv(rows in prop::collection::vec((0.0f64..1e6, prop::option::of(0.001f64..1e6), 0usize..5, any::<u32>()), 0..30)) {
        let events = [TraceEvent::Default, TraceEvent::Lhs, TraceEvent::SubsetEval, TraceEvent::Backfill, TraceEvent::Verify];
        let records: Vec<TraceRecord> = rows
            .into_iter()
            .map(|(t, best, e, id)| TraceRecord {
                elapsed_s: t,
                best_full_latency_s: best.unwrap_or(f64::INFINITY),
                event: events[e],
                config_id: ConfigId(id),
            })
            .collect();
        let mut buf = Vec::new();
        write_trace(&records, &mut buf).unwrap();
        prop_assert_eq!(read_trace(buf.as_slice()).unwrap(), records);
    }
}
