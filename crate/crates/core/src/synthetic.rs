//! Seeded synthetic knob spaces and workloads for benchmarks and tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config_space::{ConfigSpace, KnobSpec, Scale};
use crate::workload::{Query, Workload};

const TABLES: [&str; 8] = ["orders", "lineitem", "customer", "part", "supplier", "nation", "region", "partsupp"];
const COLUMNS: [&str; 12] = [
    "price", "qty", "date", "status", "name", "key", "discount", "comment", "brand", "size", "type", "segment",
];

/// `n_knobs` knobs cycling through linear continuous, log integer, log
/// continuous and categorical domains. Defaults sit away from the bounds.
pub fn synthetic_space(n_knobs: usize, seed: u64) -> ConfigSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut knobs = Vec::with_capacity(n_knobs);
    for k in 0..n_knobs {
        let name = format!("knob_{k:02}");
        let u: f64 = rng.gen_range(0.2..0.8);
        let knob = match k % 4 {
            0 => {
                let knob = KnobSpec::continuous(&name, 0.0, 1.0, 0.0, Scale::Linear).unwrap();
                let default = knob.from_unit(u).as_number().unwrap();
                KnobSpec::continuous(&name, 0.0, 1.0, default, Scale::Linear)
            }
            1 => {
                let max = 1i64 << rng.gen_range(10..17);
                let probe = KnobSpec::integer(&name, 1, max, 1, Scale::Log).unwrap();
                let default = probe.from_unit(u).as_number().unwrap() as i64;
                KnobSpec::integer(&name, 1, max, default, Scale::Log)
            }
            2 => {
                let probe = KnobSpec::continuous(&name, 0.01, 100.0, 1.0, Scale::Log).unwrap();
                let default = probe.from_unit(u).as_number().unwrap();
                KnobSpec::continuous(&name, 0.01, 100.0, default, Scale::Log)
            }
            _ => {
                let n = rng.gen_range(2..=4);
                let labels: Vec<String> = (0..n).map(|i| format!("mode{i}")).collect();
                let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
                let default = refs[rng.gen_range(0..n)];
                KnobSpec::categorical(&name, &refs, default)
            }
        };
        knobs.push(knob.expect("synthetic knob is valid"));
    }
    ConfigSpace::new(knobs).expect("synthetic knob names are unique")
}

/// `n_queries` SQL-flavored queries with log-uniform default costs in
/// `[0.3, 30]` seconds.
pub fn synthetic_workload(n_queries: usize, seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0071_ab1e);
    let queries = (0..n_queries)
        .map(|i| {
            let n_tables = rng.gen_range(1..=3);
            let tables: Vec<&str> = TABLES.choose_multiple(&mut rng, n_tables).copied().collect();
            let n_cols = rng.gen_range(1..=4);
            let cols: Vec<&str> = COLUMNS.choose_multiple(&mut rng, n_cols).copied().collect();
            let text = format!(
                "select {} from {} where {} > {}",
                cols.join(", "),
                tables.join(" join "),
                cols[0],
                rng.gen_range(0..100)
            );
            let default_cost = 10f64.powf(rng.gen_range(-0.5..1.5));
            Query {
                id: format!("q{i:03}"),
                text,
                default_cost,
            }
        })
        .collect();
    Workload::new(queries).expect("synthetic workload is valid")
}
