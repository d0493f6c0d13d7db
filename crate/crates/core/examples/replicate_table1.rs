//! Monte Carlo study on design A: NW backfitting and the spline baseline at
//! n = 500 and 1000, written as CSV files.
//!
//! cargo run --release --example replicate_table1 -- [reps] [out dir]

use vcsbf::sbf::EstimatorKind;
use vcsbf::sim::{run_experiment, ExperimentConfig, SimModel};

fn main() -> vcsbf::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps: usize = args.next().map_or(100, |s| s.parse().expect("reps"));
    let out = args.next().unwrap_or_else(|| "table1-out".into());

    let mut config = ExperimentConfig::new(
        SimModel::A,
        vec![EstimatorKind::Nw, EstimatorKind::Spline],
        vec![500, 1000],
        reps,
    );
    config.base_seed = 1000;
    let report = run_experiment(&config)?;
    report.write(&out)?;
    print!("{}", report.metrics_csv());
    for cell in &report.cells {
        let mut outer = cell.outer_iterations();
        outer.sort_unstable();
        println!(
            "{} n={}: median outer steps {}, max inner ratio {:.3}, {:.1}s",
            cell.kind.name(),
            cell.n,
            outer.get(outer.len() / 2).copied().unwrap_or(0),
            cell.max_inner_ratio().unwrap_or(f64::NAN),
            cell.seconds
        );
    }
    println!("tables written to {out}/");
    Ok(())
}
