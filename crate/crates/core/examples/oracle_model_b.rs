//! Design B: the full working model against the oracle that knows which
//! coefficient functions vanish.
//!
//! cargo run --release --example oracle_model_b -- [reps]

use vcsbf::sbf::EstimatorKind;
use vcsbf::sim::{run_experiment, ExperimentConfig, SimModel};

fn main() -> vcsbf::Result<()> {
    let reps: usize = std::env::args().nth(1).map_or(20, |s| s.parse().expect("reps"));
    let mut config = ExperimentConfig::new(SimModel::B, vec![EstimatorKind::Nw, EstimatorKind::Oracle], vec![500], reps);
    config.base_seed = 2000;
    let report = run_experiment(&config)?;
    for cell in &report.cells {
        let table = cell.metrics.as_ref().expect("metrics");
        println!("{} ({} fits, {:.1}s)", cell.kind.name(), cell.fits.len(), cell.seconds);
        for row in &table.rows {
            println!("  {:>4}: IMSE {:.4}  ISB {:.4}  IV {:.4}", row.label, row.imse, row.isb, row.iv.unwrap_or(f64::NAN));
        }
    }
    Ok(())
}
