//! Local design diagnostics: tiny bandwidths on a small sample leave grid
//! points with no kernel mass or a near-singular local design.
//!
//! cargo run --example check_design

use vcsbf::model::DESIGN_EIGEN_THRESHOLD;
use vcsbf::sim::{gen_model_a, TruthSpec};
use vcsbf::{build_group_view, check_design, Grid};

fn main() -> vcsbf::Result<()> {
    let truth = TruthSpec::model_a();
    let view = build_group_view(&truth.spec)?;
    let grid = Grid::uniform(101)?;
    for (n, h) in [(500, 0.3), (40, 0.3), (40, 0.02)] {
        let data = gen_model_a(n, 11);
        let report = check_design(&data, &truth.spec, &view, &[h], &grid, DESIGN_EIGEN_THRESHOLD)?;
        println!(
            "n = {n:>3}, h = {h:.2}: min eigenvalue {:.3e}, {} flagged, {} empty -> {}",
            report.minimum().unwrap_or(f64::NAN),
            report.flagged().len(),
            report.undefined().len(),
            if report.passes() { "ok" } else { "refit with larger h" }
        );
    }
    Ok(())
}
