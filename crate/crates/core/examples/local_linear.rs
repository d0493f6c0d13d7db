//! Local-linear smooth backfitting; prints levels next to slope estimates.
//!
//! cargo run --release --example local_linear

use vcsbf::sbf::{fit_sbf, fit_sbf_local_linear, SbfConfig};
use vcsbf::sim::{gen_model_a, paper_bandwidths, SimModel, TruthSpec};
use vcsbf::{build_group_view, KernelSpec};

fn main() -> vcsbf::Result<()> {
    let truth = TruthSpec::model_a();
    let view = build_group_view(&truth.spec)?;
    let data = gen_model_a(1000, 7);
    let kernel = KernelSpec::epanechnikov(paper_bandwidths(SimModel::A, 1000))?;
    let config = SbfConfig::default();
    let ll = fit_sbf_local_linear(&data, &truth.spec, &view, &kernel, &config)?;
    let nw = fit_sbf(&data, &truth.spec, &view, &kernel, &config)?;
    println!("LL converged {} in {} steps; NW in {}", ll.converged, ll.outer_iterations(), nw.outer_iterations());

    // f_{13}(z) = cos(2 pi z) has slope -2 pi sin(2 pi z).
    let (j, l) = (1, 3);
    let grid = &ll.grids[view.axis_of(l).unwrap()];
    let level = ll.component(j, l).unwrap();
    let slope = ll.slope(j, l).unwrap();
    let nw_level = nw.component(j, l).unwrap();
    println!("{:>6} {:>9} {:>9} {:>9} {:>9}", "z", "LL", "NW", "slope", "true slope");
    for g in (0..grid.len()).step_by(10) {
        let z = grid.points()[g];
        let s = -2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * z).sin();
        println!("{z:>6.2} {:>9.4} {:>9.4} {:>9.3} {s:>9.3}", level[g], nw_level[g], slope[g]);
    }
    Ok(())
}
