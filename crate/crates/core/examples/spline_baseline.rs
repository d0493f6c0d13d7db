//! Cubic regression-spline sieve fit, compared with smooth backfitting.
//!
//! cargo run --release --example spline_baseline -- [knots]

use vcsbf::sbf::{fit_sbf, SbfConfig};
use vcsbf::sieve::fit_spline;
use vcsbf::sim::{gen_model_a, paper_bandwidths, SimModel, TruthSpec};
use vcsbf::{build_group_view, KernelSpec, Normalizer};

fn main() -> vcsbf::Result<()> {
    let knots: usize = std::env::args().nth(1).map_or(1, |s| s.parse().expect("knots"));
    let truth = TruthSpec::model_a();
    let view = build_group_view(&truth.spec)?;
    let data = gen_model_a(500, 3);

    let spline = fit_spline(&data, &truth.spec, &view, knots, 101)?;
    let kernel = KernelSpec::epanechnikov(paper_bandwidths(SimModel::A, 500))?;
    let sbf = fit_sbf(&data, &truth.spec, &view, &kernel, &SbfConfig::default())?;
    println!("spline with {knots} interior knot(s), warnings: {:?}", spline.warnings);

    let normalizer = Normalizer::new(&truth.spec, &view, &sbf.grids, &sbf.bandwidths)?;
    let (target, _) = normalizer.normalize(&truth.tuple(&view, &sbf.grids));
    println!("{:>5} {:>12} {:>12}", "f", "ISE spline", "ISE sbf");
    for c in &truth.components {
        let k = view.axis_of(c.l).unwrap();
        let slot = view.slot(k, c.j).unwrap();
        let t = target.component(k, slot);
        let ise = |est: Vec<f64>| {
            let d: Vec<f64> = est.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).collect();
            sbf.grids[k].integrate(&d)
        };
        println!(
            "{:>5} {:>12.4} {:>12.4}",
            c.label,
            ise(spline.components.component(k, slot)),
            ise(sbf.components.component(k, slot))
        );
    }
    Ok(())
}
