//! Nadaraya-Watson smooth backfitting on one draw of the logit design A.
//!
//! cargo run --release --example fit_model_a -- [n] [seed]

use vcsbf::sbf::{fit_sbf, SbfConfig};
use vcsbf::sim::{gen_model_a, paper_bandwidths, SimModel, TruthSpec};
use vcsbf::{build_group_view, KernelSpec, Normalizer};

fn main() -> vcsbf::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(500, |s| s.parse().expect("n"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));

    let truth = TruthSpec::model_a();
    let view = build_group_view(&truth.spec)?;
    let data = gen_model_a(n, seed);
    let kernel = KernelSpec::epanechnikov(paper_bandwidths(SimModel::A, n))?;
    let fit = fit_sbf(&data, &truth.spec, &view, &kernel, &SbfConfig::default())?;

    println!("converged: {} after {} outer steps", fit.converged, fit.outer_iterations());
    for (s, (c, r)) in fit.outer_criteria.iter().zip(&fit.residuals).enumerate() {
        println!("  step {:>2}: criterion {c:.3e}  residual {r:.3e}  inner sweeps {}", s + 1, fit.inner_sweeps[s]);
    }

    let normalizer = Normalizer::new(&truth.spec, &view, &fit.grids, &fit.bandwidths)?;
    let (target, _) = normalizer.normalize(&truth.tuple(&view, &fit.grids));
    println!("\n{:>5} {:>6} {:>9} {:>9}", "f", "z", "estimate", "truth");
    for c in &truth.components {
        let k = view.axis_of(c.l).unwrap();
        let slot = view.slot(k, c.j).unwrap();
        let est = fit.components.component(k, slot);
        let tru = target.component(k, slot);
        for g in (10..fit.grids[k].len()).step_by(20) {
            println!("{:>5} {:>6.2} {:>9.4} {:>9.4}", c.label, fit.grids[k].points()[g], est[g], tru[g]);
        }
    }
    println!("\nparametric part: {:?}", fit.parametric);
    Ok(())
}
