//! Plug-in bandwidth selection with a polynomial pilot, next to the same
//! selector fed the true functions.
//!
//! cargo run --release --example bandwidth_plugin -- [seed] [pilot degree]

use vcsbf::bandwidth::{select_bandwidths, select_with_pilot, PlugIn, SelectionConfig};
use vcsbf::sim::{gen_model_a, truth_pilot, TruthSpec};
use vcsbf::build_group_view;

fn main() -> vcsbf::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let degree: u32 = args.next().map_or(3, |s| s.parse().expect("degree"));

    let truth = TruthSpec::model_a();
    let view = build_group_view(&truth.spec)?;
    let data = gen_model_a(500, seed);
    let config = SelectionConfig { pilot_degree: degree, ..SelectionConfig::default() };

    let sel = select_bandwidths(&data, &truth.spec, &view, &config)?;
    for k in 0..view.n_axes() {
        println!(
            "axis x{}: c = {:.4}, h = {:.4}{}",
            view.axis(k) + 1,
            sel.constants[k],
            sel.bandwidths[k],
            if sel.at_upper_bound[k] { " (at upper bound)" } else { "" }
        );
    }
    let (bias, var) = sel.plugin.objective_parts(&sel.constants);
    println!("objective {:.5e} = bias {bias:.5e} + variance {var:.5e}", sel.objective);

    let plugin: &PlugIn = &sel.plugin;
    println!("variance scales as 1/c: Sigma(2c)/Sigma(c) = {:.6}", {
        let a = plugin.sigma(0, 0.5)[50][(0, 0)];
        let b = plugin.sigma(0, 1.0)[50][(0, 0)];
        b / a
    });

    let oracle = truth_pilot(&truth, &data, config.grid_size)?;
    let sel = select_with_pilot(&data, &truth.spec, &view, oracle, &config)?;
    println!("with the true functions as pilot: h = {:.4?}", sel.bandwidths);
    Ok(())
}
