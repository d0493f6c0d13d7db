mod common;

use std::sync::OnceLock;

use proptest::prelude::*;

use vcsbf::sbf::{fit_sbf, fit_sbf_local_linear, standard_grids, FitResult, InnerConfig, SbfConfig};
use vcsbf::sim::{compute_metrics, gen_model_a, gen_model_b, TruthSpec};
use vcsbf::{build_group_view, normalized_kernel_matrix, FunctionTuple, Grid, Kernel, KernelSpec, Normalizer};

fn tuple_from(seed: &[f64], view: &vcsbf::GroupView, grids: &[Grid], ll: bool) -> FunctionTuple {
    let mut t = FunctionTuple::from_fn(view, grids, ll, |k, slot, z| {
        let a = seed[(3 * k + slot) % seed.len()];
        a * (1.0 + 3.0 * a * z).sin() + a * a * z
    });
    if ll {
        for k in 0..t.n_axes() {
            let d = t.group_size(k);
            let block = t.block_mut(k);
            for g in 0..block.ncols() {
                for s in 0..d {
                    block[(d + s, g)] = seed[(g + s) % seed.len()];
                }
            }
        }
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn normalization_is_idempotent_and_keeps_the_predictor(
        seed in prop::collection::vec(-2.0f64..2.0, 7),
        model_b in any::<bool>(),
        ll in any::<bool>(),
        xs in prop::collection::vec((0usize..41, 0usize..41, 0usize..2), 10),
    ) {
        let truth = if model_b { TruthSpec::model_b() } else { TruthSpec::model_a() };
        let view = build_group_view(&truth.spec).unwrap();
        let grids = standard_grids(41, view.n_axes()).unwrap();
        let h = vec![0.2; view.n_axes()];
        let norm = Normalizer::new(&truth.spec, &view, &grids, &h).unwrap();
        let raw = tuple_from(&seed, &view, &grids, ll);
        let (once, par) = norm.normalize(&raw);
        let (twice, par2) = norm.normalize(&once);
        prop_assert!(once.max_abs_diff(&twice) <= 1e-12);
        prop_assert!(par2.squared_norm().sqrt() <= 1e-12);
        prop_assert!(norm.constraint_violation(&once) <= 1e-10);
        prop_assert!(norm.measure(&once.sub(&twice)) <= 1e-24);

        let eval = |t: &FunctionTuple, x: &[f64], gs: &[usize]| -> f64 {
            let mut u = 0.0;
            for k in 0..view.n_axes() {
                for (slot, &j) in view.group(k).iter().enumerate() {
                    u += x[j] * t.value(k, slot, gs[k]);
                }
            }
            u
        };
        for &(a, b, x1) in &xs {
            let gs = [a, b];
            let mut x = vec![1.0, x1 as f64, 0.0, 0.0, 0.0];
            x.truncate(truth.spec.n_covariates());
            for k in 0..view.n_axes() {
                x[view.axis(k)] = grids[k].points()[gs[k]];
            }
            if model_b {
                x[2] = 0.37;
            }
            let before = eval(&raw, &x, &gs);
            let after = eval(&once, &x, &gs) + par.eval(&x);
            prop_assert!((before - after).abs() <= 1e-10 * (1.0 + before.abs()));
        }
    }

    #[test]
    fn kernel_rows_have_unit_mass(
        obs in prop::collection::vec(0.0f64..=1.0, 1..20),
        h in 0.02f64..0.5,
        size in 11usize..202,
    ) {
        let grid = Grid::uniform(size).unwrap();
        if let Ok(m) = normalized_kernel_matrix(&obs, &grid, h, Kernel::Epanechnikov) {
            for row in &m.rows {
                let dense: Vec<f64> = (0..size).map(|g| row.get(g)).collect();
                prop_assert!((grid.integrate(&dense) - 1.0).abs() <= 1e-12);
                prop_assert!(dense.iter().all(|v| *v >= 0.0));
            }
        }
    }
}

fn base_fits() -> &'static Vec<FitResult> {
    static CELL: OnceLock<Vec<FitResult>> = OnceLock::new();
    CELL.get_or_init(|| {
        let truth = TruthSpec::model_a();
        let view = build_group_view(&truth.spec).unwrap();
        let kernel = KernelSpec::epanechnikov(vec![0.4, 0.3]).unwrap();
        (0..4)
            .map(|s| fit_sbf(&gen_model_a(200, 40 + s), &truth.spec, &view, &kernel, &SbfConfig::default()).unwrap())
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn imse_splits_into_bias_and_variance(m in 2usize..8, shift in prop::collection::vec(-0.5f64..0.5, 8)) {
        let base = base_fits();
        let fits: Vec<FitResult> = (0..m)
            .map(|r| {
                let mut f = base[r % base.len()].clone();
                for k in 0..f.components.n_axes() {
                    let block = f.components.block_mut(k);
                    for v in block.iter_mut() {
                        *v += shift[(r + k) % shift.len()] * *v;
                    }
                }
                f
            })
            .collect();
        let table = compute_metrics(&fits, &TruthSpec::model_a(), 200).unwrap();
        for row in &table.rows {
            let iv = row.iv.unwrap();
            prop_assert!(row.isb >= 0.0 && iv >= 0.0);
            prop_assert!((row.imse - row.isb - iv).abs() <= 1e-12 * row.imse.max(1e-300));
        }
    }
}

#[test]
fn coarse_correction_keeps_the_fixed_point() {
    for (model, ll) in [("a", false), ("a", true), ("b", false)] {
        let (truth, data) = if model == "a" {
            (TruthSpec::model_a(), gen_model_a(400, 77))
        } else {
            (TruthSpec::model_b(), gen_model_b(400, 77))
        };
        let view = build_group_view(&truth.spec).unwrap();
        let kernel = KernelSpec::epanechnikov(vec![0.35; view.n_axes()]).unwrap();
        let fit = |coarse: bool| {
            let config = SbfConfig {
                outer_tol: 1e-10,
                inner: InnerConfig {
                    tol: 1e-10,
                    max_sweeps: 5000,
                    coarse_correction: coarse,
                    ..InnerConfig::default()
                },
                ..SbfConfig::default()
            };
            if ll {
                fit_sbf_local_linear(&data, &truth.spec, &view, &kernel, &config).unwrap()
            } else {
                fit_sbf(&data, &truth.spec, &view, &kernel, &config).unwrap()
            }
        };
        let (with, without) = (fit(true), fit(false));
        assert!(with.converged && without.converged, "{model} ll={ll}");
        let gap = with.components.max_abs_diff(&without.components);
        assert!(gap < 1e-6, "{model} ll={ll}: {gap}");
        let sweeps = |f: &FitResult| f.inner_sweeps.iter().sum::<usize>();
        assert!(sweeps(&with) <= sweeps(&without), "{model} ll={ll}");
    }
}
