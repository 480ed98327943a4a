use nalgebra::DMatrix;
use proptest::prelude::*;

use svem::enet::{fit_path, Family, PathOptions};
use svem::expand::{build_expansion_spec, expand_rows, Coding};
use svem::lnp::{generate_lnp, lnp_expansion_settings, lnp_mixture, LnpOptions};
use svem::optimize::{desirability, geometric_score, pam, sample_candidates, GoalKind};
use svem::rng::substream;
use svem::simulate::{make_lhs_design, settings_for_order};
use svem::svem::{frw_from_uniforms, kish_neff};
use svem::wmt::{multipliers, permutation_p_value};

fn medoid_cost(d: &[f64], m: usize, meds: &[usize]) -> f64 {
    (0..m)
        .map(|i| meds.iter().map(|&c| d[i * m + c]).fold(f64::INFINITY, f64::min))
        .sum()
}

fn best_cost(d: &[f64], m: usize, k: usize, start: usize, chosen: &mut Vec<usize>) -> f64 {
    if chosen.len() == k {
        return medoid_cost(d, m, chosen);
    }
    let mut best = f64::INFINITY;
    for c in start..m {
        chosen.push(c);
        best = best.min(best_cost(d, m, k, c + 1, chosen));
        chosen.pop();
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frw_weights_are_positive_with_unit_mean(u in prop::collection::vec(0.0f64..1.0, 2..60)) {
        let f = frw_from_uniforms(u.clone());
        let n = u.len() as f64;
        prop_assert!(f.w_train.iter().chain(&f.w_valid).all(|w| *w > 0.0 && w.is_finite()));
        prop_assert!((f.w_train.iter().sum::<f64>() / n - 1.0).abs() < 1e-12);
        prop_assert!((f.w_valid.iter().sum::<f64>() / n - 1.0).abs() < 1e-12);
        let mirrored = frw_from_uniforms(f.u.iter().map(|v| 1.0 - v).collect());
        for (a, b) in mirrored.w_train.iter().zip(&f.w_valid) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b));
        }
    }

    #[test]
    fn kish_size_is_bounded_and_scale_free(w in prop::collection::vec(0.01f64..10.0, 1..50), c in 0.1f64..100.0) {
        let e = kish_neff(&w);
        let n = w.len() as f64;
        prop_assert!(e.n_eff >= 1.0 - 1e-12 && e.n_eff <= n + 1e-9);
        prop_assert!(e.n_eff_adm <= n && (e.n_eff_adm >= 2.0 || n < 2.0));
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        prop_assert!((kish_neff(&scaled).n_eff - e.n_eff).abs() < 1e-9 * n);
    }

    #[test]
    fn desirability_stays_in_unit_interval(v in -10.0f64..10.0, low in -5.0f64..0.0, span in 0.0f64..5.0, t in -6.0f64..6.0) {
        let high = low + span;
        for goal in [GoalKind::Max, GoalKind::Min, GoalKind::Target] {
            let d = desirability(v, goal, Some(t), low, high);
            prop_assert!((0.0..=1.0).contains(&d));
        }
        let a = desirability(v, GoalKind::Max, None, low, high);
        let b = desirability(v + 0.5, GoalKind::Max, None, low, high);
        prop_assert!(b >= a);
    }

    #[test]
    fn geometric_score_is_a_weighted_mean(d in prop::collection::vec(0.0f64..=1.0, 1..6), eps in 0.0f64..0.01) {
        let w = vec![1.0 / d.len() as f64; d.len()];
        let s = geometric_score(&d, &w, eps);
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(0.0, f64::max);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        prop_assert!(s >= lo + eps * (1.0 - lo) - 1e-12 && s <= hi + eps * (1.0 - hi) + 1e-12);
    }

    #[test]
    fn multipliers_have_mean_one_and_follow_relabeling(p in prop::collection::vec(1e-6f64..=1.0, 1..6)) {
        let m = multipliers(&p);
        prop_assert!((m.iter().sum::<f64>() / m.len() as f64 - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = p.iter().rev().cloned().collect();
        let mr = multipliers(&rev);
        for (a, b) in m.iter().rev().zip(&mr) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn p_value_range(orig in 0.0f64..5.0, perm in prop::collection::vec(0.0f64..5.0, 19..60)) {
        let p = permutation_p_value(orig, &perm);
        prop_assert!(p >= 1.0 / (1.0 + perm.len() as f64) && p <= 1.0);
    }

    #[test]
    fn pam_reaches_the_optimum(pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 4..14), k in 1usize..4) {
        let m = pts.len();
        let d: Vec<f64> = (0..m * m)
            .map(|ij| {
                let (a, b) = (pts[ij / m], pts[ij % m]);
                ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
            })
            .collect();
        let meds = pam(&d, m, k);
        prop_assert_eq!(meds.len(), k);
        let best = best_cost(&d, m, k, 0, &mut Vec::new());
        prop_assert!(medoid_cost(&d, m, &meds) <= best + 1e-9);
    }

    #[test]
    fn lambda_max_gives_intercept_only(seed in 0u64..1000, alpha in 0.1f64..=1.0) {
        let mut rng = substream(seed, 0);
        let ds = make_lhs_design(15, &mut rng);
        let spec = build_expansion_spec(&ds, &settings_for_order(1, Coding::Treatment)).unwrap();
        let x: DMatrix<f64> = expand_rows(&spec, &ds).unwrap().values;
        let y: Vec<f64> = (0..15).map(|i| x[(i, 1)] - x[(i, 2)] + 0.1 * (i as f64).sin()).collect();
        let fit = fit_path(&x, &y, &vec![1.0; 15], Family::Gaussian, alpha, &PathOptions::default()).unwrap();
        prop_assert_eq!(fit.path[0].k_lambda, 1);
        prop_assert!(fit.lambdas.windows(2).all(|w| w[1] < w[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn mixture_candidates_are_feasible(seed in any::<u64>()) {
        let ds = generate_lnp(&LnpOptions::default()).unwrap();
        let spec = build_expansion_spec(&ds, &lnp_expansion_settings()).unwrap();
        let g = lnp_mixture();
        let cand = sample_candidates(&spec, &[g.clone()], 500, seed).unwrap();
        let cols: Vec<&[f64]> = g.vars.iter().map(|v| cand.numeric(v).unwrap()).collect();
        for i in 0..cand.n_rows() {
            let s: f64 = cols.iter().map(|c| c[i]).sum();
            prop_assert!((s - g.total).abs() < 1e-9);
            for k in 0..cols.len() {
                prop_assert!(cols[k][i] >= g.lower[k] - 1e-12 && cols[k][i] <= g.upper[k] + 1e-12);
            }
        }
        prop_assert_eq!(&cand, &sample_candidates(&spec, &[g], 500, seed).unwrap());
    }

    #[test]
    fn expansion_reprojects_training_rows(seed in any::<u64>(), order in 1usize..=3) {
        let mut rng = substream(seed, 0);
        let ds = make_lhs_design(12, &mut rng);
        let spec = build_expansion_spec(&ds, &settings_for_order(order, Coding::Sum)).unwrap();
        let full = expand_rows(&spec, &ds).unwrap();
        prop_assert_eq!(full.values.ncols(), spec.p_full());
        prop_assert!(full.values.column(0).iter().all(|v| *v == 1.0));
        let rows = [3usize, 0, 7];
        let sub = expand_rows(&spec, &ds.select_rows(&rows)).unwrap();
        for (r, &i) in rows.iter().enumerate() {
            prop_assert_eq!(sub.values.row(r), full.values.row(i));
        }
    }
}
