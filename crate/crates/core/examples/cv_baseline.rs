//! Repeated k-fold cross-validation baseline next to the SVEM ensemble on
//! the same data.

use rand::Rng;
use rand_distr::StandardNormal;
use svem::enet::{repeated_kfold_cv, CvOptions};
use svem::expand::{build_expansion_spec, expand_rows, Coding};
use svem::rng::substream;
use svem::simulate::{make_lhs_design, settings_for_order};
use svem::svem::{fit_ensembles, EnsembleOptions, Objective, Selector};
use svem::Family;

fn main() -> svem::Result<()> {
    let mut rng = substream(5, 0);
    let ds = make_lhs_design(30, &mut rng);
    let spec = build_expansion_spec(&ds, &settings_for_order(2, Coding::Treatment))?;
    let x = expand_rows(&spec, &ds)?.values;
    let y: Vec<f64> = (0..30)
        .map(|i| x[(i, 1)] - 2.0 * x[(i, 2)] + 0.5 * x[(i, 8)] + 0.4 * rng.sample::<f64, _>(StandardNormal))
        .collect();

    for relax in [false, true] {
        let cv = repeated_kfold_cv(&x, &y, Family::Gaussian, &[0.5, 1.0], relax, &CvOptions::default())?;
        println!(
            "CV relax={relax:<5}: alpha {} lambda {:.4} gamma {} k {} cv loss {:.4}",
            cv.point.alpha, cv.point.lambda, cv.point.gamma, cv.point.k_lambda, cv.cv_loss
        );
    }

    let selectors = [
        Selector { objective: Objective::WAic, relax: true },
        Selector { objective: Objective::WSse, relax: true },
    ];
    let ens = fit_ensembles(&x, &y, Family::Gaussian, &selectors, &EnsembleOptions::default())?;
    for (s, e) in selectors.iter().zip(&ens) {
        println!("SVEM {}: median k {} over {} replicates", s.objective.label(), e.k_median(), e.n_boot());
    }
    Ok(())
}
