//! Self-validated ensemble fit on a small response-surface design, with
//! ensemble predictions and percentile intervals.

use rand::Rng;
use rand_distr::StandardNormal;
use svem::expand::{build_expansion_spec, Coding};
use svem::rng::substream;
use svem::simulate::{make_lhs_design, settings_for_order};
use svem::svem::{fit_svem, predict_svem, Objective, SvemConfig};
use svem::Family;

fn main() -> svem::Result<()> {
    let mut rng = substream(3, 0);
    let mut ds = make_lhs_design(18, &mut rng);
    let x1 = ds.numeric("X1")?.to_vec();
    let x2 = ds.numeric("X2")?.to_vec();
    let y: Vec<f64> = (0..18)
        .map(|i| 5.0 + 2.0 * x1[i] - 1.5 * x1[i] * x2[i] + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ds.push_numeric("y", y)?;
    let spec = build_expansion_spec(&ds, &settings_for_order(2, Coding::Treatment))?;

    for objective in [Objective::WAic, Objective::WBic, Objective::WSse] {
        let mut cfg = SvemConfig::new(Family::Gaussian).with_seed(11).with_n_boot(100);
        cfg.objective = objective;
        let model = fit_svem(&spec, &ds, "y", &cfg)?;
        let pred = predict_svem(&model, &ds.select_rows(&[0, 1, 2]), Some(0.9))?;
        println!(
            "{:<5} median k = {:>4}  first rows {:.3?}  90% lower {:.3?}",
            objective.label(),
            model.k_median(),
            pred.mean,
            pred.lower.unwrap()
        );
    }

    let cfg = SvemConfig::new(Family::Gaussian).with_seed(11).with_n_boot(100);
    let model = fit_svem(&spec, &ds, "y", &cfg)?;
    let json = model.to_json()?;
    println!("model JSON: {} bytes, {} replicates", json.len(), model.n_boot);
    Ok(())
}
