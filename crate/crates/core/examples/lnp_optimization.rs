//! Formulation workflow on the synthetic lipid nanoparticle screen: fit
//! three responses, score random feasible candidates against desirability
//! goals and specification limits, and shortlist diverse candidates.

use indexmap::IndexMap;
use svem::expand::build_expansion_spec;
use svem::lnp::{generate_lnp, lnp_expansion_settings, lnp_goals, lnp_mixture, lnp_specs, LnpOptions, RESPONSES};
use svem::optimize::{
    export_candidates_to, sample_candidates, score_candidates, select_from_score_table, Direction, ScoreOptions,
    SelectionRequest, TopType,
};
use svem::svem::{fit_svem, SvemConfig};
use svem::Family;

fn main() -> svem::Result<()> {
    let data = generate_lnp(&LnpOptions::default())?;
    let spec = build_expansion_spec(&data, &lnp_expansion_settings())?;
    println!("{} runs, {} expansion columns", data.n_rows(), spec.p_full());

    let cfg = SvemConfig::new(Family::Gaussian).with_n_boot(100);
    let models: IndexMap<_, _> = RESPONSES
        .iter()
        .map(|r| Ok((r.to_string(), fit_svem(&spec, &data, r, &cfg)?)))
        .collect::<svem::Result<_>>()?;

    let candidates = sample_candidates(&spec, &[lnp_mixture()], 5_000, 4)?;
    let table = score_candidates(&models, &lnp_goals(), &candidates, None, Some(&lnp_specs()), &ScoreOptions::default())?;
    let flat = table.to_dataset();
    let predictors = lnp_expansion_settings().main_effects;

    let mut picks = Vec::new();
    for (target, label) in [("score", "optimal"), ("uncertainty_measure", "explore"), ("p_joint_mean", "in_spec")] {
        let req = SelectionRequest {
            target: target.into(),
            direction: Direction::Max,
            k: 3,
            top_type: TopType::Frac,
            top: 0.1,
            label: label.into(),
        };
        let sel = select_from_score_table(&flat, &predictors, &req)?;
        println!(
            "{label:<8} best row {:>5} ({target} = {:.3}), medoids {:?}",
            sel.best_row,
            flat.numeric(target)?[sel.best_row],
            sel.medoid_rows
        );
        picks.push(sel);
    }
    let mut out = Vec::new();
    export_candidates_to(&flat, &picks, &mut out, None)?;
    let text = String::from_utf8(out).expect("utf-8");
    println!("\nexported {} candidate rows; header:\n{}", text.lines().count() - 1, text.lines().next().unwrap_or(""));
    Ok(())
}
