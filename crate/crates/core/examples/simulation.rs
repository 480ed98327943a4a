//! A small benchmarking cell: SVEM selectors and the cross-validation
//! baseline fitted to the same random surfaces, summarised per setting.

use svem::simulate::{paired_difference, run_cell, summarize, write_summary_csv, Setting, SimCell};
use svem::svem::Objective;
use svem::Family;

fn main() -> svem::Result<()> {
    let settings = vec![
        Setting::svem(Objective::WAic, true),
        Setting::svem(Objective::WSse, true),
        Setting::cv(false),
    ];
    let mut cell = SimCell::new(Family::Gaussian, 25, 0.9, 2, settings.clone());
    cell.n_reps = 10;
    cell.n_boot = 50;
    let out = run_cell(&cell)?;
    println!("{} records, {} skipped replicates", out.records.len(), out.skipped.len());
    write_summary_csv(&summarize(&out.records), std::io::stdout())?;

    let grid = &cell.alpha_grid;
    let d = paired_difference(&out.records, &settings[0].label(grid), &settings[2].label(grid), |r| r.metric);
    println!("\nwAIC minus CV log-NRMSE: {:.3} +/- {:.3} over {} paired replicates", d.mean, d.se, d.count);
    Ok(())
}
