use std::fs::File;

use locus_core::model_io::{self, write_key_value};
use locus_core::modelsel;
use locus_core::{LocusError, SolverConfig};

use super::decompose::write_heatmaps;
use super::{create_dir, FitSettings};
use crate::args::TuneArgs;
use crate::config::{parse_list, ConfigFile};
use crate::error::CliError;
use crate::manifest::RunManifest;

pub const DEFAULT_PHI_GRID: &str = "0,0.025,0.05,0.075,0.1";
pub const DEFAULT_RHO_GRID: &str = "0.2,0.5,0.9";
pub const BEST_FIT_DIR: &str = "best_fit";

fn csv_err(path: &std::path::Path, e: csv::Error) -> CliError {
    CliError::Core(LocusError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn run(args: TuneArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.fit.config.as_deref())?;
    let settings = FitSettings::resolve(&args.fit, &cfg)?;
    let q = settings.require_q()?;
    let phi_text = cfg.pick(args.phi_grid, "phi_grid")?.unwrap_or_else(|| DEFAULT_PHI_GRID.into());
    let rho_text = cfg.pick(args.rho_grid, "rho_grid")?.unwrap_or_else(|| DEFAULT_RHO_GRID.into());
    let phi_grid: Vec<f64> = parse_list(&phi_text, "phi grid")?;
    let rho_grid: Vec<f64> = parse_list(&rho_text, "rho grid")?;

    let dataset = settings.load(&args.data)?;
    let result = modelsel::tune(&dataset, q, &phi_grid, &rho_grid, &settings.solver)?;
    create_dir(&args.out)?;

    let grid_path = args.out.join("grid.csv");
    let file = File::create(&grid_path).map_err(|e| CliError::Core(LocusError::Io {
        path: grid_path.clone(),
        source: e,
    }))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["phi", "rho", "bic", "iterations", "converged", "ranks", "error"])
        .map_err(|e| csv_err(&grid_path, e))?;
    for cell in &result.grid {
        let row = match &cell.outcome {
            Ok(s) => [
                cell.phi.to_string(),
                cell.rho.to_string(),
                s.bic.value.to_string(),
                s.iterations.to_string(),
                s.converged.to_string(),
                s.ranks.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(";"),
                String::new(),
            ],
            Err(msg) => [
                cell.phi.to_string(),
                cell.rho.to_string(),
                "NA".into(),
                String::new(),
                "false".into(),
                String::new(),
                msg.clone(),
            ],
        };
        w.write_record(&row).map_err(|e| csv_err(&grid_path, e))?;
    }
    w.flush().map_err(|e| CliError::Core(LocusError::Io {
        path: grid_path.clone(),
        source: e,
    }))?;

    let best = result.best_cell();
    let bic = best.outcome.as_ref().map(|s| s.bic.value).unwrap_or(f64::NAN);
    write_key_value(
        &args.out.join("best"),
        &[
            ("phi".into(), best.phi.to_string()),
            ("rho".into(), best.rho.to_string()),
            ("bic".into(), bic.to_string()),
        ],
    )?;

    let best_config = SolverConfig {
        phi: result.best.0,
        rho: result.best.1,
        ..settings.solver.clone()
    };
    let fit_dir = args.out.join(BEST_FIT_DIR);
    model_io::write_locus_fit(&fit_dir, &result.best_model, &best_config, &[])?;
    write_heatmaps(&fit_dir, &result.best_model.source_matrix(), dataset.nodes())?;

    let mut manifest = RunManifest::new("tune");
    settings.record(&mut manifest);
    manifest.setting("phi_grid", phi_text).setting("rho_grid", rho_text);
    manifest.input("data", &args.data)?;
    manifest.write(&args.out)
}
