use std::path::Path;

use locus_core::{baselines, connmat, model_io, preprocess, solver};
use nalgebra::DMatrix;

use super::{create_dir, FitSettings};
use crate::args::DecomposeArgs;
use crate::config::ConfigFile;
use crate::error::CliError;
use crate::heatmap;
use crate::manifest::RunManifest;

pub const ICA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Locus,
    FastIca,
}

impl std::str::FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "locus" => Ok(Method::Locus),
            "fastica" | "ica" => Ok(Method::FastIca),
            other => Err(CliError::Usage(format!("unknown method '{other}' (locus or fastica)"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Locus => "locus",
            Method::FastIca => "fastica",
        })
    }
}

/// `S_<ℓ>.pgm` for each row of a `q × p` source matrix.
pub(crate) fn write_heatmaps(dir: &Path, sources: &DMatrix<f64>, nodes: usize) -> Result<(), CliError> {
    for l in 0..sources.nrows() {
        let edges: Vec<f64> = sources.row(l).iter().copied().collect();
        let m = connmat::unvectorize(&edges, nodes)?;
        heatmap::write_pgm(&dir.join(format!("S_{}.pgm", l + 1)), &m)?;
    }
    Ok(())
}

pub fn run(args: DecomposeArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.fit.config.as_deref())?;
    let settings = FitSettings::resolve(&args.fit, &cfg)?;
    let method = match cfg.pick(args.method, "method")? {
        Some(m) => m.parse()?,
        None => Method::Locus,
    };
    let q = settings.require_q()?;
    let dataset = settings.load(&args.data)?;
    let whitened = preprocess::whiten(&dataset, q)?;
    create_dir(&args.out)?;

    match method {
        Method::Locus => {
            let model = solver::fit(&dataset, &whitened, &settings.solver, None)?;
            if !model.converged {
                log::warn!("solver stopped after {} iterations without converging", model.iterations);
            }
            model_io::write_locus_fit(&args.out, &model, &settings.solver, &[])?;
            write_heatmaps(&args.out, &model.source_matrix(), dataset.nodes())?;
        }
        Method::FastIca => {
            let ica = baselines::fastica(&whitened, settings.solver.max_iter, ICA_TOL, settings.solver.seed)?;
            if !ica.converged {
                log::warn!("FastICA stopped after {} iterations without converging", ica.iterations);
            }
            let loadings = preprocess::unmix_to_subject_space(&dataset, &ica.sources)?;
            model_io::write_ica_fit(&args.out, &ica, &loadings, dataset.nodes(), settings.solver.seed, &[])?;
            write_heatmaps(&args.out, &ica.sources, dataset.nodes())?;
        }
    }

    let mut manifest = RunManifest::new("decompose");
    manifest.setting("method", method);
    settings.record(&mut manifest);
    manifest.input("data", &args.data)?;
    manifest.write(&args.out)
}
