mod decompose;
mod evaluate;
mod simulate;
mod tune;

use std::fs;
use std::path::Path;

use locus_core::connmat::{self, DatasetFormat, LoadOptions};
use locus_core::{ConnectivityDataset, LocusError, Regularizer, SolverConfig};

use crate::args::{Command, FitArgs};
use crate::config::ConfigFile;
use crate::error::CliError;
use crate::manifest::RunManifest;

pub use decompose::run as decompose;
pub use evaluate::run as evaluate;
pub use simulate::run as simulate;
pub use tune::run as tune;

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Decompose(args) => decompose(args),
        Command::Tune(args) => tune(args),
        Command::Evaluate(args) => evaluate(args),
    }
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Core(LocusError::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

/// Solver settings and input options after merging flags with the config file.
#[derive(Debug, Clone)]
pub(crate) struct FitSettings {
    pub q: Option<usize>,
    pub solver: SolverConfig,
    pub format: Option<DatasetFormat>,
    pub fisher_z: bool,
}

impl FitSettings {
    pub fn resolve(args: &FitArgs, cfg: &ConfigFile) -> Result<Self, CliError> {
        let defaults = SolverConfig::default();
        let regularizer = match cfg.pick(args.regularizer.clone(), "regularizer")? {
            Some(name) => name.parse::<Regularizer>()?,
            None => defaults.regularizer,
        };
        let format = match cfg.pick(args.format.clone(), "format")?.as_deref() {
            None | Some("auto") => None,
            Some("edge") => Some(DatasetFormat::EdgeCsv),
            Some("square") => Some(DatasetFormat::SquareDir),
            Some(other) => return Err(CliError::Usage(format!("unknown format '{other}' (auto, edge or square)"))),
        };
        let solver = SolverConfig {
            phi: cfg.pick(args.phi, "phi")?.unwrap_or(defaults.phi),
            rho: cfg.pick(args.rho, "rho")?.unwrap_or(defaults.rho),
            max_rank: cfg.pick(args.max_rank, "max_rank")?,
            eps1: cfg.pick(args.eps1, "eps1")?.unwrap_or(defaults.eps1),
            eps2: cfg.pick(args.eps2, "eps2")?.unwrap_or(defaults.eps2),
            max_iter: cfg.pick(args.max_iter, "max_iter")?.unwrap_or(defaults.max_iter),
            regularizer,
            seed: cfg.pick(args.seed, "seed")?.unwrap_or(defaults.seed),
        };
        solver.validate()?;
        Ok(FitSettings {
            q: cfg.pick(args.q, "q")?,
            solver,
            format,
            fisher_z: cfg.flag(args.fisher_z, "fisher_z")?,
        })
    }

    pub fn require_q(&self) -> Result<usize, CliError> {
        self.q.ok_or_else(|| CliError::Usage("--q is required".into()))
    }

    /// Auto-detection: a directory holding `data.csv` (as written by `simulate`)
    /// reads that edge CSV, any other directory is a set of square matrices.
    pub fn load(&self, path: &Path) -> Result<ConnectivityDataset, CliError> {
        let edge_file = path.join(simulate::DATA_FILE);
        let (path, format) = match self.format {
            Some(f) => (path, f),
            None if path.is_dir() && edge_file.is_file() => (edge_file.as_path(), DatasetFormat::EdgeCsv),
            None if path.is_dir() => (path, DatasetFormat::SquareDir),
            None => (path, DatasetFormat::EdgeCsv),
        };
        Ok(connmat::load_dataset(path, format, LoadOptions { fisher_z: self.fisher_z })?)
    }

    pub fn record(&self, manifest: &mut RunManifest) {
        let s = &self.solver;
        if let Some(q) = self.q {
            manifest.setting("q", q);
        }
        manifest
            .setting("phi", s.phi)
            .setting("rho", s.rho)
            .setting("max_rank", s.max_rank.map(|r| r.to_string()).unwrap_or_else(|| "auto".into()))
            .setting("eps1", s.eps1)
            .setting("eps2", s.eps2)
            .setting("max_iter", s.max_iter)
            .setting("regularizer", s.regularizer)
            .setting("fisher_z", self.fisher_z);
        manifest.seed = Some(s.seed);
    }
}
