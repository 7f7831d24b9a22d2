use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use locus_core::eval::{self, ReliabilityReport, Similarity};
use locus_core::model_io::{read_source_dir, SourceSet};
use locus_core::{baselines, preprocess, solver, LocusError, SolverConfig};
use nalgebra::DMatrix;

use super::decompose::{Method, ICA_TOL};
use super::{create_dir, FitSettings};
use crate::args::EvaluateArgs;
use crate::config::{parse_list, ConfigFile};
use crate::error::CliError;
use crate::manifest::RunManifest;

pub const DEFAULT_TOP_FRACTION: f64 = 0.01;

struct Table {
    path: std::path::PathBuf,
    writer: csv::Writer<File>,
}

impl Table {
    fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::Core(LocusError::Io {
            path: path.to_path_buf(),
            source: e,
        }))?;
        let mut table = Table {
            path: path.to_path_buf(),
            writer: csv::Writer::from_writer(file),
        };
        table.row(header.iter().map(|s| s.to_string()).collect())?;
        Ok(table)
    }

    fn row(&mut self, fields: Vec<String>) -> Result<(), CliError> {
        self.writer.write_record(&fields).map_err(|e| {
            CliError::Core(LocusError::Parse {
                path: self.path.clone(),
                message: e.to_string(),
            })
        })
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::Core(LocusError::Io { path: self.path, source: e }))
    }
}

/// Method label of a fit directory: `meta` method, or `truth` for a truth copy.
fn method_label(set: &SourceSet) -> String {
    match set.info.get("method") {
        Some(m) => m.clone(),
        None if set.info.contains_key("scenario") => "truth".into(),
        None => "unknown".into(),
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "NA".into())
}

fn reliability_rows(
    table: &mut Table,
    method: &str,
    report: &ReliabilityReport,
    failures: usize,
) -> Result<(), CliError> {
    for (l, ri) in report.per_source_ri.iter().enumerate() {
        table.row(vec![
            method.to_string(),
            (l + 1).to_string(),
            fmt_opt(*ri),
            report.similarity.to_string(),
            report.replicates.to_string(),
            failures.to_string(),
        ])?;
    }
    Ok(())
}

fn fit_sources(method: Method, data: &locus_core::ConnectivityDataset, q: usize, config: &SolverConfig) -> locus_core::Result<DMatrix<f64>> {
    let whitened = preprocess::whiten(data, q)?;
    match method {
        Method::Locus => Ok(solver::fit(data, &whitened, config, None)?.source_matrix()),
        Method::FastIca => Ok(baselines::fastica(&whitened, config.max_iter, ICA_TOL, config.seed)?.sources),
    }
}

pub fn run(args: EvaluateArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.fit.config.as_deref())?;
    let settings = FitSettings::resolve(&args.fit, &cfg)?;
    let similarity: Similarity = match cfg.pick(args.similarity, "similarity")? {
        Some(s) => s.parse()?,
        None => Similarity::Pearson,
    };
    let top_fraction = cfg.pick(args.top_fraction, "top_fraction")?.unwrap_or(DEFAULT_TOP_FRACTION);
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(CliError::Usage(format!("top fraction must lie in (0, 1], got {top_fraction}")));
    }
    let bootstrap = cfg.pick(args.bootstrap, "bootstrap")?;
    let data_path = cfg.pick(args.data, "data")?;
    if args.fits.is_empty() && bootstrap.is_none() {
        return Err(CliError::Usage("give at least one fit directory or --bootstrap".into()));
    }

    let truth = read_source_dir(&args.truth)?;
    create_dir(&args.out)?;
    let mut manifest = RunManifest::new("evaluate");
    manifest
        .setting("similarity", similarity)
        .setting("top_fraction", top_fraction);
    manifest.input("truth", &args.truth)?;

    let mut reliability = Table::create(
        &args.out.join("reliability.csv"),
        &["method", "source", "ri", "similarity", "replicates", "failures"],
    )?;

    if !args.fits.is_empty() {
        let mut matches = Table::create(
            &args.out.join("match.csv"),
            &["fit", "method", "source", "matched", "sign", "source_corr", "loading_corr"],
        )?;
        let mut groups: BTreeMap<String, Vec<DMatrix<f64>>> = BTreeMap::new();
        for (k, dir) in args.fits.iter().enumerate() {
            let fit = read_source_dir(dir)?;
            if fit.sources.shape() != truth.sources.shape() {
                return Err(LocusError::Dimension(format!(
                    "{} has sources {:?}, truth has {:?}",
                    dir.display(),
                    fit.sources.shape(),
                    truth.sources.shape()
                ))
                .into());
            }
            let result = match (&truth.loadings, &fit.loadings) {
                (Some(ta), Some(fa)) if ta.shape() == fa.shape() => {
                    eval::match_with_loadings(&truth.sources, &fit.sources, ta, fa)?
                }
                _ => eval::match_sources(&truth.sources, &fit.sources)?,
            };
            let method = method_label(&fit);
            for l in 0..truth.sources.nrows() {
                matches.row(vec![
                    dir.display().to_string(),
                    method.clone(),
                    (l + 1).to_string(),
                    (result.permutation[l] + 1).to_string(),
                    result.signs[l].to_string(),
                    result.per_source_corr[l].to_string(),
                    fmt_opt(result.loading_corr.as_ref().map(|c| c[l])),
                ])?;
            }
            manifest.input(&format!("fit{}", k + 1), dir)?;
            groups.entry(method).or_default().push(fit.sources);
        }
        matches.finish()?;
        for (method, estimates) in &groups {
            let report = eval::reliability(&truth.sources, estimates, similarity, top_fraction)?;
            reliability_rows(&mut reliability, method, &report, 0)?;
        }
    }

    if let Some(replicates) = bootstrap {
        let data_path = data_path.ok_or_else(|| CliError::Usage("--bootstrap needs --data".into()))?;
        let q = settings.q.unwrap_or(truth.sources.nrows());
        let methods: Vec<Method> = parse_list(
            &cfg.pick(args.methods, "methods")?.unwrap_or_else(|| "locus,fastica".into()),
            "methods",
        )?;
        let dataset = settings.load(&data_path)?;
        if dataset.edges() != truth.sources.ncols() {
            return Err(LocusError::Dimension(format!(
                "dataset has {} edges, truth has {}",
                dataset.edges(),
                truth.sources.ncols()
            ))
            .into());
        }
        for method in methods {
            let outcome = eval::bootstrap_replicates(
                &dataset,
                |resampled, seed| {
                    let config = SolverConfig {
                        seed,
                        ..settings.solver.clone()
                    };
                    fit_sources(method, resampled, q, &config)
                },
                replicates,
                settings.solver.seed,
            )?;
            let estimates = outcome.successes();
            let failures = outcome.failures();
            if failures > 0 {
                log::warn!("{method}: {failures} of {replicates} bootstrap fits failed");
            }
            if estimates.is_empty() {
                return Err(LocusError::Degenerate {
                    stage: "eval",
                    message: format!("every {method} bootstrap fit failed"),
                }
                .into());
            }
            let report = eval::reliability(&truth.sources, &estimates, similarity, top_fraction)?;
            reliability_rows(&mut reliability, &method.to_string(), &report, failures)?;
        }
        settings.record(&mut manifest);
        manifest.setting("bootstrap", replicates);
        manifest.input("data", &data_path)?;
    }
    reliability.finish()?;
    manifest.write(&args.out)
}
