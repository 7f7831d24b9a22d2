//! Fit and ground-truth directories on disk.
//!
//! Both share the same core layout so that a truth directory can be scored
//! like any fit: `S_<ℓ>.csv` (`V × V`, one per source) and `A.csv`
//! (`N × q`). Fits add `A_tilde.csv` and a `meta` key=value file; low-rank
//! fits also store `X_<ℓ>.csv` and `d_<ℓ>.csv`. Truth directories carry a
//! `spec` key=value file instead of `meta`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::baselines::IcaModel;
use crate::connmat::{self, read_matrix_csv, write_matrix_csv};
use crate::error::{LocusError, Result};
use crate::solver::{LocusModel, SolverConfig};
use crate::synth::{GroundTruth, LoadingDist, SyntheticSpec};

/// Writes `key=value` lines in the given order.
pub fn write_key_value(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in entries {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| LocusError::io(path, e))
}

/// Reads `key=value` lines; blank lines and `#` comments are skipped.
pub fn read_key_value(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| LocusError::io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| LocusError::parse(path, format!("line {} has no '='", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LocusError::io(dir, e))
}

fn write_sources(dir: &Path, sources: &DMatrix<f64>, nodes: usize) -> Result<()> {
    for l in 0..sources.nrows() {
        let edges: Vec<f64> = sources.row(l).iter().copied().collect();
        let m = connmat::unvectorize(&edges, nodes)?;
        write_matrix_csv(&dir.join(format!("S_{}.csv", l + 1)), &m)?;
    }
    Ok(())
}

/// Writes a low-rank fit. `extra` entries are appended to `meta`.
pub fn write_locus_fit(
    dir: &Path,
    model: &LocusModel,
    config: &SolverConfig,
    extra: &[(String, String)],
) -> Result<()> {
    create_dir(dir)?;
    let nodes = model
        .sources
        .first()
        .map(|s| s.nodes())
        .ok_or_else(|| LocusError::Dimension("model has no sources".into()))?;
    write_sources(dir, &model.source_matrix(), nodes)?;
    for (l, s) in model.sources.iter().enumerate() {
        write_matrix_csv(&dir.join(format!("X_{}.csv", l + 1)), &s.x)?;
        write_matrix_csv(&dir.join(format!("d_{}.csv", l + 1)), &DMatrix::from_column_slice(s.rank(), 1, s.d.as_slice()))?;
    }
    write_matrix_csv(&dir.join("A.csv"), &model.loadings)?;
    write_matrix_csv(&dir.join("A_tilde.csv"), &model.a_tilde)?;
    let mut meta = vec![
        kv("method", "locus"),
        kv("q", model.q()),
        kv("V", nodes),
        kv("phi", config.phi),
        kv("rho", config.rho),
        kv("regularizer", config.regularizer),
        kv("max_rank", config.rank_cap(nodes)?),
        kv("ranks", join(&model.ranks())),
        kv("iterations", model.iterations),
        kv("converged", model.converged),
        kv("final_objective", model.final_objective()),
        kv("reseeds", model.reseeds),
        kv("eps1", config.eps1),
        kv("eps2", config.eps2),
        kv("max_iter", config.max_iter),
        kv("seed", config.seed),
    ];
    meta.extend_from_slice(extra);
    write_key_value(&dir.join("meta"), &meta)
}

/// Writes a FastICA fit with subject loadings `loadings` (`N × q`).
pub fn write_ica_fit(
    dir: &Path,
    ica: &IcaModel,
    loadings: &DMatrix<f64>,
    nodes: usize,
    seed: u64,
    extra: &[(String, String)],
) -> Result<()> {
    create_dir(dir)?;
    write_sources(dir, &ica.sources, nodes)?;
    write_matrix_csv(&dir.join("A.csv"), loadings)?;
    write_matrix_csv(&dir.join("A_tilde.csv"), &ica.mixing)?;
    let mut meta = vec![
        kv("method", "fastica"),
        kv("q", ica.sources.nrows()),
        kv("V", nodes),
        kv("iterations", ica.iterations),
        kv("converged", ica.converged),
        kv("seed", seed),
    ];
    meta.extend_from_slice(extra);
    write_key_value(&dir.join("meta"), &meta)
}

fn loading_dist_label(dist: &LoadingDist) -> String {
    match dist {
        LoadingDist::SplitUniform { low, high } => format!("split_uniform({low},{high})"),
        LoadingDist::Gaussian { sd } => format!("gaussian({sd})"),
        LoadingDist::Fixed(_) => "fixed".into(),
    }
}

/// Writes the truth directory for a synthetic dataset.
pub fn write_truth(dir: &Path, truth: &GroundTruth, spec: &SyntheticSpec) -> Result<()> {
    create_dir(dir)?;
    write_sources(dir, &truth.sources, spec.nodes)?;
    write_matrix_csv(&dir.join("A.csv"), &truth.loadings)?;
    write_key_value(
        &dir.join("spec"),
        &[
            kv("scenario", spec.scenario.label()),
            kv("V", spec.nodes),
            kv("q", spec.q),
            kv("N", spec.subjects),
            kv("sigma", spec.sigma),
            kv("seed", spec.seed),
            kv("loading_dist", loading_dist_label(&spec.loading_dist)),
        ],
    )
}

/// Sources and loadings read back from a fit or truth directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    /// `q × p` edge vectors.
    pub sources: DMatrix<f64>,
    /// `N × q`, when `A.csv` is present.
    pub loadings: Option<DMatrix<f64>>,
    pub nodes: usize,
    /// Contents of `meta` (fits) or `spec` (truth), if present.
    pub info: BTreeMap<String, String>,
}

pub fn read_source_dir(dir: &Path) -> Result<SourceSet> {
    let mut rows = Vec::new();
    let mut nodes = None;
    for l in 1.. {
        let path = dir.join(format!("S_{l}.csv"));
        if !path.is_file() {
            break;
        }
        let m = read_matrix_csv(&path)?;
        if let Some(v) = nodes {
            if m.nrows() != v {
                return Err(LocusError::Dimension(format!("{} is {}×{}, expected {v}×{v}", path.display(), m.nrows(), m.ncols())));
            }
        }
        nodes = Some(m.nrows());
        rows.push(connmat::vectorize(&connmat::symmetrize_checked(&m)?)?);
    }
    let nodes = nodes.ok_or_else(|| LocusError::parse(dir, "no S_1.csv source file found"))?;
    let sources = DMatrix::from_fn(rows.len(), rows[0].len(), |l, k| rows[l][k]);
    let a_path = dir.join("A.csv");
    let loadings = if a_path.is_file() {
        let a = read_matrix_csv(&a_path)?;
        if a.ncols() != sources.nrows() {
            return Err(LocusError::Dimension(format!(
                "{} has {} columns for {} sources",
                a_path.display(),
                a.ncols(),
                sources.nrows()
            )));
        }
        Some(a)
    } else {
        None
    };
    let info = ["meta", "spec"]
        .iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
        .map(|p| read_key_value(&p))
        .transpose()?
        .unwrap_or_default();
    Ok(SourceSet {
        sources,
        loadings,
        nodes,
        info,
    })
}
