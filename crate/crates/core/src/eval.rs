//! Matching estimated sources to ground truth, similarity scoring and the
//! chance-corrected reliability index over replicate fits.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::connmat::ConnectivityDataset;
use crate::error::{LocusError, Result};

/// Default fraction of edges kept when binarizing for the Jaccard index.
pub const DEFAULT_TOP_FRACTION: f64 = 0.01;

/// Pearson correlation; 0 when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson needs equal lengths");
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

fn row_vec(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

/// Correlations between every row of `a` and every row of `b`.
pub fn correlation_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let rows_a: Vec<Vec<f64>> = (0..a.nrows()).map(|i| row_vec(a, i)).collect();
    let rows_b: Vec<Vec<f64>> = (0..b.nrows()).map(|i| row_vec(b, i)).collect();
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| pearson(&rows_a[i], &rows_b[j]))
}

/// Minimum-cost perfect assignment on a square matrix. Entry `i` of the
/// result is the column assigned to row `i`.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    // Potentials and matching over 1-based indices, column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `permutation[ℓ]` is the estimated source matched to true source `ℓ`.
    pub permutation: Vec<usize>,
    /// Sign applied to each matched estimate, `±1`.
    pub signs: Vec<f64>,
    /// Correlation of each true source with its sign-aligned match.
    pub per_source_corr: Vec<f64>,
    /// Same for the loadings, when both loading matrices were supplied.
    pub loading_corr: Option<Vec<f64>>,
}

impl MatchResult {
    pub fn mean_source_corr(&self) -> f64 {
        self.per_source_corr.iter().sum::<f64>() / self.per_source_corr.len() as f64
    }

    pub fn mean_loading_corr(&self) -> Option<f64> {
        self.loading_corr
            .as_ref()
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
    }

    /// Rows of `est` reordered and sign-flipped to line up with the truth.
    pub fn align(&self, est: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.permutation.len(), est.ncols());
        for (l, (&j, &s)) in self.permutation.iter().zip(&self.signs).enumerate() {
            out.set_row(l, &(est.row(j) * s));
        }
        out
    }
}

/// Optimal one-to-one matching of estimated to true sources by total |corr|.
pub fn match_sources(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> Result<MatchResult> {
    if truth.shape() != est.shape() {
        return Err(LocusError::Dimension(format!(
            "truth is {:?} but estimate is {:?}",
            truth.shape(),
            est.shape()
        )));
    }
    let corr = correlation_matrix(truth, est);
    let permutation = hungarian(&corr.map(|c| -c.abs()));
    let signs: Vec<f64> = permutation
        .iter()
        .enumerate()
        .map(|(l, &j)| if corr[(l, j)] < 0.0 { -1.0 } else { 1.0 })
        .collect();
    let per_source_corr = permutation.iter().enumerate().map(|(l, &j)| corr[(l, j)].abs()).collect();
    Ok(MatchResult {
        permutation,
        signs,
        per_source_corr,
        loading_corr: None,
    })
}

/// Matches on sources, then scores the loadings of the matched pairs with
/// the same signs. Loadings are `N × q`.
pub fn match_with_loadings(
    truth: &DMatrix<f64>,
    est: &DMatrix<f64>,
    truth_loadings: &DMatrix<f64>,
    est_loadings: &DMatrix<f64>,
) -> Result<MatchResult> {
    let mut result = match_sources(truth, est)?;
    if truth_loadings.shape() != est_loadings.shape() || truth_loadings.ncols() != truth.nrows() {
        return Err(LocusError::Dimension(format!(
            "loadings {:?} and {:?} do not match {} sources",
            truth_loadings.shape(),
            est_loadings.shape(),
            truth.nrows()
        )));
    }
    let corr = result
        .permutation
        .iter()
        .zip(&result.signs)
        .enumerate()
        .map(|(l, (&j, &s))| {
            let a: Vec<f64> = truth_loadings.column(l).iter().copied().collect();
            let b: Vec<f64> = est_loadings.column(j).iter().map(|x| s * x).collect();
            pearson(&a, &b)
        })
        .collect();
    result.loading_corr = Some(corr);
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    /// Signed Pearson correlation.
    Pearson,
    /// Jaccard index of the top-fraction `|edge|` supports.
    Jaccard,
}

impl std::fmt::Display for Similarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Similarity::Pearson => "pearson",
            Similarity::Jaccard => "jaccard",
        })
    }
}

impl std::str::FromStr for Similarity {
    type Err = LocusError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pearson" => Ok(Similarity::Pearson),
            "jaccard" => Ok(Similarity::Jaccard),
            other => Err(LocusError::InvalidConfig(format!("unknown similarity '{other}'"))),
        }
    }
}

/// Indices of the `ceil(fraction · p)` largest `|s|`, ties broken by index.
pub fn top_support(s: &[f64], fraction: f64) -> Vec<usize> {
    let k = ((fraction * s.len() as f64).ceil() as usize).clamp(1, s.len().max(1));
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].abs().total_cmp(&s[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

pub fn jaccard(a: &[f64], b: &[f64], fraction: f64) -> f64 {
    let sa = top_support(a, fraction);
    let sb = top_support(b, fraction);
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < sa.len() && j < sb.len() {
        match sa[i].cmp(&sb[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = sa.len() + sb.len() - common;
    if union == 0 {
        0.0
    } else {
        common as f64 / union as f64
    }
}

pub fn similarity(kind: Similarity, a: &[f64], b: &[f64], top_fraction: f64) -> f64 {
    match kind {
        Similarity::Pearson => pearson(a, b),
        Similarity::Jaccard => jaccard(a, b, top_fraction),
    }
}

/// Reliability of true source `l` over replicate estimates.
///
/// Each entry of `aligned` is a `q × p` estimate whose rows are already
/// matched and sign-aligned to the truth. Returns `None` when the chance
/// level is indistinguishable from 1.
pub fn reliability_index(
    truth_l: &[f64],
    aligned: &[DMatrix<f64>],
    l: usize,
    kind: Similarity,
    top_fraction: f64,
) -> Option<f64> {
    if aligned.is_empty() {
        return None;
    }
    let b = aligned.len() as f64;
    let q = aligned[0].nrows();
    let mut matched = 0.0;
    let mut all = 0.0;
    for est in aligned {
        for j in 0..q {
            let h = similarity(kind, truth_l, &row_vec(est, j), top_fraction);
            all += h;
            if j == l {
                matched += h;
            }
        }
    }
    let matched = matched / b;
    let chance = all / (b * q as f64);
    let denom = 1.0 - chance;
    if denom.abs() < 1e-12 {
        None
    } else {
        Some((matched - chance) / denom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityReport {
    /// One value per true source; `None` marks an undefined index.
    pub per_source_ri: Vec<Option<f64>>,
    pub similarity: Similarity,
    /// Number of replicates the index was computed over.
    pub replicates: usize,
    pub jaccard_top_fraction: f64,
}

/// Matches each replicate to the truth and computes the per-source index.
pub fn reliability(
    truth: &DMatrix<f64>,
    estimates: &[DMatrix<f64>],
    kind: Similarity,
    top_fraction: f64,
) -> Result<ReliabilityReport> {
    let aligned = estimates
        .iter()
        .map(|est| Ok(match_sources(truth, est)?.align(est)))
        .collect::<Result<Vec<_>>>()?;
    let per_source_ri = (0..truth.nrows())
        .map(|l| reliability_index(&row_vec(truth, l), &aligned, l, kind, top_fraction))
        .collect();
    Ok(ReliabilityReport {
        per_source_ri,
        similarity: kind,
        replicates: estimates.len(),
        jaccard_top_fraction: top_fraction,
    })
}

/// SplitMix64 mix of a master seed and a replicate number.
pub fn derive_seed(master: u64, replicate: u64) -> u64 {
    let mut z = master.wrapping_add(replicate.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Subject indices drawn with replacement.
pub fn resample_indices(subjects: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..subjects).map(|_| rng.random_range(0..subjects)).collect()
}

#[derive(Debug, Clone)]
pub struct BootstrapRun {
    pub seed: u64,
    pub indices: Vec<usize>,
    /// `q × p` estimate, or the failure message.
    pub estimate: std::result::Result<DMatrix<f64>, String>,
}

#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    pub runs: Vec<BootstrapRun>,
}

impl BootstrapOutcome {
    pub fn successes(&self) -> Vec<DMatrix<f64>> {
        self.runs.iter().filter_map(|r| r.estimate.as_ref().ok().cloned()).collect()
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.estimate.is_err()).count()
    }
}

/// Fits `fit_fn` on `replicates` subject resamples in parallel. The function
/// receives the resampled dataset and the replicate's derived seed.
pub fn bootstrap_replicates<F>(
    dataset: &ConnectivityDataset,
    fit_fn: F,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapOutcome>
where
    F: Fn(&ConnectivityDataset, u64) -> Result<DMatrix<f64>> + Sync,
{
    if replicates < 2 {
        return Err(LocusError::InvalidConfig(format!(
            "bootstrap needs at least 2 replicates, got {replicates}"
        )));
    }
    let runs = (0..replicates as u64)
        .into_par_iter()
        .map(|b| {
            let seed = derive_seed(seed, b);
            let indices = resample_indices(dataset.subjects(), seed);
            let estimate = dataset
                .select_subjects(&indices)
                .and_then(|resampled| fit_fn(&resampled, seed))
                .map_err(|e| e.to_string());
            BootstrapRun { seed, indices, estimate }
        })
        .collect();
    Ok(BootstrapOutcome { runs })
}

/// Correlation of each loading column with a subject-level covariate.
pub fn covariate_correlation(loadings: &DMatrix<f64>, covariate: &DVector<f64>) -> Result<RowDVector<f64>> {
    if loadings.nrows() != covariate.len() {
        return Err(LocusError::Dimension(format!(
            "{} loading rows but {} covariate values",
            loadings.nrows(),
            covariate.len()
        )));
    }
    let c: Vec<f64> = covariate.iter().copied().collect();
    Ok(RowDVector::from_iterator(
        loadings.ncols(),
        loadings.column_iter().map(|col| pearson(&col.iter().copied().collect::<Vec<_>>(), &c)),
    ))
}
