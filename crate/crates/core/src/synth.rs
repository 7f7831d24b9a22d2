//! Synthetic multi-subject connectivity with known sources and loadings.
//!
//! Sources are binary templates on a `V × V` grid, scaled to `V` through
//! fractions of the node axis. A fractional range `[a, b]` covers the
//! 0-based nodes `ceil(a·V) ..= floor(b·V)`. `FORMATS.md` lists the exact
//! geometry.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::connmat::{self, ConnectivityDataset, EdgeIndex};
use crate::error::{LocusError, Result};

/// Smallest node count at which the built-in templates render.
pub const MIN_TEMPLATE_NODES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// Diagonal block, cross band and off-diagonal block.
    BlocksCross,
    /// Diagonal triangle, off-diagonal ring and hollow square.
    TriangleCircleSquare,
    /// Caller-supplied `q × p` sources.
    Custom(DMatrix<f64>),
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::BlocksCross => "I",
            Scenario::TriangleCircleSquare => "II",
            Scenario::Custom(_) => "custom",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = LocusError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" | "blocks_cross" => Ok(Scenario::BlocksCross),
            "ii" | "2" | "triangle_circle_square" => Ok(Scenario::TriangleCircleSquare),
            other => Err(LocusError::InvalidConfig(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadingDist {
    /// Uniform on `[−high, −low] ∪ [low, high]`.
    SplitUniform { low: f64, high: f64 },
    /// Zero-mean Gaussian with the given SD.
    Gaussian { sd: f64 },
    /// Fixed `N × q` loadings.
    Fixed(DMatrix<f64>),
}

impl Default for LoadingDist {
    fn default() -> Self {
        LoadingDist::SplitUniform { low: 0.5, high: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub q: usize,
    pub subjects: usize,
    /// Per-edge noise SD.
    pub sigma: f64,
    pub scenario: Scenario,
    pub seed: u64,
    pub loading_dist: LoadingDist,
}

impl SyntheticSpec {
    /// Scenario I at the benchmark scale: `V = 50`, `q = 3`.
    pub fn scenario_one(subjects: usize, sigma: f64, seed: u64) -> Self {
        SyntheticSpec {
            nodes: 50,
            q: 3,
            subjects,
            sigma,
            scenario: Scenario::BlocksCross,
            seed,
            loading_dist: LoadingDist::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LocusError::InvalidConfig(msg));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if self.q == 0 || self.subjects == 0 {
            return bad("q and N must be positive".into());
        }
        match &self.scenario {
            Scenario::Custom(s) => {
                if s.nrows() != self.q || s.ncols() != connmat::edge_count(self.nodes) {
                    return bad(format!(
                        "custom sources are {:?}, expected {}×{}",
                        s.shape(),
                        self.q,
                        connmat::edge_count(self.nodes)
                    ));
                }
            }
            _ => {
                if self.nodes < MIN_TEMPLATE_NODES {
                    return bad(format!(
                        "templates need V >= {MIN_TEMPLATE_NODES}, got {}",
                        self.nodes
                    ));
                }
                if self.q > 3 {
                    return bad(format!("built-in scenarios provide 3 sources, asked for {}", self.q));
                }
            }
        }
        match &self.loading_dist {
            LoadingDist::SplitUniform { low, high } if !(0.0 <= *low && low < high) => {
                bad(format!("split-uniform loadings need 0 <= low < high, got [{low}, {high}]"))
            }
            LoadingDist::Gaussian { sd } if !(*sd > 0.0) => bad(format!("loading SD must be positive, got {sd}")),
            LoadingDist::Fixed(a) if a.shape() != (self.subjects, self.q) => bad(format!(
                "fixed loadings are {:?}, expected {}×{}",
                a.shape(),
                self.subjects,
                self.q
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `q × p` true sources.
    pub sources: DMatrix<f64>,
    /// `N × q` true loadings.
    pub loadings: DMatrix<f64>,
    pub noise_sd: f64,
}

/// 0-based nodes covered by the fractional range `[a, b]` of `0..V`.
fn span(a: f64, b: f64, nodes: usize) -> std::ops::RangeInclusive<usize> {
    let v = nodes as f64;
    let hi = ((b * v).floor() as usize).min(nodes - 1);
    ((a * v).ceil() as usize)..=hi
}

/// Edge vector of the symmetric closure of an ordered-pair predicate.
fn template(nodes: usize, pred: impl Fn(usize, usize) -> bool) -> DVector<f64> {
    let index = EdgeIndex::new(nodes);
    DVector::from_iterator(
        index.len(),
        index.pairs().iter().map(|&(u, v)| if pred(u, v) || pred(v, u) { 1.0 } else { 0.0 }),
    )
}

/// The three Scenario I templates.
pub fn blocks_cross_templates(nodes: usize) -> [DVector<f64>; 3] {
    let diag = span(0.1, 0.4, nodes);
    let band = span(0.45, 0.55, nodes);
    let (rows, cols) = (span(0.6, 0.8, nodes), span(0.2, 0.4, nodes));
    [
        template(nodes, |u, v| diag.contains(&u) && diag.contains(&v)),
        template(nodes, |u, _| band.contains(&u)),
        template(nodes, |u, v| rows.contains(&u) && cols.contains(&v)),
    ]
}

/// The three Scenario II templates.
pub fn triangle_circle_square_templates(nodes: usize) -> [DVector<f64>; 3] {
    let v = nodes as f64;
    let (cu, cv, r1, r2) = (0.55 * v, 0.25 * v, 0.06 * v, 0.12 * v);
    let (rows, cols) = (span(0.65, 0.9, nodes), span(0.1, 0.35, nodes));
    [
        template(nodes, |a, b| a != b && (a + b) as f64 <= 0.7 * v),
        template(nodes, |a, b| {
            let d2 = (a as f64 - cu).powi(2) + (b as f64 - cv).powi(2);
            a != b && (r1 * r1..=r2 * r2).contains(&d2)
        }),
        template(nodes, |a, b| {
            rows.contains(&a)
                && cols.contains(&b)
                && (a == *rows.start() || a == *rows.end() || b == *cols.start() || b == *cols.end())
        }),
    ]
}

fn scenario_sources(spec: &SyntheticSpec) -> Result<DMatrix<f64>> {
    let templates = match &spec.scenario {
        Scenario::Custom(s) => return Ok(s.clone()),
        Scenario::BlocksCross => blocks_cross_templates(spec.nodes),
        Scenario::TriangleCircleSquare => triangle_circle_square_templates(spec.nodes),
    };
    let p = connmat::edge_count(spec.nodes);
    let mut sources = DMatrix::zeros(spec.q, p);
    for (l, t) in templates.iter().take(spec.q).enumerate() {
        if t.iter().all(|&x| x == 0.0) {
            return Err(LocusError::InvalidConfig(format!(
                "template {} is empty at V={}",
                l + 1,
                spec.nodes
            )));
        }
        sources.set_row(l, &t.transpose());
    }
    Ok(sources)
}

/// Draws `Y_i = Σ_ℓ a_iℓ S_ℓ + e_i`. Loadings are drawn first (row-major),
/// then noise (subject-major), from one seeded stream.
pub fn generate(spec: &SyntheticSpec) -> Result<(ConnectivityDataset, GroundTruth)> {
    spec.validate()?;
    let sources = scenario_sources(spec)?;
    let (n, q, p) = (spec.subjects, spec.q, sources.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut loadings = DMatrix::zeros(n, q);
    match &spec.loading_dist {
        LoadingDist::Fixed(a) => loadings.copy_from(a),
        LoadingDist::SplitUniform { low, high } => {
            for i in 0..n {
                for l in 0..q {
                    let magnitude = rng.random_range(*low..=*high);
                    loadings[(i, l)] = if rng.random_bool(0.5) { magnitude } else { -magnitude };
                }
            }
        }
        LoadingDist::Gaussian { sd } => {
            let dist = Normal::new(0.0, *sd).expect("validated SD");
            for i in 0..n {
                for l in 0..q {
                    loadings[(i, l)] = dist.sample(&mut rng);
                }
            }
        }
    }

    let mut data = &loadings * &sources;
    if spec.sigma > 0.0 {
        let noise = Normal::new(0.0, spec.sigma).expect("validated sigma");
        for i in 0..n {
            for k in 0..p {
                data[(i, k)] += noise.sample(&mut rng);
            }
        }
    }
    let dataset = ConnectivityDataset::new(data, spec.nodes, None)?;
    Ok((
        dataset,
        GroundTruth {
            sources,
            loadings,
            noise_sd: spec.sigma,
        },
    ))
}
