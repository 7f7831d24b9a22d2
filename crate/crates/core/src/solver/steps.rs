//! Closed-form block updates of the node-rotation scheme.

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::source::LowRankSource;
use crate::connmat;
use crate::error::{LocusError, Result};
use crate::linalg;
use crate::preprocess::WhitenedData;

/// Elementwise `sign(y)·max(|y| − t, 0)`.
pub fn soft_threshold(y: &DVector<f64>, t: f64) -> DVector<f64> {
    debug_assert!(t >= 0.0);
    y.map(|v| {
        let m = v.abs() - t;
        if m > 0.0 {
            m.copysign(v)
        } else {
            0.0
        }
    })
}

/// Least-squares row `x` minimising `‖b − X(−v) D x‖²`.
///
/// `others` is `X(−v)`; `d` must be free of zeros.
pub fn project_node(others: &DMatrix<f64>, d: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let gram = others.transpose() * others;
    let rhs = others.transpose() * b;
    let (z, fallback) = linalg::solve_psd(&gram, &rhs);
    if fallback {
        debug!("node projection: rank-deficient X(-v)'X(-v), used pseudo-inverse");
    }
    z.component_div(d)
}

/// Node update for the uniform (edge-wise) L1 penalty: threshold the
/// projected edge values at `φ/2`, then project onto the span of `X(−v) D`.
pub fn update_node(source: &LowRankSource, v: usize, y_proj: &DVector<f64>, phi: f64) -> DVector<f64> {
    let b = soft_threshold(y_proj, phi / 2.0);
    project_node(&source.others(v), &source.d, &b)
}

/// Edge-space basis inner products for `Z = [ℒ(x_r x_rᵀ)]`.
///
/// Returns `(ZᵀZ, Zᵀt)` without materialising the `p × R` matrix `Z`.
pub(crate) fn weight_normal_equations(x: &DMatrix<f64>, target: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let nodes = x.nrows();
    let r = x.ncols();
    let t = connmat::unvectorize(target.as_slice(), nodes).expect("target length matches the factor");
    let mut gram = DMatrix::zeros(r, r);
    for a in 0..r {
        for b in a..r {
            let dot = x.column(a).dot(&x.column(b));
            let diag: f64 = (0..nodes).map(|u| x[(u, a)].powi(2) * x[(u, b)].powi(2)).sum();
            let g = 0.5 * (dot * dot - diag);
            gram[(a, b)] = g;
            gram[(b, a)] = g;
        }
    }
    let tx = &t * x;
    let rhs = DVector::from_iterator(r, (0..r).map(|a| 0.5 * x.column(a).dot(&tx.column(a))));
    (gram, rhs)
}

/// Unpenalised least squares of `target` onto `Z`.
pub(crate) fn fit_weights(x: &DMatrix<f64>, target: &DVector<f64>) -> DVector<f64> {
    let (gram, rhs) = weight_normal_equations(x, target);
    let (d, fallback) = linalg::solve_psd(&gram, &rhs);
    if fallback {
        debug!("weight update: singular Z'Z, used pseudo-inverse");
    }
    d
}

/// Diagonal update for the uniform L1 penalty: threshold `y_src` edge-wise at
/// `φ/2`, then least-squares project onto `span(Z)`.
pub fn update_d(source: &LowRankSource, y_src: &DVector<f64>, phi: f64) -> DVector<f64> {
    fit_weights(&source.x, &soft_threshold(y_src, phi / 2.0))
}

/// Stacks the edge vectors of all sources into a `q × p` matrix.
pub fn stack_sources(sources: &[LowRankSource]) -> DMatrix<f64> {
    let p = connmat::edge_count(sources[0].nodes());
    let mut s = DMatrix::zeros(sources.len(), p);
    for (l, src) in sources.iter().enumerate() {
        s.set_row(l, &src.edges().transpose());
    }
    s
}

/// Mixing update `Ã = polar(Ỹ Sᵀ (S Sᵀ)^{-1})`.
pub fn update_mixing(whitened: &WhitenedData, sources: &[LowRankSource]) -> Result<DMatrix<f64>> {
    mixing_from_sources(&whitened.y_tilde, &stack_sources(sources))
}

pub(crate) fn mixing_from_sources(y_tilde: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = s * s.transpose();
    let singular = || {
        let bad: Vec<String> = (0..s.nrows())
            .filter(|&l| s.row(l).norm() == 0.0)
            .map(|l| (l + 1).to_string())
            .collect();
        let detail = if bad.is_empty() {
            "sources are linearly dependent".to_string()
        } else {
            format!("zero sources [{}]", bad.join(","))
        };
        LocusError::degenerate("solver", format!("S·Sᵀ is singular: {detail}"))
    };
    let (vals, _) = linalg::sym_eigen_desc(&gram);
    if !(vals[vals.len() - 1] > vals[0] * 1e-14) {
        return Err(singular());
    }
    let inv = gram.try_inverse().ok_or_else(singular)?;
    let raw = y_tilde * s.transpose() * inv;
    linalg::polar_orthogonalize(&raw).ok_or_else(|| {
        LocusError::degenerate("solver", "unconstrained mixing estimate is rank deficient")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
    }

    fn random_source(rng: &mut ChaCha8Rng, nodes: usize, rank: usize) -> LowRankSource {
        let x = DMatrix::from_fn(nodes, rank, |_, _| rng.random_range(-1.0..1.0));
        let d = DVector::from_fn(rank, |_, _| rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        let mut s = LowRankSource::new(x, d).unwrap();
        s.renormalize();
        s
    }

    #[test]
    fn soft_threshold_examples() {
        let y = DVector::from_vec(vec![3.0, -1.0, 0.2]);
        assert_eq!(soft_threshold(&y, 1.0).as_slice(), &[2.0, 0.0, 0.0]);
        assert_eq!(soft_threshold(&y, 0.0), y);
    }

    #[test]
    fn soft_threshold_minimises_scalar_problems() {
        // Dense grid to bracket the minimizer, then bisection on the sign of
        // the subgradient of the convex objective.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let y: f64 = rng.random_range(-5.0..5.0);
            let t: f64 = rng.random_range(0.0..3.0);
            let f = |b: f64| (y - b).powi(2) + 2.0 * t * b.abs();
            let mut best = (f64::INFINITY, 0.0);
            for i in 0..=20_000 {
                let b = -6.0 + 12.0 * i as f64 / 20_000.0;
                if f(b) < best.0 {
                    best = (f(b), b);
                }
            }
            let (mut lo, mut hi) = (best.1 - 1e-3, best.1 + 1e-3);
            let oracle = if lo <= 0.0 && hi >= 0.0 && y.abs() <= t {
                0.0
            } else {
                let slope = |b: f64| 2.0 * (b - y) + 2.0 * t * b.signum();
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if slope(mid) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            let b = soft_threshold(&DVector::from_vec(vec![y]), t)[0];
            assert!((b - oracle).abs() < 1e-8, "y={y} t={t}");
        }
    }

    #[test]
    fn node_update_without_penalty_is_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let src = random_source(&mut rng, 10, 3);
        let y = rand_vec(&mut rng, 9, 1.0);
        let x = update_node(&src, 4, &y, 0.0);
        // Normal equations: (X(-v)D)ᵀ (y − X(-v) D x) = 0.
        let xd = src.others(4) * DMatrix::from_diagonal(&src.d);
        let resid = &y - &xd * &x;
        assert!((xd.transpose() * resid).amax() < 1e-10);
    }

    #[test]
    fn full_shrinkage_zeroes_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let src = random_source(&mut rng, 8, 2);
        let y = rand_vec(&mut rng, 7, 1.0);
        let phi = 2.0 * y.amax();
        assert!(update_node(&src, 0, &y, phi).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn node_update_beats_random_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let src = random_source(&mut rng, 10, 2);
        let y = rand_vec(&mut rng, 9, 1.0);
        let phi = 0.0;
        let xd = src.others(3) * DMatrix::from_diagonal(&src.d);
        let obj = |x: &DVector<f64>| {
            let fit = &xd * x;
            (&y - &fit).norm_squared() + phi * fit.iter().map(|z| z.abs()).sum::<f64>()
        };
        let best = obj(&update_node(&src, 3, &y, phi));
        for _ in 0..10_000 {
            let cand = rand_vec(&mut rng, 2, 3.0);
            assert!(best <= obj(&cand) + 1e-12);
        }
    }

    #[test]
    fn weight_normal_equations_match_explicit_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let src = random_source(&mut rng, 7, 3);
        let t = rand_vec(&mut rng, 21, 1.0);
        let (gram, rhs) = weight_normal_equations(&src.x, &t);
        let mut z = DMatrix::zeros(21, 3);
        for r in 0..3 {
            let col = src.x.column(r).into_owned();
            let m = &col * col.transpose();
            z.set_column(r, &connmat::upper_triangle(&m));
        }
        assert!((z.transpose() * &z - gram).amax() < 1e-12);
        assert!((z.transpose() * &t - rhs).amax() < 1e-12);
    }

    #[test]
    fn d_update_orthogonal_columns_is_projection() {
        // Disjoint supports make the Z columns orthogonal.
        let mut x = DMatrix::zeros(6, 2);
        for u in 0..3 {
            x[(u, 0)] = 1.0 / 3f64.sqrt();
            x[(u + 3, 1)] = 1.0 / 3f64.sqrt();
        }
        let src = LowRankSource::new(x.clone(), DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = rand_vec(&mut rng, 15, 1.0);
        let d = update_d(&src, &y, 0.0);
        for r in 0..2 {
            let col = x.column(r).into_owned();
            let z = connmat::upper_triangle(&(&col * col.transpose()));
            let expect = z.dot(&y) / z.norm_squared();
            assert!((d[r] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn d_update_huge_penalty_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = random_source(&mut rng, 6, 2);
        let y = rand_vec(&mut rng, 15, 1.0);
        assert!(update_d(&src, &y, 100.0).iter().all(|&w| w == 0.0));
    }

    #[test]
    fn d_update_beats_random_search() {
        // Two-stage objective: the returned d is the exact minimiser of
        // ‖T − Z d‖² with T the thresholded target.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let src = random_source(&mut rng, 8, 3);
        let y = rand_vec(&mut rng, 28, 1.0);
        let phi = 0.3;
        let t = soft_threshold(&y, phi / 2.0);
        let obj = |d: &DVector<f64>| {
            let s = LowRankSource { x: src.x.clone(), d: d.clone() };
            (&t - s.edges()).norm_squared()
        };
        let best = obj(&update_d(&src, &y, phi));
        for _ in 0..10_000 {
            let cand = rand_vec(&mut rng, 3, 3.0);
            assert!(best <= obj(&cand) + 1e-12);
        }
    }

    #[test]
    fn mixing_recovers_exact_orthogonal_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let q = linalg::polar_orthogonalize(&raw).unwrap();
        let s = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let s = linalg::polar_orthogonalize(&s.transpose()).unwrap().transpose();
        // Orthonormal rows padded to 10 edges.
        let mut wide = DMatrix::zeros(3, 10);
        wide.columns_mut(0, 3).copy_from(&s);
        let y = &q * &wide;
        let est = mixing_from_sources(&y, &wide).unwrap();
        assert!((est - q).amax() < 1e-12);
    }

    #[test]
    fn mixing_matches_svd_polar_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let y = DMatrix::from_fn(3, 15, |_, _| rng.random_range(-1.0..1.0));
            let s = DMatrix::from_fn(3, 15, |_, _| rng.random_range(-1.0..1.0));
            let est = mixing_from_sources(&y, &s).unwrap();
            let raw = &y * s.transpose() * (&s * s.transpose()).try_inverse().unwrap();
            let svd = raw.svd(true, true);
            let oracle = svd.u.unwrap() * svd.v_t.unwrap();
            assert!((&est - oracle).amax() < 1e-8);
            assert!((est.transpose() * &est - DMatrix::identity(3, 3)).norm() < 1e-10);
        }
    }

    #[test]
    fn mixing_rejects_zero_source() {
        let y = DMatrix::from_element(2, 6, 1.0);
        let mut s = DMatrix::zeros(2, 6);
        s[(0, 1)] = 1.0;
        match mixing_from_sources(&y, &s) {
            Err(LocusError::Degenerate { message, .. }) => assert!(message.contains("[2]")),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }
}
