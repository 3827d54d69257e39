//! Diagonal-covariance Gaussian mixtures fitted by expectation-maximization,
//! with BIC selection of the component count.
//!
//! Fitting sorts the points into a canonical (lexicographic) order first, so
//! the fitted model does not depend on the order the caller supplies them in.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Per-dimension variances are also floored at this fraction of the data's
/// variance in that dimension, so a component cannot collapse onto a few
/// duplicate points.
pub const RELATIVE_VARIANCE_FLOOR: f64 = 1e-2;
pub const MAX_ITERATIONS: usize = 100;
/// EM stops once the log-likelihood improves by less than this.
pub const TOLERANCE: f64 = 1e-6;
/// BIC values closer than this count as a tie (the smaller k wins).
pub const BIC_TIE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GmmError {
    #[error("need at least k={k} points, got {n}")]
    Degenerate { n: usize, k: usize },
    #[error("component count must be >= 1")]
    ZeroComponents,
    #[error("points must have dimension >= 1")]
    ZeroDimension,
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub k: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub iterations_run: usize,
    /// Log-likelihood after every E-step, in order.
    pub ll_history: Vec<f64>,
}

fn validate(points: &[Vec<f64>]) -> Result<usize, GmmError> {
    let dim = points.first().map(Vec::len).unwrap_or(0);
    for (index, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(GmmError::DimensionMismatch {
                index,
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(GmmError::NonFinite { index });
        }
    }
    if !points.is_empty() && dim == 0 {
        return Err(GmmError::ZeroDimension);
    }
    Ok(dim)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// k-means++ seeding: first center uniform, the rest by squared distance.
fn kmeanspp(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

impl GmmModel {
    fn component_log_density(&self, j: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((xi, mu), var) in x.iter().zip(&self.means[j]).zip(&self.variances[j]) {
            let diff = xi - mu;
            acc += (2.0 * PI * var).ln() + diff * diff / var;
        }
        self.weights[j].ln() - 0.5 * acc
    }

    /// Log responsibilities of one point (unnormalized) and its log density.
    fn point_terms(&self, x: &[f64], buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        buf.extend((0..self.k).map(|j| self.component_log_density(j, x)));
        log_sum_exp(buf)
    }

    /// Total log-likelihood of `points` under the model.
    pub fn log_likelihood_of(&self, points: &[Vec<f64>]) -> Result<f64, GmmError> {
        self.check_dim(points)?;
        let mut buf = Vec::with_capacity(self.k);
        Ok(points.iter().map(|p| self.point_terms(p, &mut buf)).sum())
    }

    /// Posterior component probabilities per point; each row sums to 1.
    pub fn responsibilities(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, GmmError> {
        self.check_dim(points)?;
        let mut buf = Vec::with_capacity(self.k);
        Ok(points
            .iter()
            .map(|p| {
                let lse = self.point_terms(p, &mut buf);
                buf.iter().map(|l| (l - lse).exp()).collect()
            })
            .collect())
    }

    fn check_dim(&self, points: &[Vec<f64>]) -> Result<(), GmmError> {
        validate(points)?;
        match points.first() {
            Some(p) if p.len() != self.dim => Err(GmmError::DimensionMismatch {
                index: 0,
                expected: self.dim,
                got: p.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Number of free parameters: weights, means and diagonal variances.
    pub fn free_parameters(&self) -> usize {
        (self.k - 1) + 2 * self.k * self.dim
    }
}

/// Fits a `k`-component diagonal GMM by EM.
pub fn em_fit(points: &[Vec<f64>], k: usize, seed: u64) -> Result<GmmModel, GmmError> {
    if k == 0 {
        return Err(GmmError::ZeroComponents);
    }
    let dim = validate(points)?;
    let n = points.len();
    if n < k {
        return Err(GmmError::Degenerate { n, k });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(&points[a], &points[b]));
    let pts: Vec<&[f64]> = order.iter().map(|&i| points[i].as_slice()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = kmeanspp(&pts, k, &mut rng);

    let mut global_var = vec![0.0; dim];
    let mut global_mean = vec![0.0; dim];
    for p in &pts {
        for (m, x) in global_mean.iter_mut().zip(p.iter()) {
            *m += x / n as f64;
        }
    }
    for p in &pts {
        for ((v, m), x) in global_var.iter_mut().zip(&global_mean).zip(p.iter()) {
            *v += (x - m) * (x - m) / n as f64;
        }
    }
    let floor: Vec<f64> = global_var
        .iter()
        .map(|v| (v * RELATIVE_VARIANCE_FLOOR).max(VARIANCE_FLOOR))
        .collect();
    for v in &mut global_var {
        *v = v.max(VARIANCE_FLOOR);
    }

    let mut model = GmmModel {
        k,
        dim,
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![global_var; k],
        log_likelihood: f64::NEG_INFINITY,
        iterations_run: 0,
        ll_history: Vec::new(),
    };

    let mut resp = vec![vec![0.0; k]; n];
    let mut buf = Vec::with_capacity(k);
    let mut e_step = |model: &GmmModel, resp: &mut Vec<Vec<f64>>| -> f64 {
        let mut ll = 0.0;
        for (p, row) in pts.iter().zip(resp.iter_mut()) {
            let lse = model.point_terms(p, &mut buf);
            ll += lse;
            for (r, l) in row.iter_mut().zip(&buf) {
                *r = (l - lse).exp();
            }
        }
        ll
    };

    let mut ll = e_step(&model, &mut resp);
    model.ll_history.push(ll);
    loop {
        if model.iterations_run >= MAX_ITERATIONS {
            break;
        }
        m_step(&mut model, &pts, &resp, &floor);
        model.iterations_run += 1;
        let next = e_step(&model, &mut resp);
        model.ll_history.push(next);
        let improvement = next - ll;
        debug_assert!(
            improvement >= -1e-7 * next.abs().max(1.0),
            "EM log-likelihood decreased: {ll} -> {next}"
        );
        ll = next;
        if improvement < TOLERANCE {
            break;
        }
    }
    model.log_likelihood = ll;
    Ok(model)
}

fn m_step(model: &mut GmmModel, pts: &[&[f64]], resp: &[Vec<f64>], floor: &[f64]) {
    let n = pts.len() as f64;
    for j in 0..model.k {
        let nj: f64 = resp.iter().map(|r| r[j]).sum();
        if nj <= f64::MIN_POSITIVE {
            // Component lost all mass; it stays inert at weight 0.
            model.weights[j] = 0.0;
            continue;
        }
        model.weights[j] = nj / n;
        let mut mean = vec![0.0; model.dim];
        for (p, r) in pts.iter().zip(resp) {
            let w = r[j];
            if w == 0.0 {
                continue;
            }
            for (m, x) in mean.iter_mut().zip(p.iter()) {
                *m += w * x;
            }
        }
        for m in &mut mean {
            *m /= nj;
        }
        let mut var = vec![0.0; model.dim];
        for (p, r) in pts.iter().zip(resp) {
            let w = r[j];
            if w == 0.0 {
                continue;
            }
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(p.iter()) {
                *v += w * (x - m) * (x - m);
            }
        }
        for (v, f) in var.iter_mut().zip(floor) {
            *v = (*v / nj).max(*f);
        }
        model.means[j] = mean;
        model.variances[j] = var;
    }
}

/// BIC = p ln(n) - 2 ln L; lower is better.
pub fn bic_score(model: &GmmModel, points: &[Vec<f64>]) -> Result<f64, GmmError> {
    let ll = model.log_likelihood_of(points)?;
    let n = points.len() as f64;
    Ok(model.free_parameters() as f64 * n.ln() - 2.0 * ll)
}

/// Fits every k in `1..=min(k_max, n)` and returns the model with the lowest
/// BIC. Fit k uses seed `seed + k`.
pub fn select_model(points: &[Vec<f64>], k_max: usize, seed: u64) -> Result<GmmModel, GmmError> {
    validate(points)?;
    let upper = k_max.min(points.len()).max(1);
    let fits: Vec<(GmmModel, f64)> = (1..=upper)
        .into_par_iter()
        .map(|k| {
            let m = em_fit(points, k, seed.wrapping_add(k as u64))?;
            let bic = bic_score(&m, points)?;
            Ok((m, bic))
        })
        .collect::<Result<_, GmmError>>()?;
    let mut best: Option<(GmmModel, f64)> = None;
    for (m, bic) in fits {
        match &best {
            Some((_, b)) if bic >= *b - BIC_TIE => {}
            _ => best = Some((m, bic)),
        }
    }
    Ok(best.expect("at least one k is fitted").0)
}

pub fn select_num_clusters(points: &[Vec<f64>], k_max: usize, seed: u64) -> Result<usize, GmmError> {
    Ok(select_model(points, k_max, seed)?.k)
}

/// Projects `points` onto their top `d` principal components (centered
/// scores), found by orthogonal subspace iteration from a seeded start.
/// Returns the points unchanged when they already have at most `d`
/// dimensions.
pub fn project_principal(points: &[Vec<f64>], d: usize, seed: u64) -> Result<Vec<Vec<f64>>, GmmError> {
    let dim = validate(points)?;
    if points.is_empty() || dim <= d {
        return Ok(points.to_vec());
    }
    let d = d.max(1);
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / n;
        }
    }
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    orthonormalize(&mut basis);
    for _ in 0..PCA_ITERATIONS {
        // basis <- C basis, with C = X^T X applied as two products.
        let next: Vec<Vec<f64>> = basis
            .iter()
            .map(|v| {
                let mut out = vec![0.0; dim];
                for row in &centered {
                    let s: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
                    for (o, a) in out.iter_mut().zip(row) {
                        *o += s * a;
                    }
                }
                out
            })
            .collect();
        let mut next = next;
        orthonormalize(&mut next);
        let settled = next
            .iter()
            .zip(&basis)
            .all(|(a, b)| 1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().abs() < PCA_TOLERANCE);
        basis = next;
        if settled {
            break;
        }
    }
    Ok(centered
        .iter()
        .map(|row| {
            basis
                .iter()
                .map(|v| row.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect())
}

const PCA_ITERATIONS: usize = 200;
const PCA_TOLERANCE: f64 = 1e-10;

/// Modified Gram-Schmidt. A vector that collapses to zero is kept as zero.
fn orthonormalize(vs: &mut [Vec<f64>]) {
    for i in 0..vs.len() {
        for j in 0..i {
            let dot: f64 = vs[i].iter().zip(&vs[j]).map(|(a, b)| a * b).sum();
            let (head, tail) = vs.split_at_mut(i);
            for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                *a -= dot * b;
            }
        }
        let norm = vs[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            vs[i].iter_mut().for_each(|x| *x /= norm);
        } else {
            vs[i].iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn two_blobs(seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut pts = Vec::new();
        for c in [0.0, 10.0] {
            for _ in 0..100 {
                pts.push(vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)]);
            }
        }
        pts
    }

    #[test]
    fn identical_points_single_component() {
        let pts = vec![vec![1.5, -2.0]; 7];
        let m = em_fit(&pts, 1, 3).unwrap();
        assert_eq!(m.means[0], vec![1.5, -2.0]);
        assert!(m.variances[0].iter().all(|v| *v == VARIANCE_FLOOR));
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
        assert_eq!(select_num_clusters(&pts, 5, 1).unwrap(), 1);
    }

    #[test]
    fn recovers_two_blobs() {
        let pts = two_blobs(7);
        let m = em_fit(&pts, 2, 7).unwrap();
        let mut means = m.means.clone();
        means.sort_by(|a, b| lex_cmp(a, b));
        for (got, want) in means.iter().zip([[0.0, 0.0], [10.0, 10.0]]) {
            let d = sq_dist(got, &want).sqrt();
            assert!(d < 0.3, "mean {got:?} off by {d}");
        }
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_likelihood_never_decreases() {
        for seed in 0..5 {
            let pts = two_blobs(seed);
            for k in 1..=4 {
                let m = em_fit(&pts, k, seed).unwrap();
                for w in m.ll_history.windows(2) {
                    assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{w:?}");
                }
                assert!(m.iterations_run <= MAX_ITERATIONS);
            }
        }
    }

    #[test]
    fn nesting_k_equals_n() {
        let pts: Vec<Vec<f64>> = two_blobs(3).into_iter().step_by(20).collect();
        let one = em_fit(&pts, 1, 0).unwrap();
        let all = em_fit(&pts, pts.len(), 0).unwrap();
        assert!(all.log_likelihood >= one.log_likelihood);
    }

    #[test]
    fn bic_prefers_the_right_count() {
        let pts = two_blobs(11);
        let b1 = bic_score(&em_fit(&pts, 1, 1).unwrap(), &pts).unwrap();
        let b2 = bic_score(&em_fit(&pts, 2, 2).unwrap(), &pts).unwrap();
        assert!(b2 < b1);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let tight: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![noise.sample(&mut rng), noise.sample(&mut rng)])
            .collect();
        let b1 = bic_score(&em_fit(&tight, 1, 1).unwrap(), &tight).unwrap();
        let b5 = bic_score(&em_fit(&tight, 5, 5).unwrap(), &tight).unwrap();
        assert!(b1 < b5);
    }

    #[test]
    fn bic_formula_and_single_point() {
        let pts = vec![vec![2.0, 3.0]];
        let m = em_fit(&pts, 1, 0).unwrap();
        let bic = bic_score(&m, &pts).unwrap();
        assert!(bic.is_finite());
        assert_eq!(bic, -2.0 * m.log_likelihood);

        let pts = two_blobs(1);
        let m = em_fit(&pts, 3, 0).unwrap();
        let p = (3 - 1) + 3 * 2 + 3 * 2;
        let want = p as f64 * (pts.len() as f64).ln() - 2.0 * m.log_likelihood;
        assert!((bic_score(&m, &pts).unwrap() - want).abs() < 1e-9 * want.abs());
        assert!(matches!(
            bic_score(&m, &[vec![1.0, 2.0, 3.0]]),
            Err(GmmError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn selection_bounds() {
        let pts = vec![vec![0.0], vec![5.0], vec![10.0]];
        assert!(select_num_clusters(&pts, 10, 0).unwrap() <= 3);
    }

    #[test]
    fn errors() {
        assert_eq!(
            em_fit(&[vec![1.0]], 2, 0).unwrap_err(),
            GmmError::Degenerate { n: 1, k: 2 }
        );
        assert_eq!(
            em_fit(&[vec![1.0], vec![f64::NAN]], 1, 0).unwrap_err(),
            GmmError::NonFinite { index: 1 }
        );
        assert!(matches!(
            em_fit(&[vec![1.0], vec![1.0, 2.0]], 1, 0),
            Err(GmmError::DimensionMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn responsibilities_are_distributions() {
        let pts = two_blobs(4);
        let m = em_fit(&pts, 3, 4).unwrap();
        for row in m.responsibilities(&pts).unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_ignores_input_order() {
        let pts = two_blobs(9);
        let mut shuffled = pts.clone();
        shuffled.reverse();
        shuffled.swap(3, 150);
        let a = em_fit(&pts, 2, 9).unwrap();
        let b = em_fit(&shuffled, 2, 9).unwrap();
        assert_eq!(a, b);
    }
}
