//! Probability-simplex arithmetic and constrained minimization over the simplex.
//!
//! Every mixing decision in the crate lives on the simplex. The solver here is a
//! projected-gradient loop with Barzilai-Borwein step proposals and backtracking;
//! it terminates on the KKT residual rather than on objective decrease, so the
//! optimality of whatever it returns can be checked directly by callers.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};

/// Absolute tolerance on the sum of a decision's entries.
pub const SUM_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// A point on the probability simplex: nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision(Vec<f64>);

impl Decision {
    /// Validates `weights` as a point on the simplex.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDimension("decision must have K >= 1".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Domain(format!("decision entry {w} is not a probability")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Domain(format!("decision sums to {sum}, not 1")));
        }
        Ok(Decision(weights))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidDimension("uniform decision needs K >= 1".into()));
        }
        Ok(Decision(vec![1.0 / k as f64; k]))
    }

    /// Normalizes nonnegative, not-all-zero weights onto the simplex.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::DegenerateInput("weights sum to zero".into()));
        }
        Decision::new(weights.into_iter().map(|w| w / sum).collect())
    }

    /// Softmax of `logits` with max-subtraction.
    pub fn softmax(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::InvalidDimension("softmax of an empty vector".into()));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical(format!("softmax max logit is {max}")));
        }
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        Decision::from_unnormalized(exps)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }
}

impl AsRef<[f64]> for Decision {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn uniform_decision(k: usize) -> Result<Decision> {
    Decision::uniform(k)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric positive-definite K x K matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl PsdMatrix {
    /// `alpha * I`; `alpha` must be positive.
    pub fn scaled_identity(dim: usize, alpha: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("matrix dimension must be >= 1".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = alpha;
        }
        Ok(PsdMatrix { dim, entries })
    }

    /// Builds from row-major entries, checking symmetry and positive definiteness.
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        check_len(dim * dim, entries.len())?;
        let m = PsdMatrix { dim, entries };
        if !m.is_symmetric(1e-12) {
            return Err(Error::Domain("matrix is not symmetric".into()));
        }
        m.cholesky()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// In-place `self += scale * v v^T`. Keeps positive definiteness for `scale >= 0`.
    pub fn add_rank_one(&mut self, scale: f64, v: &[f64]) -> Result<()> {
        check_len(self.dim, v.len())?;
        if scale < 0.0 {
            return Err(Error::Domain("rank-one update must be nonnegative".into()));
        }
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                self.entries[i * d + j] += scale * v[i] * v[j];
            }
        }
        Ok(())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        self.entries
            .chunks_exact(self.dim)
            .map(|row| dot(row, v))
            .collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let d = self.dim;
        (0..d).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    fn cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        self.to_nalgebra()
            .cholesky()
            .ok_or_else(|| Error::Domain("matrix is not positive definite".into()))
    }

    /// Dense inverse via Cholesky, row-major.
    pub fn inverse(&self) -> Result<Vec<f64>> {
        let inv = self.cholesky()?.inverse();
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.push(inv[(i, j)]);
            }
        }
        Ok(out)
    }

    /// Smallest eigenvalue; used by tests and debug checks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.to_nalgebra()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Euclidean projection onto the simplex (sorting-based).
pub fn project_euclidean(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    // re-normalize away accumulated rounding so the sum is 1 to machine precision
    let sum: f64 = out.iter().sum();
    if sum > 0.0 {
        out.iter_mut().for_each(|x| *x /= sum);
    }
    out
}

/// KKT residual of `p` for a gradient `grad` over the simplex: the largest gap
/// `grad_i - min(grad)` over coordinates carrying more than `support_tol` mass.
pub fn kkt_residual(p: &[f64], grad: &[f64], support_tol: f64) -> f64 {
    let min = grad.iter().copied().fold(f64::INFINITY, f64::min);
    p.iter()
        .zip(grad)
        .filter(|(pi, _)| **pi > support_tol)
        .map(|(_, g)| g - min)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Default::default()
        }
    }
}

/// Minimizes a convex differentiable `objective` over the K-simplex, starting
/// from the uniform point.
pub fn minimize_over_simplex<F, G>(
    objective: F,
    gradient: G,
    k: usize,
    opts: SolverOptions,
) -> Result<Decision>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let start = Decision::uniform(k)?;
    minimize_from(objective, gradient, start.into_vec(), opts)
}

fn finite_or_fail(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite {what} during iteration")))
    }
}

/// Projected gradient from an arbitrary feasible start.
pub(crate) fn minimize_from<F, G>(
    objective: F,
    gradient: G,
    start: Vec<f64>,
    opts: SolverOptions,
) -> Result<Decision>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let k = start.len();
    let mut p = start;
    let mut f = objective(&p);
    let mut g = gradient(&p);
    check_len(k, g.len())?;
    if !f.is_finite() {
        return Err(Error::Numerical("non-finite objective at start".into()));
    }
    finite_or_fail("gradient", &g)?;

    let mut step = 1.0 / g.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let mut best = (f64::INFINITY, p.clone());

    for _ in 0..opts.max_iter {
        let residual = kkt_residual(&p, &g, opts.tol);
        if residual < best.0 {
            best = (residual, p.clone());
        }
        if residual <= opts.tol {
            return Decision::new(p);
        }

        // backtrack on the quadratic upper model of the objective
        let (cand, fc) = loop {
            let trial: Vec<f64> = p.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
            let cand = project_euclidean(&trial);
            let fc = objective(&cand);
            let d_dot_g: f64 = cand.iter().zip(&p).zip(&g).map(|((c, x), gi)| (c - x) * gi).sum();
            let d_sq: f64 = cand.iter().zip(&p).map(|(c, x)| (c - x) * (c - x)).sum();
            let slack = 4.0 * f64::EPSILON * f.abs().max(1.0);
            if fc.is_finite() && fc <= f + d_dot_g + d_sq / (2.0 * step) + slack {
                break (cand, fc);
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(Error::Numerical("line search step underflow".into()));
            }
        };

        let new_g = gradient(&cand);
        finite_or_fail("gradient", &new_g)?;
        let (mut sy, mut ss) = (0.0, 0.0);
        for i in 0..k {
            let s = cand[i] - p[i];
            sy += s * (new_g[i] - g[i]);
            ss += s * s;
        }
        step = if sy > 0.0 && ss > 0.0 {
            (ss / sy).clamp(1e-20, 1e20)
        } else {
            (step * 2.0).min(1e20)
        };
        p = cand;
        f = fc;
        g = new_g;
    }

    let residual = kkt_residual(&p, &g, opts.tol);
    if residual <= opts.tol {
        return Decision::new(p);
    }
    if residual < best.0 {
        best = (residual, p);
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: best.0,
        best: best.1,
    })
}

/// Projection of `q` onto the simplex in the metric induced by `b`:
/// `argmin_p (p - q)^T B (p - q)`.
pub fn project_generalized(q: &[f64], b: &PsdMatrix, opts: SolverOptions) -> Result<Decision> {
    check_len(b.dim(), q.len())?;
    let on_simplex =
        q.iter().all(|x| *x >= 0.0) && (q.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE;
    if on_simplex {
        return Decision::new(q.to_vec());
    }
    let diff = |p: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(a, b)| a - b).collect() };
    let objective = |p: &[f64]| {
        let d = diff(p);
        0.5 * dot(&d, &b.mul_vec(&d))
    };
    let gradient = |p: &[f64]| b.mul_vec(&diff(p));
    // the Euclidean projection is a good warm start for well-conditioned metrics
    minimize_from(objective, gradient, project_euclidean(q), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_values() {
        assert_eq!(uniform_decision(4).unwrap().as_slice(), &[0.25; 4]);
        assert_eq!(uniform_decision(1).unwrap().as_slice(), &[1.0]);
        let p = uniform_decision(7).unwrap();
        assert!(p.as_slice().iter().all(|x| *x == 1.0 / 7.0));
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(uniform_decision(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn decision_rejects_off_simplex() {
        assert!(Decision::new(vec![0.5, 0.6]).is_err());
        assert!(Decision::new(vec![1.5, -0.5]).is_err());
        assert!(Decision::new(vec![]).is_err());
        assert!(Decision::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn euclidean_projection_of_exterior_point() {
        assert_eq!(project_euclidean(&[2.0, -1.0]), vec![1.0, 0.0]);
        let p = project_euclidean(&[0.2, 0.3, 0.5]);
        for (a, b) in p.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_quadratic_gives_uniform() {
        let p = minimize_over_simplex(
            |p| 0.5 * dot(p, p),
            |p| p.to_vec(),
            3,
            SolverOptions::default(),
        )
        .unwrap();
        for x in p.as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_objective_selects_min_coordinate() {
        let c = [1.0, 0.0, 2.0];
        let p = minimize_over_simplex(|p| dot(p, &c), |_| c.to_vec(), 3, SolverOptions::default())
            .unwrap();
        assert_eq!(p.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn linear_objective_ties_accept_any_minimizer() {
        let c = [0.0, 1.0, 0.0];
        let p = minimize_over_simplex(|p| dot(p, &c), |_| c.to_vec(), 3, SolverOptions::default())
            .unwrap();
        assert!(p.as_slice()[1] < 1e-12);
        assert!(dot(p.as_slice(), &c) < 1e-12);
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let err = minimize_over_simplex(
            |_| f64::NAN,
            |p| p.to_vec(),
            2,
            SolverOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn iteration_cap_carries_best_iterate() {
        // a one-iteration budget on an interior optimum cannot meet 1e-15
        let target = [0.1, 0.2, 0.7];
        let err = minimize_over_simplex(
            |p| p.iter().zip(&target).map(|(a, b)| (a - b).powi(4)).sum(),
            |p| p.iter().zip(&target).map(|(a, b)| 4.0 * (a - b).powi(3)).collect(),
            3,
            SolverOptions {
                tol: 1e-15,
                max_iter: 1,
            },
        )
        .unwrap_err();
        match err {
            Error::NonConvergence { best, .. } => assert_eq!(best.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn generalized_projection_fixed_point_and_exterior() {
        let id = PsdMatrix::scaled_identity(3, 1.0).unwrap();
        let u = uniform_decision(3).unwrap();
        let p = project_generalized(u.as_slice(), &id, SolverOptions::default()).unwrap();
        assert_eq!(p, u);

        let id2 = PsdMatrix::scaled_identity(2, 1.0).unwrap();
        let p = project_generalized(&[2.0, -1.0], &id2, SolverOptions::default()).unwrap();
        assert!((p.as_slice()[0] - 1.0).abs() < 1e-12);
        assert!(p.as_slice()[1].abs() < 1e-12);
    }

    #[test]
    fn rank_one_keeps_positive_definite() {
        let mut m = PsdMatrix::scaled_identity(3, 0.5).unwrap();
        m.add_rank_one(2.0, &[1.0, -1.0, 3.0]).unwrap();
        assert!(m.is_symmetric(1e-12));
        assert!(m.min_eigenvalue() > 0.0);
        let inv = m.inverse().unwrap();
        let col0 = m.mul_vec(&[inv[0], inv[3], inv[6]]);
        assert!((col0[0] - 1.0).abs() < 1e-12 && col0[1].abs() < 1e-12);
    }

    #[test]
    fn from_row_major_rejects_indefinite() {
        assert!(PsdMatrix::from_row_major(2, vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(PsdMatrix::from_row_major(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(PsdMatrix::from_row_major(2, vec![2.0, 0.5, 0.5, 1.0]).is_ok());
    }
}
