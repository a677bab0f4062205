//! Desk-scale lp regression, 1 <= p <= 2.
//!
//! The workhorse is smoothed IRLS: reweighted least squares with weights
//! (|r_i| + gamma)^{p-2}, gamma = 1e-8, which pins solution accuracy near
//! 1e-6 and is reflected in the tolerances used downstream. On top of it:
//!
//! - [`sketch_solve`]: solve the sketched instance argmin ||Pi A x - Pi b||_p
//!   and report the solution at its original-space cost;
//! - [`precondition_sample_solve`]: sketch-precondition to U = A R^{-1},
//!   sample rows with probability proportional to row p-norm mass of U,
//!   and solve the reweighted subproblem.

use serde::{Deserialize, Serialize};

use crate::conditioning::well_conditioned_basis;
use crate::embed::{apply, apply_vec, build, EmbeddingSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{DenseMatrix, MatrixRef};
use crate::norm::{lp_norm_unchecked, PNorm};
use crate::rng::RngStream;

const IRLS_SMOOTHING: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub p: PNorm,
}

impl RegressionProblem {
    /// Checks shapes, finiteness, and full column rank of A.
    pub fn new(a: DenseMatrix, b: Vec<f64>, p: PNorm) -> Result<Self> {
        if a.rows() != b.len() {
            return Err(Error::arg(format!(
                "A has {} rows but b has {} entries",
                a.rows(),
                b.len()
            )));
        }
        if a.rows() < a.cols() {
            return Err(Error::arg("need an overconstrained problem (n >= d)"));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite entry in b".into()));
        }
        if !linalg::has_full_column_rank(&a) {
            return Err(Error::Conditioning("A is numerically rank deficient".into()));
        }
        Ok(RegressionProblem { a, b, p })
    }

    pub fn cost(&self, x: &[f64]) -> f64 {
        let r = residual(&self.a, &self.b, x);
        lp_norm_unchecked(&r, self.p.value())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionResult {
    pub x_hat: Vec<f64>,
    /// ||A x_hat - b||_p on the problem the result is reported for.
    pub cost: f64,
    pub method: String,
    pub iterations: usize,
    pub seed: u64,
    pub converged: bool,
}

fn residual(a: &DenseMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = a.matvec(x).expect("dimensions checked at construction");
    ax.iter().zip(b).map(|(axi, bi)| axi - bi).collect()
}

/// Smoothed IRLS.
///
/// Optional `weights` are fixed per-row multipliers: the objective becomes
/// sum_i (w_i |r_i|)^p. The reported cost is always the unweighted
/// ||A x_hat - b||_p of the given problem, so results are replayable from
/// (problem, x_hat) alone. Non-convergence is flagged, never an error.
pub fn irls_solve(
    prob: &RegressionProblem,
    weights: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<RegressionResult> {
    if !(tol > 0.0) {
        return Err(Error::arg(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::arg("max_iter must be at least 1"));
    }
    let n = prob.a.rows();
    let d = prob.a.cols();
    let p = prob.p.value();
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::arg("weight length does not match rows"));
        }
        if w.iter().any(|&wi| !(wi >= 0.0) || !wi.is_finite()) {
            return Err(Error::arg("weights must be finite and nonnegative"));
        }
    }

    // Fold the fixed multipliers into a scaled copy once.
    let (sa, sb) = match weights {
        None => (prob.a.clone(), prob.b.clone()),
        Some(w) => {
            let mut sa = prob.a.clone();
            let mut sb = prob.b.clone();
            for i in 0..n {
                for j in 0..d {
                    let v = sa.get(i, j) * w[i];
                    sa.set(i, j, v);
                }
                sb[i] *= w[i];
            }
            (sa, sb)
        }
    };

    let gamma = IRLS_SMOOTHING;
    let smoothed = |r: &[f64]| -> f64 { r.iter().map(|ri| (ri.abs() + gamma).powf(p)).sum() };

    let mut x = vec![0.0; d];
    let mut w_ls = vec![1.0; n];
    let mut prev_cost = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for iter in 0..max_iter {
        iterations = iter + 1;
        x = linalg::weighted_least_squares(&sa, &sb, &w_ls)?;
        let r = residual(&sa, &sb, &x);
        let cost = smoothed(&r);
        if !cost.is_finite() {
            return Err(Error::Conditioning("IRLS cost diverged".into()));
        }
        if cost > prev_cost * (1.0 + 1e-9) {
            // The smoothed objective is monotone under exact solves; a rise
            // means we are at the numerical floor, so stop here.
            converged = true;
            break;
        }
        if prev_cost.is_finite() && (prev_cost - cost).abs() <= tol * prev_cost.max(1e-300) {
            converged = true;
            break;
        }
        prev_cost = cost;
        if p == 2.0 {
            converged = true;
            break;
        }
        for i in 0..n {
            w_ls[i] = (r[i].abs() + gamma).powf(p - 2.0);
        }
    }

    Ok(RegressionResult {
        cost: prob.cost(&x),
        x_hat: x,
        method: "irls".into(),
        iterations,
        seed: 0,
        converged,
    })
}

/// Builds Pi from the template (n, d, p, seed filled in from the problem),
/// solves the sketched instance, and reports the original-space cost.
pub fn sketch_solve(
    prob: &RegressionProblem,
    template: &EmbeddingSpec,
    seed: u64,
) -> Result<RegressionResult> {
    let mut spec = template.clone();
    spec.n = prob.a.rows();
    spec.d = prob.a.cols();
    spec.p = prob.p.value();
    spec.seed = seed;
    let e = build(&spec)?;
    let mut result = solve_sketched(prob, &e)?;
    result.seed = seed;
    Ok(result)
}

/// Sketch-and-solve against an already realized operator.
pub fn solve_sketched(prob: &RegressionProblem, e: &crate::embed::Embedding) -> Result<RegressionResult> {
    let sa = apply(e, MatrixRef::Dense(&prob.a))?;
    let sb = apply_vec(e, &prob.b)?;
    if !linalg::has_full_column_rank(&sa) {
        return Err(Error::Conditioning(
            "sketched matrix lost rank; re-seed the sketch".into(),
        ));
    }
    let sketched = RegressionProblem::new(sa, sb, prob.p)?;
    let inner = irls_solve(&sketched, None, 1e-10, 200)?;
    Ok(RegressionResult {
        cost: prob.cost(&inner.x_hat),
        x_hat: inner.x_hat,
        method: "sketch_solve".into(),
        iterations: inner.iterations,
        seed: e.spec.seed,
        converged: inner.converged,
    })
}

/// Sketch-precondition, row-sample with probability q_i proportional to
/// the p-norm mass of U's rows (q_i = min(1, t u_i / sum u)), reweight by
/// q_i^{-1/p}, and solve the sampled problem. Reports original-space cost.
pub fn precondition_sample_solve(
    prob: &RegressionProblem,
    template: &EmbeddingSpec,
    t: f64,
    seed: u64,
) -> Result<RegressionResult> {
    let n = prob.a.rows();
    let d = prob.a.cols();
    if t < d as f64 {
        return Err(Error::arg(format!(
            "sample size t = {t} is below d = {d}"
        )));
    }
    let p = prob.p.value();
    let u = well_conditioned_basis(&prob.a, prob.p, Some(template), seed)?;
    let mut mass = vec![0.0f64; n];
    let mut total = 0.0;
    for i in 0..n {
        let m = u.row(i).iter().map(|v| v.abs().powf(p)).sum::<f64>();
        mass[i] = m;
        total += m;
    }
    if total <= 0.0 {
        return Err(Error::Degenerate("preconditioned basis has no mass".into()));
    }
    let mut stream = RngStream::new(seed, "sample");
    let mut rows = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        let q = (t * mass[i] / total).min(1.0);
        if q > 0.0 && stream.bernoulli(q) {
            rows.push(i);
            weights.push(q.powf(-1.0 / p));
        }
    }
    if rows.len() < d {
        return Err(Error::Degenerate(format!(
            "sampled only {} rows (< d = {d}); re-seed",
            rows.len()
        )));
    }
    let mut sa = DenseMatrix::zeros(rows.len(), d);
    let mut sb = Vec::with_capacity(rows.len());
    for (k, &i) in rows.iter().enumerate() {
        for j in 0..d {
            sa.set(k, j, prob.a.get(i, j));
        }
        sb.push(prob.b[i]);
    }
    if !linalg::has_full_column_rank(&sa) {
        return Err(Error::Conditioning(
            "sampled rows lost rank; re-seed".into(),
        ));
    }
    let sampled = RegressionProblem::new(sa, sb, prob.p)?;
    let inner = irls_solve(&sampled, Some(&weights), 1e-10, 200)?;
    Ok(RegressionResult {
        cost: prob.cost(&inner.x_hat),
        x_hat: inner.x_hat,
        method: "precondition_sample_solve".into(),
        iterations: inner.iterations,
        seed,
        converged: inner.converged,
    })
}
