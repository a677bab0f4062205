//! Sketch-and-factor preconditioning and empirical conditioning reports.
//!
//! `well_conditioned_basis` sketches A, takes a thin QR of the sketch, and
//! returns U = A R^{-1}. `measure_conditioning` reports alpha_hat, the
//! entrywise p-norm of U, and beta_hat, an empirical maximum of
//! ||x||_q / ||U x||_p over a witness set. beta_hat is a lower bound on
//! the true constant (exact dual-norm maximization is out of reach for
//! p != 2), so reports are labeled empirical.

use serde::{Deserialize, Serialize};

use crate::distortion::hill_climb;
use crate::embed::{apply, build, EmbeddingSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{DenseMatrix, MatrixRef};
use crate::norm::{dual_norm, lp_norm, lp_norm_unchecked, PNorm};
use crate::rng::RngStream;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub p: f64,
    /// Entrywise p-norm of U.
    pub alpha_hat: f64,
    /// Empirical max of ||x||_q / ||Ux||_p; a lower bound on the true beta.
    pub beta_hat: f64,
    pub witnesses: usize,
}

impl ConditioningReport {
    pub fn product(&self) -> f64 {
        self.alpha_hat * self.beta_hat
    }
}

/// U = A R^{-1} with Pi A = Q R. `sketch` of `None` factors A directly
/// (an identity sketch); otherwise the template's family and parameters
/// are used with n, d and seed taken from this call.
pub fn well_conditioned_basis(
    a: &DenseMatrix,
    p: PNorm,
    sketch: Option<&EmbeddingSpec>,
    seed: u64,
) -> Result<DenseMatrix> {
    let sketched: DenseMatrix = match sketch {
        None => a.clone(),
        Some(template) => {
            let mut spec = template.clone();
            spec.n = a.rows();
            spec.d = a.cols();
            spec.p = p.value();
            spec.seed = seed;
            let e = build(&spec)?;
            apply(&e, MatrixRef::Dense(a))?
        }
    };
    if sketched.rows() < sketched.cols() {
        return Err(Error::Conditioning(
            "sketch has fewer rows than columns; enlarge row_const or re-seed".into(),
        ));
    }
    let (_, r) = linalg::thin_qr(&sketched)?;
    let max_diag = (0..r.cols()).map(|k| r.get(k, k)).fold(0.0f64, f64::max);
    for k in 0..r.cols() {
        if r.get(k, k) <= 1e-12 * max_diag {
            return Err(Error::Conditioning(
                "sketched matrix is numerically rank deficient; re-seed the sketch".into(),
            ));
        }
    }
    linalg::right_apply_r_inverse(a, &r)
}

/// Measures (alpha, beta) empirically with at least `witnesses` probes:
/// the d coordinate directions, Gaussian directions, and hill-climb
/// refinement of the strongest probes.
pub fn measure_conditioning(
    u: &DenseMatrix,
    p: PNorm,
    witnesses: usize,
    seed: u64,
) -> Result<ConditioningReport> {
    let d = u.cols();
    if witnesses < d {
        return Err(Error::arg(format!(
            "need at least d = {d} witnesses, got {witnesses}"
        )));
    }
    for j in 0..d {
        if (0..u.rows()).all(|i| u.get(i, j) == 0.0) {
            return Err(Error::Degenerate(format!("column {j} of U is zero")));
        }
    }
    let alpha_hat = lp_norm(u.data(), p)?;
    let q = p.dual();
    let pv = p.value();

    let score = |x: &[f64]| -> Option<f64> {
        let img = u.matvec(x).ok()?;
        let denom = lp_norm_unchecked(&img, pv);
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        Some(dual_norm(x, q) / denom)
    };

    let mut stream = RngStream::new(seed, "conditioning");
    let mut probes: Vec<(f64, Vec<f64>)> = Vec::with_capacity(witnesses);
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        if let Some(s) = score(&e) {
            probes.push((s, e));
        }
    }
    while probes.len() < witnesses {
        let x = stream.normal_vec(d);
        if let Some(s) = score(&x) {
            probes.push((s, x));
        }
    }
    probes.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let mut beta_hat = probes.last().map(|(s, _)| *s).unwrap_or(0.0);
    let closure = |x: &[f64]| score(x);
    for (s, x) in probes.iter().rev().take(5) {
        let (_, refined) = hill_climb(&closure, x, *s, true, 100);
        beta_hat = beta_hat.max(refined);
    }
    Ok(ConditioningReport {
        p: pv,
        alpha_hat,
        beta_hat,
        witnesses: probes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbeddingFamily;
    use approx::assert_relative_eq;

    fn gaussian(seed: u64, rows: usize, cols: usize) -> DenseMatrix {
        let mut s = RngStream::new(seed, "cond-test");
        DenseMatrix::from_fn(rows, cols, |_, _| s.standard_normal())
    }

    #[test]
    fn orthonormal_input_with_identity_sketch_is_unchanged() {
        let a = gaussian(1, 50, 4);
        let (q, _) = crate::linalg::thin_qr(&a).unwrap();
        let p = PNorm::new(1.0).unwrap();
        let u = well_conditioned_basis(&q, p, None, 0).unwrap();
        for (x, y) in u.data().iter().zip(q.data()) {
            assert_relative_eq!(x, y, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_measures_exactly() {
        let u = DenseMatrix::identity(5);
        let p = PNorm::new(1.25).unwrap();
        let report = measure_conditioning(&u, p, 50, 3).unwrap();
        assert_relative_eq!(report.alpha_hat, 5.0f64.powf(1.0 / 1.25), max_relative = 1e-12);
        assert_relative_eq!(report.beta_hat, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn scaling_halves_beta_and_doubles_alpha() {
        let mut u = DenseMatrix::identity(4);
        u.scale(2.0);
        let p = PNorm::new(1.0).unwrap();
        let report = measure_conditioning(&u, p, 40, 5).unwrap();
        assert_relative_eq!(report.alpha_hat, 8.0, max_relative = 1e-12);
        assert_relative_eq!(report.beta_hat, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn zero_column_rejected() {
        let mut u = DenseMatrix::identity(3);
        for i in 0..3 {
            u.set(i, 1, 0.0);
        }
        let p = PNorm::new(1.0).unwrap();
        assert!(matches!(
            measure_conditioning(&u, p, 10, 1),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn witness_floor_enforced() {
        let u = DenseMatrix::identity(6);
        let p = PNorm::new(1.0).unwrap();
        assert!(measure_conditioning(&u, p, 5, 1).is_err());
    }

    #[test]
    fn preconditioning_improves_a_bad_matrix() {
        // diag(1, 1000) padded with zero rows.
        let mut a = DenseMatrix::zeros(20, 2);
        a.set(0, 0, 1.0);
        a.set(1, 1, 1000.0);
        let p = PNorm::new(1.0).unwrap();
        let before = measure_conditioning(&a, p, 100, 7).unwrap();
        let u = well_conditioned_basis(&a, p, None, 7).unwrap();
        let after = measure_conditioning(&u, p, 100, 7).unwrap();
        assert!(
            after.product() < before.product(),
            "product went {} -> {}",
            before.product(),
            after.product()
        );
    }

    #[test]
    fn sketched_pipeline_meets_loose_bound() {
        // Random tall Gaussian input through the two-block sketch; the
        // measured product stays under 100 d^2.
        let a = gaussian(11, 2000, 6);
        let p = PNorm::new(1.0).unwrap();
        let template = EmbeddingSpec::new(EmbeddingFamily::ComposedCs, 1.0, 1, 1, 0);
        let u = well_conditioned_basis(&a, p, Some(&template), 23).unwrap();
        let report = measure_conditioning(&u, p, 500, 29).unwrap();
        assert!(
            report.product() <= 100.0 * 36.0,
            "alpha*beta = {}",
            report.product()
        );
    }

    #[test]
    fn column_space_is_preserved() {
        let a = gaussian(13, 300, 5);
        let p = PNorm::new(1.5).unwrap();
        let template = EmbeddingSpec::new(EmbeddingFamily::ComposedCs, 1.5, 1, 1, 0);
        let u = well_conditioned_basis(&a, p, Some(&template), 31).unwrap();
        // Project each column of U onto col(A); residuals must vanish.
        let (qa, _) = crate::linalg::thin_qr(&a).unwrap();
        for j in 0..u.cols() {
            let col = u.column(j);
            let mut proj = vec![0.0; 300];
            for k in 0..qa.cols() {
                let qk = qa.column(k);
                let dot: f64 = qk.iter().zip(&col).map(|(a, b)| a * b).sum();
                for (pi, qi) in proj.iter_mut().zip(&qk) {
                    *pi += dot * qi;
                }
            }
            let num: f64 = proj
                .iter()
                .zip(&col)
                .map(|(p, c)| (p - c) * (p - c))
                .sum::<f64>()
                .sqrt();
            let den: f64 = col.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!(num <= 1e-8 * den, "column {j}: residual {num} vs {den}");
        }
    }

    #[test]
    fn scale_equivariance_is_bit_exact_for_power_of_two() {
        // Scaling A by 4 scales R by 4 and leaves U = A R^{-1} unchanged,
        // exactly, because every operation is homogeneous in f64.
        let a = gaussian(17, 400, 5);
        let mut a4 = a.clone();
        a4.scale(4.0);
        let p = PNorm::new(1.0).unwrap();
        let template = EmbeddingSpec::new(EmbeddingFamily::ComposedCs, 1.0, 1, 1, 0);
        let u1 = well_conditioned_basis(&a, p, Some(&template), 41).unwrap();
        let u2 = well_conditioned_basis(&a4, p, Some(&template), 41).unwrap();
        assert_eq!(u1.data(), u2.data());
    }

    #[test]
    fn beta_converges_with_witness_count() {
        let a = gaussian(19, 500, 4);
        let p = PNorm::new(1.0).unwrap();
        let u = well_conditioned_basis(&a, p, None, 0).unwrap();
        let small = measure_conditioning(&u, p, 1000, 43).unwrap();
        let large = measure_conditioning(&u, p, 100_000, 47).unwrap();
        assert!(large.beta_hat <= small.beta_hat * 2.0);
        assert!(small.beta_hat <= large.beta_hat * 2.0);
    }
}
