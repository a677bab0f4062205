//! Vector p-norms for p in [1, 2] and the dual-exponent bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An exponent p in [1, 2] together with its dual q = p/(p-1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PNorm {
    p: f64,
}

impl PNorm {
    pub fn new(p: f64) -> Result<Self> {
        if !(1.0..=2.0).contains(&p) {
            return Err(Error::arg(format!("p must lie in [1, 2], got {p}")));
        }
        Ok(PNorm { p })
    }

    pub fn value(&self) -> f64 {
        self.p
    }

    /// Dual exponent; infinity when p = 1.
    pub fn dual(&self) -> f64 {
        if self.p == 1.0 {
            f64::INFINITY
        } else {
            self.p / (self.p - 1.0)
        }
    }
}

impl TryFrom<f64> for PNorm {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        PNorm::new(p)
    }
}

impl From<PNorm> for f64 {
    fn from(p: PNorm) -> f64 {
        p.p
    }
}

/// (sum |v_i|^p)^(1/p); zero for the empty or all-zero vector.
///
/// Rejects non-finite entries.
pub fn lp_norm(v: &[f64], p: PNorm) -> Result<f64> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite entry in lp_norm input".into()));
    }
    Ok(lp_norm_unchecked(v, p.value()))
}

/// Same as [`lp_norm`] but skips the finiteness scan; for hot loops on
/// values we generated ourselves.
pub(crate) fn lp_norm_unchecked(v: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Norm with a possibly infinite exponent (the dual of some p in [1, 2]).
pub fn dual_norm(v: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else {
        lp_norm_unchecked(v, q)
    }
}

/// Checks the norm comparison `lq <= lp <= n^(1/p - 1/q) * lq` for
/// 1 <= p <= q <= 2, within relative tolerance 1e-12.
pub fn norm_sandwich_check(v: &[f64], p: f64, q: f64) -> Result<bool> {
    if p > q {
        return Err(Error::arg(format!("need p <= q, got p={p}, q={q}")));
    }
    let p = PNorm::new(p)?;
    let q = PNorm::new(q)?;
    let np = lp_norm(v, p)?;
    let nq = lp_norm(v, q)?;
    let n = v.len() as f64;
    let factor = n.powf(1.0 / p.value() - 1.0 / q.value());
    let tol = 1e-12;
    let lower_ok = nq <= np * (1.0 + tol);
    let upper_ok = np <= factor * nq * (1.0 + tol);
    Ok(lower_ok && upper_ok)
}
