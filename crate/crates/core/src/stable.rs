//! Heavy-tailed samplers and Monte-Carlo tail checks.
//!
//! Symmetric p-stable variates are generated with the Chambers-Mallows-Stuck
//! transform in the standard parameterization, so p = 1 is exactly the
//! standard Cauchy inverse-CDF path and p = 2 is Gaussian with variance 2.
//!
//! The tail bounds this library leans on only assert that suitable constants
//! exist. Their working values are produced by the `calibrate` binary and
//! shipped in `data/calibration.json`; every threshold that mentions
//! C_p, U_p, L_p, alpha_p or c_p reads from that table.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Parameters of a symmetric p-stable distribution, p in [1, 2].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StableParams {
    p: f64,
    scale: f64,
}

impl StableParams {
    pub fn new(p: f64, scale: f64) -> Result<Self> {
        if !(1.0..=2.0).contains(&p) {
            return Err(Error::arg(format!("stable index p must be in [1, 2], got {p}")));
        }
        if !(scale > 0.0) {
            return Err(Error::arg(format!("scale must be positive, got {scale}")));
        }
        Ok(StableParams { p, scale })
    }

    pub fn standard(p: f64) -> Result<Self> {
        StableParams::new(p, 1.0)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Truncation threshold; values in [-alpha, alpha] get pushed out to the
/// boundary, keeping magnitudes at least alpha.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TruncationParams {
    alpha: f64,
}

impl TruncationParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::arg(format!("alpha must be positive, got {alpha}")));
        }
        Ok(TruncationParams { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Standard Cauchy quantile function, tan(pi (u - 1/2)).
#[inline]
pub fn cauchy_inverse_cdf(u: f64) -> f64 {
    (PI * (u - 0.5)).tan()
}

/// One standard Cauchy draw.
#[inline]
pub fn cauchy_draw(stream: &mut RngStream) -> f64 {
    cauchy_inverse_cdf(stream.open_unit())
}

/// i.i.d. standard Cauchy draws via the inverse CDF.
pub fn sample_cauchy(stream: &mut RngStream, count: usize) -> Vec<f64> {
    (0..count).map(|_| cauchy_draw(stream)).collect()
}

/// One draw from the symmetric p-stable law in `params`.
#[inline]
pub fn stable_draw(params: &StableParams, stream: &mut RngStream) -> f64 {
    params.scale * standard_stable_draw(params.p, stream)
}

#[inline]
fn standard_stable_draw(p: f64, stream: &mut RngStream) -> f64 {
    if p == 1.0 {
        // Exactly the Cauchy inverse-CDF path, one uniform per draw.
        return cauchy_draw(stream);
    }
    let v = PI * (stream.open_unit() - 0.5);
    let w = -stream.open_unit().ln();
    let a = (p * v).sin() / v.cos().powf(1.0 / p);
    let b = ((1.0 - p) * v).cos() / w;
    a * b.powf((1.0 - p) / p)
}

/// i.i.d. symmetric p-stable draws.
pub fn sample_pstable(
    params: &StableParams,
    stream: &mut RngStream,
    count: usize,
) -> Vec<f64> {
    (0..count).map(|_| stable_draw(params, stream)).collect()
}

/// Clamps the magnitude of `x` up to at least alpha, preserving sign; zero
/// counts as nonnegative.
pub fn truncate(x: f64, t: TruncationParams) -> f64 {
    let a = t.alpha();
    if (0.0..=a).contains(&x) {
        a
    } else if (-a..0.0).contains(&x) {
        -a
    } else {
        x
    }
}

/// E|N(0,1)|^p = 2^{p/2} Gamma((p+1)/2) / sqrt(pi).
pub fn gaussian_abs_moment(p: f64) -> f64 {
    2.0f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / PI.sqrt()
}

// Lanczos approximation, g = 7, n = 9; ample for arguments in [0.5, 2].
fn gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(mut xs: Vec<f64>, mut ys: Vec<f64>) -> f64 {
    assert!(!xs.is_empty() && !ys.is_empty());
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        // Advance past ties in both samples before comparing CDFs.
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    d
}

/// Calibrated constants for one value of p.
///
/// `C_p` brackets weighted Gaussian p-norms, `U_p`/`L_p` bound sums of
/// |X|^p from above and below at the calibration size `n`, `alpha_p` makes
/// alpha |Cauchy| stochastically dominate |X_p|^p, `c_p` is the tail
/// coefficient in Pr[X > t] ~ c_p t^{-p}, and `omega` is the observed
/// per-unit operator-norm factor of a hashed stable diagonal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationConstants {
    #[serde(rename = "C_p")]
    pub gaussian_bracket: f64,
    #[serde(rename = "U_p")]
    pub sum_upper: f64,
    #[serde(rename = "L_p")]
    pub sum_lower: f64,
    pub alpha_p: f64,
    #[serde(rename = "c_p")]
    pub tail_constant: f64,
    pub omega: f64,
    /// Split-half Monte-Carlo intervals per constant name.
    #[serde(default)]
    pub intervals: BTreeMap<String, (f64, f64)>,
    pub trials: u64,
    pub seed: u64,
    /// Vector length the U/L quantiles were calibrated at.
    pub n: usize,
    /// Failure parameter T used for the lower-tail quantile.
    #[serde(rename = "T")]
    pub t_param: f64,
}

impl CalibrationConstants {
    /// Interval for one constant; the degenerate point interval when the
    /// file predates interval tracking.
    pub fn interval(&self, name: &str) -> (f64, f64) {
        self.intervals.get(name).copied().unwrap_or_else(|| {
            let v = match name {
                "C_p" => self.gaussian_bracket,
                "U_p" => self.sum_upper,
                "L_p" => self.sum_lower,
                "alpha_p" => self.alpha_p,
                "c_p" => self.tail_constant,
                _ => f64::NAN,
            };
            (v, v)
        })
    }
}

/// The versioned constants file, keyed by the decimal rendering of p.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub version: u32,
    pub entries: BTreeMap<String, CalibrationConstants>,
}

pub fn format_p(p: f64) -> String {
    format!("{p}")
}

impl CalibrationTable {
    pub fn lookup(&self, p: f64) -> Result<&CalibrationConstants> {
        self.entries.get(&format_p(p)).ok_or_else(|| {
            Error::arg(format!(
                "no calibrated constants for p={p}; available: {:?}",
                self.entries.keys().collect::<Vec<_>>()
            ))
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::arg(format!("bad calibration JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration table serializes")
    }
}

static DEFAULT_TABLE: OnceLock<CalibrationTable> = OnceLock::new();

/// The constants shipped with the crate (see `data/calibration.json`).
pub fn default_calibration() -> &'static CalibrationTable {
    DEFAULT_TABLE.get_or_init(|| {
        CalibrationTable::from_json(include_str!("../data/calibration.json"))
            .expect("embedded calibration file is valid")
    })
}

/// Which tail event to measure.
#[derive(Debug, Clone)]
pub enum TailKind {
    /// Sum of |Cauchy| stays below U_1 n ln n.
    CauchySumUpper,
    /// Sum of |X_p|^p stays above L_p n ln(n / ln T); fails with rate 1/T.
    PStableSumLower { t: f64 },
    /// Weighted Gaussian p-norm lands inside the C_p bracket.
    WeightedGaussian { a: Vec<f64> },
}

impl TailKind {
    pub fn name(&self) -> &'static str {
        match self {
            TailKind::CauchySumUpper => "cauchy_sum_upper",
            TailKind::PStableSumLower { .. } => "pstable_sum_lower",
            TailKind::WeightedGaussian { .. } => "weighted_gaussian",
        }
    }
}

/// Outcome of a Monte-Carlo tail run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    pub kind: String,
    pub n: usize,
    pub trials: u64,
    pub empirical_probability: f64,
    /// The statistic bound the event was tested against.
    pub bound: f64,
    pub std_error: f64,
    pub target_probability: f64,
}

/// Measures the empirical frequency of `kind`'s event using the default
/// calibrated constants for `p`.
pub fn mc_tail_report(
    kind: &TailKind,
    n: usize,
    p: f64,
    trials: u64,
    stream: &mut RngStream,
) -> Result<TailReport> {
    let constants = default_calibration().lookup(p)?.clone();
    mc_tail_report_with(kind, n, p, trials, stream, &constants)
}

/// Same as [`mc_tail_report`] but with explicit constants.
pub fn mc_tail_report_with(
    kind: &TailKind,
    n: usize,
    p: f64,
    trials: u64,
    stream: &mut RngStream,
    constants: &CalibrationConstants,
) -> Result<TailReport> {
    if trials < 100 {
        return Err(Error::arg(format!("need at least 100 trials, got {trials}")));
    }
    let params = StableParams::standard(p)?;
    let (n_eff, bound, target, hit): (usize, f64, f64, Box<dyn FnMut(&mut RngStream) -> bool>) =
        match kind {
            TailKind::CauchySumUpper => {
                if n < 3 {
                    return Err(Error::arg(format!("need n >= 3, got {n}")));
                }
                let nf = n as f64;
                let bound = constants.sum_upper * nf * nf.ln();
                let target = 1.0 - nf.ln().ln() / nf.ln();
                let f = move |s: &mut RngStream| {
                    let mut acc = 0.0;
                    for _ in 0..n {
                        acc += cauchy_draw(s).abs();
                    }
                    acc <= bound
                };
                (n, bound, target, Box::new(f))
            }
            TailKind::PStableSumLower { t } => {
                if n < 3 {
                    return Err(Error::arg(format!("need n >= 3, got {n}")));
                }
                if !(*t > 1.0) {
                    return Err(Error::arg(format!("need T > 1, got {t}")));
                }
                let nf = n as f64;
                let bound = constants.sum_lower * nf * (nf / t.ln()).ln();
                let target = 1.0 - 1.0 / t;
                let f = move |s: &mut RngStream| {
                    let mut acc = 0.0;
                    for _ in 0..n {
                        acc += stable_draw(&params, s).abs().powf(p);
                    }
                    acc >= bound
                };
                (n, bound, target, Box::new(f))
            }
            TailKind::WeightedGaussian { a } => {
                if a.is_empty() {
                    return Err(Error::arg("weight vector must be nonempty"));
                }
                let len = a.len();
                let a = a.clone();
                let c = constants.gaussian_bracket;
                let norm_a = crate::norm::lp_norm_unchecked(&a, p);
                if norm_a == 0.0 {
                    return Err(Error::Degenerate("all-zero weight vector".into()));
                }
                let f = move |s: &mut RngStream| {
                    let mut acc = 0.0;
                    for &ai in &a {
                        acc += (ai * s.standard_normal()).abs().powf(p);
                    }
                    let r = acc.powf(1.0 / p) / norm_a;
                    (1.0 / c..=c).contains(&r)
                };
                (len, c, 0.99, Box::new(f))
            }
        };
    let mut hit = hit;
    let mut count = 0u64;
    for _ in 0..trials {
        if hit(stream) {
            count += 1;
        }
    }
    let phat = count as f64 / trials as f64;
    Ok(TailReport {
        kind: kind.name().to_owned(),
        n: n_eff,
        trials,
        empirical_probability: phat,
        bound,
        std_error: (phat * (1.0 - phat) / trials as f64).sqrt(),
        target_probability: target,
    })
}

/// Calibration routines behind the `calibrate` binary.
pub mod calibrate {
    use super::*;

    fn quantile(sorted: &[f64], q: f64) -> f64 {
        let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
        sorted[idx]
    }

    /// Smallest C with empirical two-sided coverage of [1/C, C] at least
    /// `coverage`, from a sorted sample of positive ratios.
    fn bracket_for_coverage(sorted: &[f64], coverage: f64) -> f64 {
        let n = sorted.len() as f64;
        let cdf = |x: f64| -> f64 {
            let k = sorted.partition_point(|&v| v <= x);
            k as f64 / n
        };
        let mut lo = 1.0f64;
        let mut hi = 1e9f64;
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if cdf(mid) - cdf(1.0 / mid) >= coverage {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Point value plus a split-half interval: the statistic recomputed on
    /// each half of the sample brackets the Monte-Carlo uncertainty.
    fn with_split_interval(
        full: f64,
        halves: (f64, f64),
    ) -> (f64, (f64, f64)) {
        let lo = full.min(halves.0).min(halves.1);
        let hi = full.max(halves.0).max(halves.1);
        (full, (lo, hi))
    }

    /// Calibrates C_p over a family of weight shapes; the single-coordinate
    /// shape dominates because a lone Gaussian has the fattest lower tail.
    pub fn gaussian_bracket(p: f64, seed: u64) -> (f64, (f64, f64)) {
        let shapes: Vec<(Vec<f64>, usize)> = vec![
            (vec![1.0], 400_000),
            (vec![1.0; 2], 200_000),
            (vec![1.0; 8], 100_000),
            (vec![1.0; 64], 50_000),
            ((0..32).map(|i| 0.9f64.powi(i)).collect(), 100_000),
        ];
        let mut worst: f64 = 1.0;
        let mut worst_h1: f64 = 1.0;
        let mut worst_h2: f64 = 1.0;
        for (shape_idx, (a, trials)) in shapes.iter().enumerate() {
            let norm_a = crate::norm::lp_norm_unchecked(a, p);
            let mut stream = RngStream::new(seed, &format!("cal/cp/{p}/{shape_idx}"));
            let mut ratios = Vec::with_capacity(*trials);
            for _ in 0..*trials {
                let mut acc = 0.0;
                for &ai in a {
                    acc += (ai * stream.standard_normal()).abs().powf(p);
                }
                ratios.push(acc.powf(1.0 / p) / norm_a);
            }
            let mut h1 = ratios[..ratios.len() / 2].to_vec();
            let mut h2 = ratios[ratios.len() / 2..].to_vec();
            ratios.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
            h1.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
            h2.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
            worst = worst.max(bracket_for_coverage(&ratios, 0.992));
            worst_h1 = worst_h1.max(bracket_for_coverage(&h1, 0.992));
            worst_h2 = worst_h2.max(bracket_for_coverage(&h2, 0.992));
        }
        with_split_interval(worst * 1.2, (worst_h1 * 1.2, worst_h2 * 1.2))
    }

    /// Calibrates U_p and L_p from one set of |X|^p sums of length `n`.
    #[allow(clippy::type_complexity)]
    pub fn sum_quantiles(
        p: f64,
        n: usize,
        trials: u64,
        t_param: f64,
        seed: u64,
    ) -> ((f64, (f64, f64)), (f64, (f64, f64))) {
        let params = StableParams::standard(p).expect("p validated by caller");
        let mut stream = RngStream::new(seed, &format!("cal/sums/{p}"));
        let mut sums = Vec::with_capacity(trials as usize);
        for _ in 0..trials {
            let mut acc = 0.0;
            for _ in 0..n {
                acc += stable_draw(&params, &mut stream).abs().powf(p);
            }
            sums.push(acc);
        }
        let nf = n as f64;
        let upper_target = 1.0 - nf.ln().ln() / nf.ln();
        let u_of = |sorted: &[f64]| quantile(sorted, upper_target) / (nf * nf.ln());
        let l_of =
            |sorted: &[f64]| quantile(sorted, 1.0 / t_param) / (nf * (nf / t_param.ln()).ln());
        let mut h1 = sums[..sums.len() / 2].to_vec();
        let mut h2 = sums[sums.len() / 2..].to_vec();
        sums.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        h1.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        h2.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        (
            with_split_interval(u_of(&sums), (u_of(&h1), u_of(&h2))),
            with_split_interval(l_of(&sums), (l_of(&h1), l_of(&h2))),
        )
    }

    /// Calibrates alpha_p so alpha |Cauchy| dominates |X_p|^p, by matching
    /// quantiles away from the extreme tails and padding.
    pub fn dominance_alpha(p: f64, seed: u64) -> (f64, (f64, f64)) {
        let trials = 400_000usize;
        let mut cs = RngStream::new(seed, &format!("cal/alpha/c/{p}"));
        let mut xs = RngStream::new(seed, &format!("cal/alpha/x/{p}"));
        let params = StableParams::standard(p).expect("p validated by caller");
        let cauchy: Vec<f64> = (0..trials).map(|_| cauchy_draw(&mut cs).abs()).collect();
        let stable: Vec<f64> = (0..trials)
            .map(|_| stable_draw(&params, &mut xs).abs().powf(p))
            .collect();
        let alpha_of = |c: &[f64], x: &[f64]| -> f64 {
            let mut c = c.to_vec();
            let mut x = x.to_vec();
            c.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            x.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            let mut alpha: f64 = 0.0;
            let grid = 2000;
            for k in 1..grid {
                let q = k as f64 / grid as f64;
                if !(0.001..=0.999).contains(&q) {
                    continue;
                }
                let cq = quantile(&c, q);
                let xq = quantile(&x, q);
                if cq > 0.0 {
                    alpha = alpha.max(xq / cq);
                }
            }
            alpha * 1.1
        };
        let half = trials / 2;
        with_split_interval(
            alpha_of(&cauchy, &stable),
            (
                alpha_of(&cauchy[..half], &stable[..half]),
                alpha_of(&cauchy[half..], &stable[half..]),
            ),
        )
    }

    /// Empirical tail coefficient from Pr[X > t] t^p at t = 30.
    pub fn tail_constant(p: f64, seed: u64) -> (f64, (f64, f64)) {
        let draws = 5_000_000usize;
        let params = StableParams::standard(p).expect("p validated by caller");
        let mut stream = RngStream::new(seed, &format!("cal/tail/{p}"));
        let t = 30.0f64;
        let mut hits = [0usize; 2];
        for k in 0..draws {
            if stable_draw(&params, &mut stream) > t {
                hits[k % 2] += 1;
            }
        }
        let scale = t.powf(p);
        let full = (hits[0] + hits[1]) as f64 / draws as f64 * scale;
        let h1 = hits[0] as f64 / (draws / 2) as f64 * scale;
        let h2 = hits[1] as f64 / (draws / 2) as f64 * scale;
        with_split_interval(full, (h1, h2))
    }

    /// Observed 0.999-quantile of ||Phi D U||_p^p-style operator mass per
    /// unit of d ln d, for a hashed stable diagonal on an orthonormalized
    /// Gaussian basis. Reported as metadata only.
    pub fn omega_factor(p: f64, seed: u64) -> f64 {
        let d = 8usize;
        let n = 2048usize;
        let r2 = 10usize;
        let trials = 2000usize;
        let mut stats = Vec::with_capacity(trials);
        for trial in 0..trials {
            let mut gs = RngStream::new(seed, &format!("cal/omega/a/{p}/{trial}"));
            let a = crate::matrix::DenseMatrix::from_fn(n, d, |_, _| gs.standard_normal());
            let (q, _) = crate::linalg::thin_qr(&a).expect("random basis is full rank");
            let params = StableParams::standard(p).expect("p validated by caller");
            let mut hs = RngStream::new(seed, &format!("cal/omega/h/{p}/{trial}"));
            let mut mass = vec![0.0f64; r2 * d];
            for i in 0..n {
                let bucket = hs.index(r2);
                let x = stable_draw(&params, &mut hs);
                for j in 0..d {
                    mass[bucket * d + j] += x * q.get(i, j);
                }
            }
            let total: f64 = mass.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p);
            stats.push(total / (d as f64 * (d as f64).ln()));
        }
        stats.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        quantile(&stats, 0.999)
    }

    /// Full calibration for one p.
    pub fn constants_for(
        p: f64,
        n: usize,
        trials: u64,
        t_param: f64,
        seed: u64,
    ) -> CalibrationConstants {
        let ((u, u_ci), (l, l_ci)) = sum_quantiles(p, n, trials, t_param, seed);
        let (c, c_ci) = gaussian_bracket(p, seed);
        let (alpha, alpha_ci) = dominance_alpha(p, seed);
        let (tail, tail_ci) = tail_constant(p, seed);
        let mut intervals = BTreeMap::new();
        intervals.insert("C_p".to_owned(), c_ci);
        intervals.insert("U_p".to_owned(), u_ci);
        intervals.insert("L_p".to_owned(), l_ci);
        intervals.insert("alpha_p".to_owned(), alpha_ci);
        intervals.insert("c_p".to_owned(), tail_ci);
        CalibrationConstants {
            gaussian_bracket: c,
            sum_upper: u,
            sum_lower: l,
            alpha_p: alpha,
            tail_constant: tail,
            omega: omega_factor(p, seed),
            intervals,
            trials,
            seed,
            n,
            t_param,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_cdf_quartile() {
        assert_relative_eq!(cauchy_inverse_cdf(0.75), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_abs_moments() {
        // p = 1 gives sqrt(2/pi); p = 2 gives 1.
        assert_relative_eq!(
            gaussian_abs_moment(1.0),
            (2.0 / PI).sqrt(),
            max_relative = 1e-10
        );
        assert_relative_eq!(gaussian_abs_moment(2.0), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn cauchy_half_mass_beyond_one() {
        let mut s = RngStream::new(101, "cauchy-mass");
        let n = 1_000_000;
        let count = sample_cauchy(&mut s, n)
            .iter()
            .filter(|x| x.abs() > 1.0)
            .count();
        let frac = count as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.002, "frac = {frac}");
    }

    #[test]
    fn cauchy_median_of_abs_is_one() {
        let mut s = RngStream::new(102, "cauchy-median");
        let mut draws: Vec<f64> = sample_cauchy(&mut s, 1_000_000)
            .into_iter()
            .map(f64::abs)
            .collect();
        draws.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let median = draws[draws.len() / 2];
        assert!((median - 1.0).abs() < 0.005, "median = {median}");
    }

    #[test]
    fn p1_reduces_to_cauchy_path_exactly() {
        let params = StableParams::standard(1.0).unwrap();
        let mut a = RngStream::new(103, "p1");
        let mut b = RngStream::new(103, "p1");
        let xs = sample_pstable(&params, &mut a, 1000);
        let ys = sample_cauchy(&mut b, 1000);
        assert_eq!(xs, ys);
    }

    #[test]
    fn p1_matches_cauchy_distribution() {
        let params = StableParams::standard(1.0).unwrap();
        let mut a = RngStream::new(104, "p1-dist-a");
        let mut b = RngStream::new(104, "p1-dist-b");
        let xs = sample_pstable(&params, &mut a, 100_000);
        let ys = sample_cauchy(&mut b, 100_000);
        let d = ks_distance(xs, ys);
        assert!(d < 0.01, "ks = {d}");
    }

    #[test]
    fn stability_identity_at_p_three_halves() {
        let p = 1.5;
        let params = StableParams::standard(p).unwrap();
        let n = 100_000;
        let mut s1 = RngStream::new(105, "stab-sum");
        let sums: Vec<f64> = (0..n)
            .map(|_| stable_draw(&params, &mut s1) + stable_draw(&params, &mut s1))
            .collect();
        let scale = 2.0f64.powf(1.0 / p);
        let mut s2 = RngStream::new(105, "stab-single");
        let singles: Vec<f64> = (0..n)
            .map(|_| scale * stable_draw(&params, &mut s2))
            .collect();
        let d = ks_distance(sums, singles);
        assert!(d < 0.015, "ks = {d}");
    }

    #[test]
    fn p2_variance_is_two() {
        let params = StableParams::standard(2.0).unwrap();
        let mut s = RngStream::new(106, "p2-var");
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = stable_draw(&params, &mut s);
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!((var - 2.0).abs() < 0.02, "var = {var}");
    }

    #[test]
    fn truncate_cases() {
        let t = TruncationParams::new(0.2).unwrap();
        assert_eq!(truncate(0.05, t), 0.2);
        assert_eq!(truncate(-0.1, t), -0.2);
        assert_eq!(truncate(3.0, t), 3.0);
        assert_eq!(truncate(0.0, t), 0.2);
        assert_eq!(truncate(-3.0, t), -3.0);
    }

    #[test]
    fn truncate_properties() {
        let t = TruncationParams::new(0.3).unwrap();
        let mut s = RngStream::new(107, "trunc");
        for _ in 0..10_000 {
            let x = cauchy_draw(&mut s);
            let y = truncate(x, t);
            assert!(y.abs() >= 0.3);
            assert!((y - x).abs() <= 0.3 + 1e-15);
            // Idempotent.
            assert_eq!(truncate(y, t), y);
            if x.abs() >= 0.3 {
                assert_eq!(y, x);
            }
        }
    }

    #[test]
    fn stable_params_validation() {
        assert!(StableParams::new(0.9, 1.0).is_err());
        assert!(StableParams::new(2.1, 1.0).is_err());
        assert!(StableParams::new(1.5, 0.0).is_err());
        assert!(TruncationParams::new(0.0).is_err());
    }

    #[test]
    fn ks_distance_sanity() {
        let xs = vec![1.0, 2.0, 3.0, 4.0];
        let ys = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_distance(xs, ys), 0.0);
        let d = ks_distance(vec![0.0; 100], vec![1.0; 100]);
        assert_eq!(d, 1.0);
    }

    #[test]
    fn default_table_has_grid() {
        let table = default_calibration();
        for p in [1.0, 1.25, 1.5, 1.75] {
            let c = table.lookup(p).unwrap();
            assert!(c.gaussian_bracket > 1.0);
            assert!(c.sum_upper > 0.0);
            assert!(c.sum_lower > 0.0);
            assert!(c.alpha_p > 0.0);
            assert!(c.tail_constant > 0.0);
            for name in ["C_p", "U_p", "L_p", "alpha_p", "c_p"] {
                let (lo, hi) = c.interval(name);
                assert!(lo > 0.0 && lo <= hi, "{name} interval empty");
            }
        }
        assert!(table.lookup(1.3).is_err());
    }

    #[test]
    fn dominance_with_calibrated_alpha() {
        // Survival of alpha_p |C| dominates |X_p|^p on a quantile grid.
        let p = 1.5;
        let alpha = default_calibration().lookup(p).unwrap().alpha_p;
        let n = 100_000;
        let params = StableParams::standard(p).unwrap();
        let mut cs = RngStream::new(108, "dom-c");
        let mut xs = RngStream::new(108, "dom-x");
        let mut cauchy: Vec<f64> = (0..n).map(|_| alpha * cauchy_draw(&mut cs).abs()).collect();
        let mut stable: Vec<f64> = (0..n)
            .map(|_| stable_draw(&params, &mut xs).abs().powf(p))
            .collect();
        cauchy.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        stable.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let survival = |sorted: &[f64], t: f64| -> f64 {
            let k = sorted.partition_point(|&v| v <= t);
            (sorted.len() - k) as f64 / sorted.len() as f64
        };
        for k in 1..50 {
            let q = k as f64 / 50.0;
            let idx = ((n - 1) as f64 * q) as usize;
            let t = stable[idx];
            let s_c = survival(&cauchy, t);
            let s_x = survival(&stable, t);
            let se = (s_x * (1.0 - s_x) / n as f64).sqrt().max(1e-6);
            assert!(
                s_c >= s_x - 2.0 * se,
                "dominance fails at t={t}: {s_c} < {s_x}"
            );
        }
    }

    #[test]
    fn tail_asymptotic_matches_calibrated_constant() {
        let p = 1.5;
        let c_cal = default_calibration().lookup(p).unwrap().tail_constant;
        let params = StableParams::standard(p).unwrap();
        let mut s = RngStream::new(109, "tail-asym");
        let draws = 10_000_000usize;
        let ts = [10.0f64, 30.0, 100.0];
        let mut hits = [0usize; 3];
        for _ in 0..draws {
            let x = stable_draw(&params, &mut s);
            for (k, &t) in ts.iter().enumerate() {
                if x > t {
                    hits[k] += 1;
                }
            }
        }
        for (k, &t) in ts.iter().enumerate() {
            let est = (hits[k] as f64 / draws as f64) * t.powf(p);
            assert!(
                (est - c_cal).abs() <= 0.25 * c_cal,
                "t={t}: estimate {est} vs calibrated {c_cal}"
            );
        }
    }

    #[test]
    fn weighted_gaussian_single_coordinate_report() {
        let kind = TailKind::WeightedGaussian { a: vec![1.0] };
        let mut s = RngStream::new(110, "wg");
        let report = mc_tail_report(&kind, 1, 1.0, 20_000, &mut s).unwrap();
        assert!(
            report.empirical_probability >= 0.99,
            "freq = {}",
            report.empirical_probability
        );
    }

    #[test]
    fn tail_report_validation() {
        let mut s = RngStream::new(111, "val");
        assert!(mc_tail_report(&TailKind::CauchySumUpper, 2, 1.0, 1000, &mut s).is_err());
        assert!(mc_tail_report(&TailKind::CauchySumUpper, 100, 1.0, 10, &mut s).is_err());
        let bad = TailKind::PStableSumLower { t: 0.5 };
        assert!(mc_tail_report(&bad, 100, 1.0, 1000, &mut s).is_err());
    }
}
