//! Distortion measurement for realized sketching operators.
//!
//! For p = 2 the extreme ratios of ||Pi A x|| / ||A x|| are exactly the
//! extreme singular values of Pi Q, Q an orthonormal basis of col(A), so
//! [`exact_l2_distortion`] is factorization-exact. For general p no
//! tractable exact algorithm exists; [`empirical_lp_distortion`] searches
//! witness directions (coordinates, Gaussians, sparse vectors, optional
//! net points, hill-climb refinement) and reports a certified lower bound
//! on the true distortion. kappa_hat is the scale-free max/min ratio.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embed::{apply, Embedding};
use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::{DenseMatrix, MatrixRef};
use crate::norm::{lp_norm_unchecked, PNorm};
use crate::rng::RngStream;

/// Witness-direction generators for the empirical search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessGenerator {
    /// Coordinate directions e_1 .. e_d; always evaluated first.
    Coordinate,
    /// i.i.d. Gaussian directions.
    Gaussian,
    /// One- and two-nonzero directions with Gaussian values.
    Sparse,
    /// Deterministic net on the image sphere; only for d <= 3.
    Net { eps: f64 },
    /// Coordinate-wise multiplicative refinement of the best seeds.
    HillClimb,
}

/// The default generator set: everything but the net.
pub fn default_generators() -> Vec<WitnessGenerator> {
    vec![
        WitnessGenerator::Coordinate,
        WitnessGenerator::Gaussian,
        WitnessGenerator::Sparse,
        WitnessGenerator::HillClimb,
    ]
}

/// A witness direction together with its measured ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedWitness {
    pub ratio: f64,
    pub witness: Vec<f64>,
    pub generator: String,
}

/// Ratio statistics over the witness set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistortionReport {
    pub p: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// max_ratio / min_ratio; for p != 2 a lower bound on the true
    /// distortion ("empirical" semantics).
    pub kappa_hat: f64,
    /// Whether the extremes are exact (singular values) or search-based.
    pub exact: bool,
    pub witness_counts: BTreeMap<String, usize>,
    pub skipped: usize,
    pub best_contraction: Vec<f64>,
    pub best_dilation: Vec<f64>,
    /// Up to five smallest-ratio witnesses, ascending.
    pub top_contraction: Vec<RankedWitness>,
    /// Up to five largest-ratio witnesses, descending.
    pub top_dilation: Vec<RankedWitness>,
}

/// Exact l2 ratio extremes via singular values of Pi applied to an
/// orthonormal basis of col(A).
pub fn exact_l2_distortion(pi: &Embedding, a: MatrixRef<'_>) -> Result<DistortionReport> {
    let dense_a = a.to_dense();
    if !linalg::has_full_column_rank(&dense_a) {
        return Err(Error::Conditioning(
            "input matrix is rank deficient; distortion ratios are unbounded".into(),
        ));
    }
    let (q, r) = linalg::thin_qr(&dense_a)?;
    let piq = apply(pi, MatrixRef::Dense(&q))?;
    let (smin, smax) = linalg::singular_extremes(&piq);
    if smin <= 0.0 || !smin.is_finite() {
        return Err(Error::Conditioning(
            "sketched basis lost rank; re-seed the embedding".into(),
        ));
    }

    // Recover witnesses x with Ax equal to the extreme right singular
    // directions of Pi Q, and restate the extremes as replayable ratios.
    let gram = {
        let m = linalg::to_na(&piq);
        m.transpose() * m
    };
    let eig = gram.symmetric_eigen();
    let (mut lo_idx, mut hi_idx) = (0, 0);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l < eig.eigenvalues[lo_idx] {
            lo_idx = k;
        }
        if l > eig.eigenvalues[hi_idx] {
            hi_idx = k;
        }
    }
    let coeff_lo: Vec<f64> = eig.eigenvectors.column(lo_idx).iter().cloned().collect();
    let coeff_hi: Vec<f64> = eig.eigenvectors.column(hi_idx).iter().cloned().collect();
    let x_lo = linalg::solve_upper(&r, &coeff_lo)?;
    let x_hi = linalg::solve_upper(&r, &coeff_hi)?;
    let p2 = PNorm::new(2.0).expect("2 is in range");
    let eval = RatioEvaluator::new(pi, a, p2)?;
    let min_ratio = eval.ratio(&x_lo).unwrap_or(smin);
    let max_ratio = eval.ratio(&x_hi).unwrap_or(smax);

    let mut witness_counts = BTreeMap::new();
    witness_counts.insert("singular".to_owned(), 2);
    Ok(DistortionReport {
        p: 2.0,
        min_ratio,
        max_ratio,
        kappa_hat: max_ratio / min_ratio,
        exact: true,
        witness_counts,
        skipped: 0,
        best_contraction: x_lo.clone(),
        best_dilation: x_hi.clone(),
        top_contraction: vec![RankedWitness {
            ratio: min_ratio,
            witness: x_lo,
            generator: "singular".into(),
        }],
        top_dilation: vec![RankedWitness {
            ratio: max_ratio,
            witness: x_hi,
            generator: "singular".into(),
        }],
    })
}

/// Shared ratio evaluation: ||Pi A x||_p / ||A x||_p with Pi A cached.
pub(crate) struct RatioEvaluator<'a> {
    a: MatrixRef<'a>,
    pi_a: DenseMatrix,
    p: f64,
}

impl<'a> RatioEvaluator<'a> {
    pub(crate) fn new(pi: &Embedding, a: MatrixRef<'a>, p: PNorm) -> Result<Self> {
        let pi_a = apply(pi, a)?;
        Ok(RatioEvaluator {
            a,
            pi_a,
            p: p.value(),
        })
    }

    /// None when Ax = 0 (the witness is skipped, not an error).
    pub(crate) fn ratio(&self, x: &[f64]) -> Option<f64> {
        let ax = self.a.matvec(x).ok()?;
        let denom = lp_norm_unchecked(&ax, self.p);
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        let sax = self.pi_a.matvec(x).ok()?;
        let numer = lp_norm_unchecked(&sax, self.p);
        Some(numer / denom)
    }
}

/// Coordinate-wise multiplicative ascent (or descent) on a ratio.
///
/// Runs up to `rounds` proposal rounds, stepping one coordinate per round
/// by the current factor in the better of the two directions, halving the
/// step (geometrically toward 1) after a full unproductive sweep. The
/// returned ratio never falls below (or above, when minimizing) the seed.
pub(crate) fn hill_climb(
    eval: &dyn Fn(&[f64]) -> Option<f64>,
    seed_witness: &[f64],
    seed_ratio: f64,
    maximize: bool,
    rounds: usize,
) -> (Vec<f64>, f64) {
    let d = seed_witness.len();
    let mut x = seed_witness.to_vec();
    let mut best = seed_ratio;
    let mut factor = 1.5f64;
    let mut since_improve = 0usize;
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let better = |candidate: f64, incumbent: f64| {
        if maximize {
            candidate > incumbent
        } else {
            candidate < incumbent
        }
    };
    for round in 0..rounds {
        let k = round % d;
        let base = x[k];
        let candidates = if base == 0.0 {
            let step = (factor - 1.0) * scale;
            [step, -step]
        } else {
            [base * factor, base / factor]
        };
        let mut improved = false;
        for cand in candidates {
            let old = x[k];
            x[k] = cand;
            match eval(&x) {
                Some(r) if better(r, best) => {
                    best = r;
                    improved = true;
                    break;
                }
                _ => x[k] = old,
            }
        }
        if improved {
            since_improve = 0;
        } else {
            since_improve += 1;
            if since_improve >= d {
                factor = 1.0 + (factor - 1.0) / 2.0;
                since_improve = 0;
                if factor - 1.0 < 1e-5 {
                    break;
                }
            }
        }
    }
    (x, best)
}

const HILL_CLIMB_ROUNDS: usize = 100;
const HILL_CLIMB_SEEDS: usize = 5;
// Climb seeds come from this fixed prefix of the witness sequence, so a
// larger budget only ever adds evaluations and kappa_hat stays monotone.
const HILL_CLIMB_POOL: usize = 512;

/// Witness-search distortion for general p. `kappa_hat` is a lower bound
/// on the true distortion; the report stores replayable extreme witnesses.
pub fn empirical_lp_distortion(
    pi: &Embedding,
    a: MatrixRef<'_>,
    p: PNorm,
    generators: &[WitnessGenerator],
    budget: usize,
    seed: u64,
) -> Result<DistortionReport> {
    let d = a.cols();
    if budget < 2 * d {
        return Err(Error::arg(format!(
            "budget {budget} is below the floor of 2d = {}",
            2 * d
        )));
    }
    let eval = RatioEvaluator::new(pi, a, p)?;

    let use_coord = generators.contains(&WitnessGenerator::Coordinate);
    let use_gauss = generators.contains(&WitnessGenerator::Gaussian);
    let use_sparse = generators.contains(&WitnessGenerator::Sparse);
    let use_climb = generators.contains(&WitnessGenerator::HillClimb);
    let net_eps = generators.iter().find_map(|g| match g {
        WitnessGenerator::Net { eps } => Some(*eps),
        _ => None,
    });

    // Base witnesses in a deterministic order: coordinates, net points,
    // then cycling random kinds until the budget is spent.
    let mut base: Vec<(Vec<f64>, &'static str)> = Vec::with_capacity(budget);
    if use_coord {
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            base.push((e, "coordinate"));
        }
    }
    if let Some(eps) = net_eps {
        let dense_a = a.to_dense();
        for x in net_directions(&dense_a, p, eps)? {
            if base.len() >= budget {
                break;
            }
            base.push((x, "net"));
        }
    }
    let mut gauss_stream = RngStream::new(seed, "witness/gauss");
    let mut sparse_stream = RngStream::new(seed, "witness/sparse");
    let random_kinds: Vec<&'static str> = {
        let mut kinds = Vec::new();
        if use_gauss {
            kinds.push("gaussian");
        }
        if use_sparse {
            kinds.push("sparse1");
            kinds.push("sparse2");
        }
        kinds
    };
    if !random_kinds.is_empty() {
        let mut k = 0usize;
        while base.len() < budget {
            let kind = random_kinds[k % random_kinds.len()];
            k += 1;
            let x = match kind {
                "gaussian" => gauss_stream.normal_vec(d),
                "sparse1" => {
                    let mut x = vec![0.0; d];
                    x[sparse_stream.index(d)] = sparse_stream.standard_normal();
                    x
                }
                _ => {
                    let mut x = vec![0.0; d];
                    if d == 1 {
                        x[0] = sparse_stream.standard_normal();
                    } else {
                        let picks = sparse_stream.distinct_indices(2, d);
                        x[picks[0]] = sparse_stream.standard_normal();
                        x[picks[1]] = sparse_stream.standard_normal();
                    }
                    x
                }
            };
            base.push((x, kind));
        }
    }

    // Evaluate everything.
    let mut witness_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut skipped = 0usize;
    let mut evaluated: Vec<(f64, Vec<f64>, &'static str)> = Vec::with_capacity(base.len());
    for (x, kind) in base {
        *witness_counts.entry(kind.to_owned()).or_insert(0) += 1;
        match eval.ratio(&x) {
            Some(r) => evaluated.push((r, x, kind)),
            None => skipped += 1,
        }
    }
    if evaluated.is_empty() {
        return Err(Error::Degenerate(
            "every witness direction had Ax = 0".into(),
        ));
    }

    let by_ratio = |a: &(f64, Vec<f64>, &'static str), b: &(f64, Vec<f64>, &'static str)| {
        a.0.partial_cmp(&b.0).expect("finite ratios")
    };

    // Refine extreme seeds drawn from a budget-independent prefix.
    if use_climb {
        let mut pool: Vec<(f64, Vec<f64>)> = evaluated
            .iter()
            .take(HILL_CLIMB_POOL)
            .map(|(r, x, _)| (*r, x.clone()))
            .collect();
        pool.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite ratios"));
        let closure = |x: &[f64]| eval.ratio(x);
        let mut refined: Vec<(f64, Vec<f64>, &'static str)> = Vec::new();
        for (r, x) in pool.iter().take(HILL_CLIMB_SEEDS) {
            let (cx, cr) = hill_climb(&closure, x, *r, false, HILL_CLIMB_ROUNDS);
            refined.push((cr, cx, "hillclimb"));
        }
        for (r, x) in pool.iter().rev().take(HILL_CLIMB_SEEDS) {
            let (cx, cr) = hill_climb(&closure, x, *r, true, HILL_CLIMB_ROUNDS);
            refined.push((cr, cx, "hillclimb"));
        }
        *witness_counts.entry("hillclimb".to_owned()).or_insert(0) += refined.len();
        evaluated.extend(refined);
    }
    evaluated.sort_by(by_ratio);

    let take_ranked = |iter: &mut dyn Iterator<Item = &(f64, Vec<f64>, &'static str)>| {
        iter.take(5)
            .map(|(r, x, g)| RankedWitness {
                ratio: *r,
                witness: x.clone(),
                generator: (*g).to_owned(),
            })
            .collect::<Vec<_>>()
    };
    let top_contraction = take_ranked(&mut evaluated.iter());
    let top_dilation = take_ranked(&mut evaluated.iter().rev());
    let min_ratio = top_contraction[0].ratio;
    let max_ratio = top_dilation[0].ratio;
    Ok(DistortionReport {
        p: p.value(),
        min_ratio,
        max_ratio,
        kappa_hat: max_ratio / min_ratio,
        exact: false,
        witness_counts,
        skipped,
        best_contraction: top_contraction[0].witness.clone(),
        best_dilation: top_dilation[0].witness.clone(),
        top_contraction,
        top_dilation,
    })
}

/// Numerical rank of a dense matrix; used by rank-drop experiments.
pub fn matrix_rank(m: &DenseMatrix) -> usize {
    linalg::rank(m)
}

/// Deterministic net of coefficient directions whose images cover the
/// p-norm unit sphere of col(U) with mesh at most `eps`.
///
/// Returned vectors x are normalized so ||U x||_p = 1. Guarded to d <= 3
/// and (3 / eps)^d <= 10^7 points.
pub fn net_directions(u: &DenseMatrix, p: PNorm, eps: f64) -> Result<Vec<Vec<f64>>> {
    let d = u.cols();
    if d == 0 || eps <= 0.0 {
        return Err(Error::arg("need d >= 1 and eps > 0"));
    }
    if d > 3 {
        return Err(Error::Resource(format!(
            "net generation is limited to d <= 3, got d = {d}"
        )));
    }
    if (3.0 / eps).powi(d as i32) > 1e7 {
        return Err(Error::Resource(format!(
            "(3/eps)^d = {:.3e} exceeds the point guard",
            (3.0 / eps).powi(d as i32)
        )));
    }
    let pv = p.value();
    let normalize = |c: &[f64]| -> Option<Vec<f64>> {
        let img = u.matvec(c).ok()?;
        let norm = lp_norm_unchecked(&img, pv);
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(c.iter().map(|v| v / norm).collect())
    };
    let image = |x: &[f64]| u.matvec(x).expect("dimensions fixed");

    if d == 1 {
        let pos = normalize(&[1.0]).ok_or_else(|| Error::Degenerate("zero basis column".into()))?;
        let neg = vec![-pos[0]];
        return Ok(vec![pos, neg]);
    }

    // Grid on the faces of the unit cube in coefficient space, refined
    // until adjacent image points are within eps of each other.
    let mut m = ((3.0 / eps).ceil() as usize).max(2);
    loop {
        let mut points: Vec<Vec<f64>> = Vec::new();
        let mut grid_index: std::collections::HashMap<Vec<i64>, usize> =
            std::collections::HashMap::new();
        let mut raw: Vec<Vec<i64>> = Vec::new();
        let steps = m as i64;
        let mut push = |cells: Vec<i64>| {
            if !grid_index.contains_key(&cells) {
                grid_index.insert(cells.clone(), raw.len());
                raw.push(cells);
            }
        };
        // Each face fixes one coordinate at +-m; others range over -m..=m.
        for fixed in 0..d {
            for sign in [-1i64, 1] {
                let mut counters = vec![-steps; d - 1];
                loop {
                    let mut cells = Vec::with_capacity(d);
                    let mut ci = 0;
                    for k in 0..d {
                        if k == fixed {
                            cells.push(sign * steps);
                        } else {
                            cells.push(counters[ci]);
                            ci += 1;
                        }
                    }
                    push(cells);
                    // Odometer increment.
                    let mut carry = true;
                    for c in counters.iter_mut() {
                        if carry {
                            *c += 1;
                            if *c > steps {
                                *c = -steps;
                            } else {
                                carry = false;
                            }
                        }
                    }
                    if carry {
                        break;
                    }
                }
            }
        }
        if raw.len() > 4_000_000 {
            return Err(Error::Resource(
                "net refinement exceeded the internal point cap".into(),
            ));
        }
        let mut normalized: Vec<Option<Vec<f64>>> = Vec::with_capacity(raw.len());
        for cells in &raw {
            let c: Vec<f64> = cells.iter().map(|&v| v as f64 / steps as f64).collect();
            normalized.push(normalize(&c));
        }
        // Mesh check over grid neighbors on each face.
        let mut max_gap: f64 = 0.0;
        for (cells, &idx) in &grid_index {
            let Some(ref y1) = normalized[idx] else {
                continue;
            };
            let img1 = image(y1);
            for k in 0..d {
                let mut nb = cells.clone();
                nb[k] += 1;
                if let Some(&j) = grid_index.get(&nb) {
                    if let Some(ref y2) = normalized[j] {
                        let img2 = image(y2);
                        let diff: Vec<f64> =
                            img1.iter().zip(&img2).map(|(a, b)| a - b).collect();
                        max_gap = max_gap.max(lp_norm_unchecked(&diff, pv));
                    }
                }
            }
        }
        if max_gap <= eps || m >= 4096 {
            for y in normalized.into_iter().flatten() {
                points.push(y);
            }
            if points.is_empty() {
                return Err(Error::Degenerate("basis maps the whole net to zero".into()));
            }
            return Ok(points);
        }
        m *= 2;
    }
}
