//! Adversarial instance generator.
//!
//! Instances are n x d sparse matrices whose columns play fixed roles: one
//! fully dense Gaussian column (D), d/4 medium columns of 4n/d Gaussians on
//! contiguous disjoint row ranges (M), and d/2 sparse columns split into
//! log2(n/d) blocks where block i columns carry 2^{i+1} Gaussians on rows
//! sampled without replacement within the block. Remaining columns are
//! exactly zero, so instances are intentionally rank deficient.
//!
//! When log2(n/d) does not divide d/2 the S-columns are spread over the
//! blocks as evenly as possible (the exact-count layout is recovered
//! whenever divisibility holds).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SparseMatrix;
use crate::norm::PNorm;
use crate::rng::RngStream;
use crate::stable::{default_calibration, gaussian_abs_moment, CalibrationConstants};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HardInstanceSpec {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

impl HardInstanceSpec {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        HardInstanceSpec { n, d, seed }
    }

    /// Number of S-column blocks, log2(n/d).
    pub fn block_count(&self) -> usize {
        let ratio = self.n / self.d;
        ratio.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 4 || self.d % 4 != 0 {
            return Err(Error::arg(format!(
                "d must be a positive multiple of 4, got {}",
                self.d
            )));
        }
        if self.n % self.d != 0 {
            return Err(Error::arg(format!(
                "n must be a multiple of d, got n={} d={}",
                self.n, self.d
            )));
        }
        let ratio = self.n / self.d;
        if ratio < 2 || !ratio.is_power_of_two() {
            return Err(Error::arg(format!(
                "n/d must be a power of two at least 2, got {ratio}"
            )));
        }
        // Every block's support must fit inside [n]: the widest block has
        // at most ceil((d/2) / b) columns of 2^b nonzeros each.
        let b = self.block_count();
        let widest = (self.d / 2).div_ceil(b);
        if widest.saturating_mul(1usize << b) > self.n {
            return Err(Error::arg(format!(
                "top block support {} exceeds n = {}",
                widest * (1usize << b),
                self.n
            )));
        }
        Ok(())
    }

    /// True when every block gets exactly d / (2 log2(n/d)) columns.
    pub fn blocks_divide_evenly(&self) -> bool {
        (self.d / 2) % self.block_count() == 0
    }
}

/// Role of one column in a hard instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum ColumnRole {
    D,
    M { index: usize },
    S { block: usize },
    Zero,
}

#[derive(Debug, Clone)]
pub struct HardInstance {
    pub spec: HardInstanceSpec,
    pub matrix: SparseMatrix,
    pub roles: Vec<ColumnRole>,
    pub block_count: usize,
}

impl HardInstance {
    pub fn columns_with_role(&self, f: impl Fn(&ColumnRole) -> bool) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| f(r))
            .map(|(j, _)| j)
            .collect()
    }
}

/// Assigns S-column index j (0-based among the d/2 S-columns) to a block.
fn block_of(j: usize, total: usize, blocks: usize) -> usize {
    j * blocks / total
}

/// Samples an instance from the hard distribution.
pub fn generate_hard(spec: &HardInstanceSpec) -> Result<HardInstance> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let blocks = spec.block_count();
    let s_total = d / 2;
    let m_count = d / 4;
    let chunk = 4 * n / d;

    let mut columns: Vec<Vec<(usize, f64)>> = Vec::with_capacity(d);
    let mut roles: Vec<ColumnRole> = Vec::with_capacity(d);

    let mut dense_stream = RngStream::new(spec.seed, "hard/d");
    columns.push((0..n).map(|i| (i, dense_stream.standard_normal())).collect());
    roles.push(ColumnRole::D);

    for j in 0..m_count {
        let mut stream = RngStream::new(spec.seed, &format!("hard/m/{j}"));
        let start = chunk * j;
        columns.push(
            (start..start + chunk)
                .map(|i| (i, stream.standard_normal()))
                .collect(),
        );
        roles.push(ColumnRole::M { index: j + 1 });
    }

    // Per block: draw the whole support without replacement, slice it among
    // the block's columns, fill with Gaussians.
    let mut col_of_block: Vec<Vec<usize>> = vec![Vec::new(); blocks];
    for j in 0..s_total {
        col_of_block[block_of(j, s_total, blocks)].push(j);
    }
    let mut s_columns: Vec<(usize, Vec<(usize, f64)>)> = Vec::with_capacity(s_total);
    for (i, members) in col_of_block.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let nnz = 1usize << (i + 1);
        let mut support_stream = RngStream::new(spec.seed, &format!("hard/s/{i}/support"));
        let mut value_stream = RngStream::new(spec.seed, &format!("hard/s/{i}/values"));
        let support = support_stream.sample_without_replacement(members.len() * nnz, n);
        for (k, &j) in members.iter().enumerate() {
            let mut rows: Vec<usize> = support[k * nnz..(k + 1) * nnz].to_vec();
            rows.sort_unstable();
            let entries: Vec<(usize, f64)> = rows
                .into_iter()
                .map(|r| (r, value_stream.standard_normal()))
                .collect();
            s_columns.push((j, entries));
        }
    }
    s_columns.sort_by_key(|(j, _)| *j);
    for (j, entries) in s_columns {
        columns.push(entries);
        roles.push(ColumnRole::S {
            block: block_of(j, s_total, blocks),
        });
    }

    while columns.len() < d {
        columns.push(Vec::new());
        roles.push(ColumnRole::Zero);
    }

    let matrix = SparseMatrix::from_columns(n, columns)?;
    Ok(HardInstance {
        spec: *spec,
        matrix,
        roles,
        block_count: blocks,
    })
}

/// Expected p-norm bracket for one column role.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoleNormBracket {
    pub role: ColumnRole,
    pub nnz: usize,
    /// k^{1/p} / C_p.
    pub lower: f64,
    /// C_p k^{1/p}.
    pub upper: f64,
    /// (k E|g|^p)^{1/p}, the concentration point of the norm.
    pub typical: f64,
}

/// Brackets [k^{1/p}/C_p, C_p k^{1/p}] per role, using the default
/// calibrated C_p.
pub fn expected_column_norms(spec: &HardInstanceSpec, p: PNorm) -> Result<Vec<RoleNormBracket>> {
    let constants = default_calibration().lookup(p.value())?.clone();
    expected_column_norms_with(spec, p, &constants)
}

pub fn expected_column_norms_with(
    spec: &HardInstanceSpec,
    p: PNorm,
    constants: &CalibrationConstants,
) -> Result<Vec<RoleNormBracket>> {
    spec.validate()?;
    let pv = p.value();
    let c = constants.gaussian_bracket;
    let moment = gaussian_abs_moment(pv);
    let bracket = |role: ColumnRole, nnz: usize| {
        let k = nnz as f64;
        RoleNormBracket {
            role,
            nnz,
            lower: k.powf(1.0 / pv) / c,
            upper: c * k.powf(1.0 / pv),
            typical: (k * moment).powf(1.0 / pv),
        }
    };
    let mut out = Vec::new();
    out.push(bracket(ColumnRole::D, spec.n));
    out.push(bracket(ColumnRole::M { index: 1 }, 4 * spec.n / spec.d));
    for i in 0..spec.block_count() {
        out.push(bracket(ColumnRole::S { block: i }, 1usize << (i + 1)));
    }
    Ok(out)
}
