//! Experiment execution: deterministic per-trial seeds, CSV assembly,
//! atomic output, and replay spot checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use psketch_core::conditioning::{measure_conditioning, well_conditioned_basis};
use psketch_core::distortion::{
    default_generators, empirical_lp_distortion, exact_l2_distortion, matrix_rank,
};
use psketch_core::embed::{self, EmbeddingSpec};
use psketch_core::error::Error as CoreError;
use psketch_core::hardgen::{generate_hard, HardInstanceSpec};
use psketch_core::io;
use psketch_core::matrix::{DenseMatrix, MatrixRef, SparseMatrix};
use psketch_core::norm::PNorm;
use psketch_core::regress::{
    irls_solve, precondition_sample_solve, sketch_solve, RegressionProblem,
};
use psketch_core::rng::{derive_seed, RngStream};
use psketch_core::stable::{mc_tail_report, TailKind};

use crate::config::{
    apply_grid_point, DistortionMetric, ExperimentConfig, ExperimentKind, InstanceConfig,
    TailKindConfig, TailsConfig, SCHEMA_VERSION,
};

/// A finished experiment: a fixed header plus one row per (trial, point).
#[derive(Debug, Clone)]
pub struct CsvReport {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub failed_rows: usize,
}

impl CsvReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_atomic(&self, path: &Path) -> std::io::Result<()> {
        let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
        std::fs::write(&tmp, self.to_csv())?;
        std::fs::rename(&tmp, path)
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn embedding_columns(spec: &EmbeddingSpec) -> Vec<String> {
    vec![
        spec.family.name().to_owned(),
        fmt_f64(spec.p),
        spec.n.to_string(),
        spec.d.to_string(),
        spec.b.map(fmt_f64).unwrap_or_default(),
        spec.eps.map(fmt_f64).unwrap_or_default(),
        spec.alpha.map(fmt_f64).unwrap_or_default(),
        spec.rows.map(|r| r.to_string()).unwrap_or_default(),
        fmt_f64(spec.row_const),
    ]
}

const EMBEDDING_HEADER: [&str; 9] = [
    "family", "p", "n", "d", "B", "eps", "alpha", "rows", "row_const",
];

/// Loads a matrix by extension: `.mtx` is MatrixMarket, else dense text.
fn load_matrix(path: &Path) -> Result<LoadedMatrix, CoreError> {
    if path.extension().and_then(|e| e.to_str()) == Some("mtx") {
        Ok(LoadedMatrix::Sparse(io::read_sparse(path)?))
    } else {
        Ok(LoadedMatrix::Dense(io::read_dense(path)?))
    }
}

pub enum LoadedMatrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl LoadedMatrix {
    pub fn as_ref(&self) -> MatrixRef<'_> {
        match self {
            LoadedMatrix::Dense(m) => MatrixRef::Dense(m),
            LoadedMatrix::Sparse(m) => MatrixRef::Sparse(m),
        }
    }
}

fn gaussian_matrix(seed: u64, n: usize, d: usize) -> DenseMatrix {
    let mut s = RngStream::new(seed, "instance/gaussian");
    DenseMatrix::from_fn(n, d, |_, _| s.standard_normal())
}

/// Instantiates the per-trial matrix.
fn realize_instance(cfg: &InstanceConfig, seed: u64) -> Result<LoadedMatrix, CoreError> {
    match cfg {
        InstanceConfig::Gaussian { n, d } => Ok(LoadedMatrix::Dense(gaussian_matrix(seed, *n, *d))),
        InstanceConfig::Hard { n, d } => {
            let inst = generate_hard(&HardInstanceSpec::new(*n, *d, seed))?;
            Ok(LoadedMatrix::Sparse(inst.matrix))
        }
        InstanceConfig::Files { a, .. } => load_matrix(a),
    }
}

fn instance_dims(cfg: &InstanceConfig) -> Option<(usize, usize)> {
    match cfg {
        InstanceConfig::Gaussian { n, d } | InstanceConfig::Hard { n, d } => Some((*n, *d)),
        InstanceConfig::Files { .. } => None,
    }
}

type TrialResult = Result<Vec<String>, String>;

/// Runs one experiment config to a CSV report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<CsvReport, Vec<String>> {
    config.validate()?;
    let report = match config.kind {
        ExperimentKind::Distort => run_distort(config),
        ExperimentKind::HardStress => run_hardstress(config),
        ExperimentKind::Tails => run_tails(config),
        ExperimentKind::RankDrop => run_rankdrop(config),
        ExperimentKind::Regress => run_regress(config),
        ExperimentKind::Sweep => run_sweep(config),
    };
    let report = report?;
    if config.ci {
        verify_rows(config, &report)?;
    }
    Ok(report)
}

/// Generic trial loop: deterministic derived seeds, order-preserving
/// parallelism, one row per trial with an error column.
fn trial_rows(
    kind: ExperimentKind,
    base_seed: u64,
    trials: u64,
    measurement_width: usize,
    trial_fn: impl Fn(u64, u64) -> TrialResult + Sync,
) -> (Vec<Vec<String>>, usize) {
    use rayon::prelude::*;
    let results: Vec<(u64, u64, TrialResult)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = derive_seed(base_seed, trial);
            (trial, seed, trial_fn(trial, seed))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut failed = 0usize;
    for (trial, seed, result) in results {
        let mut row = vec![
            SCHEMA_VERSION.to_string(),
            kind.name().to_owned(),
            trial.to_string(),
            seed.to_string(),
        ];
        match result {
            Ok(mut cols) => {
                debug_assert_eq!(cols.len(), measurement_width);
                row.push(String::new());
                row.append(&mut cols);
            }
            Err(msg) => {
                failed += 1;
                row.push(msg.replace(',', ";").replace('\n', " "));
                row.extend(std::iter::repeat_with(String::new).take(measurement_width));
            }
        }
        rows.push(row);
    }
    (rows, failed)
}

fn base_header(measurements: &[&str]) -> Vec<String> {
    let mut h = vec![
        "schema_version".to_owned(),
        "kind".to_owned(),
        "trial".to_owned(),
        "seed".to_owned(),
        "error".to_owned(),
    ];
    h.extend(measurements.iter().map(|s| (*s).to_owned()));
    h
}

fn distort_measurement_header() -> Vec<&'static str> {
    let mut h = EMBEDDING_HEADER.to_vec();
    h.extend_from_slice(&[
        "sketch_rows",
        "max_col_nnz",
        "metric",
        "budget",
        "min_ratio",
        "max_ratio",
        "kappa_hat",
        "skipped",
    ]);
    h
}

fn run_distort(config: &ExperimentConfig) -> Result<CsvReport, Vec<String>> {
    let instance = config.instance.clone().expect("validated");
    let template = config.embedding.clone().expect("validated");
    let metric = config.metric.unwrap_or(DistortionMetric::Empirical);
    let budget = config.budget.unwrap_or(1000);
    let p_value = config.p.unwrap_or(template.p);
    let p = PNorm::new(p_value).map_err(|e| vec![e.to_string()])?;
    let header = base_header(&distort_measurement_header());
    let width = header.len() - 5;
    let witness_out = config.witness_out.clone();
    if let Some(dir) = &witness_out {
        std::fs::create_dir_all(dir).map_err(|e| vec![e.to_string()])?;
    }

    let trial_fn = |trial: u64, seed: u64| -> TrialResult {
        let m = realize_instance(&instance, seed).map_err(|e| e.to_string())?;
        let a = m.as_ref();
        let mut spec = template.clone();
        spec.n = a.rows();
        spec.d = a.cols();
        spec.seed = seed;
        let e = embed::build(&spec).map_err(|er| er.to_string())?;
        let report = match metric {
            DistortionMetric::ExactL2 => exact_l2_distortion(&e, a).map_err(|er| er.to_string())?,
            DistortionMetric::Empirical => {
                empirical_lp_distortion(&e, a, p, &default_generators(), budget, seed)
                    .map_err(|er| er.to_string())?
            }
        };
        if let Some(dir) = &witness_out {
            for (tag, witness) in [
                ("contraction", &report.best_contraction),
                ("dilation", &report.best_dilation),
            ] {
                let m = DenseMatrix::new(witness.len(), 1, witness.clone())
                    .map_err(|er| er.to_string())?;
                io::write_dense(dir.join(format!("trial_{trial}_{tag}.txt")), &m)
                    .map_err(|er| er.to_string())?;
            }
        }
        let mut cols = embedding_columns(&spec);
        cols.push(e.rows.to_string());
        cols.push(e.max_column_nnz().to_string());
        cols.push(
            match metric {
                DistortionMetric::ExactL2 => "exact_l2",
                DistortionMetric::Empirical => "empirical",
            }
            .to_owned(),
        );
        cols.push(budget.to_string());
        cols.push(fmt_f64(report.min_ratio));
        cols.push(fmt_f64(report.max_ratio));
        cols.push(fmt_f64(report.kappa_hat));
        cols.push(report.skipped.to_string());
        Ok(cols)
    };
    let (rows, failed) = trial_rows(config.kind, config.seed, config.trials, width, trial_fn);
    Ok(CsvReport {
        header,
        rows,
        failed_rows: failed,
    })
}

fn run_hardstress(config: &ExperimentConfig) -> Result<CsvReport, Vec<String>> {
    let template = config.embedding.clone().expect("validated");
    let d_grid = config.d_grid.clone().expect("validated");
    let n_per_d = config.n_per_d.expect("validated");
    let budget = config.budget.unwrap_or(1000);
    let p_value = config.p.unwrap_or(template.p);
    let p = PNorm::new(p_value).map_err(|e| vec![e.to_string()])?;
    let mut header = base_header(&distort_measurement_header());
    header.push("threshold".to_owned());
    let width = header.len() - 5;

    let trials = config.trials;
    let points: Vec<(usize, u64)> = d_grid
        .iter()
        .flat_map(|&d| (0..trials).map(move |t| (d, t)))
        .collect();
    let trial_fn = |idx: u64, seed: u64| -> TrialResult {
        let (d, _) = points[idx as usize];
        let n = n_per_d * d;
        let inst = generate_hard(&HardInstanceSpec::new(n, d, seed)).map_err(|e| e.to_string())?;
        let mut spec = template.clone();
        spec.n = n;
        spec.d = d;
        spec.seed = seed;
        let e = embed::build(&spec).map_err(|er| er.to_string())?;
        let report = empirical_lp_distortion(
            &e,
            MatrixRef::Sparse(&inst.matrix),
            p,
            &default_generators(),
            budget,
            seed,
        )
        .map_err(|er| er.to_string())?;
        let threshold = 0.05 * d as f64 / (e.rows as f64).ln().powi(2);
        let mut cols = embedding_columns(&spec);
        cols.push(e.rows.to_string());
        cols.push(e.max_column_nnz().to_string());
        cols.push("empirical".to_owned());
        cols.push(budget.to_string());
        cols.push(fmt_f64(report.min_ratio));
        cols.push(fmt_f64(report.max_ratio));
        cols.push(fmt_f64(report.kappa_hat));
        cols.push(report.skipped.to_string());
        cols.push(fmt_f64(threshold));
        Ok(cols)
    };
    let (rows, failed) = trial_rows(
        config.kind,
        config.seed,
        points.len() as u64,
        width,
        trial_fn,
    );
    Ok(CsvReport {
        header,
        rows,
        failed_rows: failed,
    })
}

fn tail_kind_of(cfg: &TailKindConfig) -> TailKind {
    match cfg {
        TailKindConfig::CauchySumUpper => TailKind::CauchySumUpper,
        TailKindConfig::PStableSumLower { t } => TailKind::PStableSumLower { t: *t },
        TailKindConfig::WeightedGaussian { a } => TailKind::WeightedGaussian { a: a.clone() },
    }
}

fn run_tails(config: &ExperimentConfig) -> Result<CsvReport, Vec<String>> {
    let tails: TailsConfig = config.tails.clone().expect("validated");
    let header = base_header(&[
        "tail_kind",
        "n",
        "p",
        "mc_trials",
        "empirical_probability",
        "target_probability",
        "bound",
        "std_error",
    ]);
    let width = header.len() - 5;
    let kinds = tails.kinds.clone();
    let trial_fn = |idx: u64, seed: u64| -> TrialResult {
        let kind = tail_kind_of(&kinds[idx as usize]);
        let mut stream = RngStream::new(seed, "tails");
        let report = mc_tail_report(&kind, tails.n, tails.p, tails.mc_trials, &mut stream)
            .map_err(|e| e.to_string())?;
        Ok(vec![
            report.kind,
            report.n.to_string(),
            fmt_f64(tails.p),
            report.trials.to_string(),
            fmt_f64(report.empirical_probability),
            fmt_f64(report.target_probability),
            fmt_f64(report.bound),
            fmt_f64(report.std_error),
        ])
    };
    let (rows, failed) = trial_rows(
        config.kind,
        config.seed,
        kinds.len() as u64,
        width,
        trial_fn,
    );
    Ok(CsvReport {
        header,
        rows,
        failed_rows: failed,
    })
}

fn run_rankdrop(config: &ExperimentConfig) -> Result<CsvReport, Vec<String>> {
    let template = config.embedding.clone().expect("validated");
    let instance = config.instance.clone().expect("validated");
    let (n, d) = instance_dims(&instance).expect("validated gaussian instance");
    let mut header = base_header(&EMBEDDING_HEADER);
    header.push("sketch_rows".to_owned());
    header.push("rank".to_owned());
    header.push("dropped".to_owned());
    let width = header.len() - 5;
    let trial_fn = |_idx: u64, seed: u64| -> TrialResult {
        let a = gaussian_matrix(seed, n, d);
        let mut spec = template.clone();
        spec.n = n;
        spec.d = d;
        spec.seed = seed;
        let e = embed::build(&spec).map_err(|er| er.to_string())?;
        let pa = embed::apply(&e, MatrixRef::Dense(&a)).map_err(|er| er.to_string())?;
        // Rank of the compacted nonzero rows; collapsing empty sketch rows
        // keeps the eigen problem tiny.
        let occupied: Vec<usize> = (0..pa.rows())
            .filter(|&i| pa.row(i).iter().any(|&v| v != 0.0))
            .collect();
        let rank = if occupied.is_empty() {
            0
        } else {
            let mut compact = DenseMatrix::zeros(occupied.len(), d);
            for (k, &i) in occupied.iter().enumerate() {
                for j in 0..d {
                    compact.set(k, j, pa.get(i, j));
                }
            }
            matrix_rank(&compact)
        };
        let mut cols = embedding_columns(&spec);
        cols.push(e.rows.to_string());
        cols.push(rank.to_string());
        cols.push((rank < d).to_string());
        Ok(cols)
    };
    let (rows, failed) = trial_rows(config.kind, config.seed, config.trials, width, trial_fn);
    Ok(CsvReport {
        header,
        rows,
        failed_rows: failed,
    })
}

/// Synthetic regression instance: planted Gaussian solution, small
/// Gaussian noise, and 5% gross outliers.
pub fn regression_instance(seed: u64, n: usize, d: usize, p: PNorm) -> RegressionProblem {
    let mut s = RngStream::new(seed, "instance/regression");
    let a = DenseMatrix::from_fn(n, d, |_, _| s.standard_normal());
    let xstar: Vec<f64> = (0..d).map(|_| s.standard_normal()).collect();
    let mut b = a.matvec(&xstar).expect("shapes agree");
    for bi in b.iter_mut() {
        *bi += 0.5 * s.standard_normal();
        if s.bernoulli(0.05) {
            *bi += 30.0 * s.standard_normal();
        }
    }
    RegressionProblem::new(a, b, p).expect("random instance is full rank")
}

fn run_regress(config: &ExperimentConfig) -> Result<CsvReport, Vec<String>> {
    let template = config.embedding.clone().expect("validated");
    let instance = config.instance.clone().expect("validated");
    let p_value = config.p.unwrap_or(template.p);
    let p = PNorm::new(p_value).map_err(|e| vec![e.to_string()])?;
    let header = base_header(&[
        "n",
        "d",
        "p",
        "family",
        "sample_t",
        "optimal_cost",
        "sketch_cost",
        "sample_cost",
        "sketch_ratio",
        "sample_ratio",
        "u_alpha_hat",
        "u_beta_hat",
    ]);
    let width = header.len() - 5;
    let sample_t = config.sample_t;
    let want_conditioning = config.measure_conditioning;
    let trial_fn = |_idx: u64, seed: u64| -> TrialResult {
        let prob = match &instance {
            InstanceConfig::Gaussian { n, d } => regression_instance(seed, *n, *d, p),
            InstanceConfig::Files { a, b } => {
                let am = match load_matrix(a).map_err(|e| e.to_string())? {
                    LoadedMatrix::Dense(m) => m,
                    LoadedMatrix::Sparse(m) => m.to_dense(),
                };
                let bpath = b.as_ref().ok_or("files instance needs b for regression")?;
                let bm = io::read_dense(bpath).map_err(|e| e.to_string())?;
                if bm.cols() != 1 {
                    return Err("b must be a single-column dense file".into());
                }
                let bv = bm.column(0);
                RegressionProblem::new(am, bv, p).map_err(|e| e.to_string())?
            }
            InstanceConfig::Hard { .. } => return Err("hard instances are rank deficient".into()),
        };
        let d = prob.a.cols();
        let t = sample_t.unwrap_or(40.0 * d as f64 * (d as f64).ln());
        let optimum = irls_solve(&prob, None, 1e-12, 500).map_err(|e| e.to_string())?;
        let sk = sketch_solve(&prob, &template, seed).map_err(|e| e.to_string())?;
        let samp =
            precondition_sample_solve(&prob, &template, t, seed).map_err(|e| e.to_string())?;
        let (alpha_col, beta_col) = if want_conditioning {
            let u = well_conditioned_basis(&prob.a, p, Some(&template), seed)
                .map_err(|e| e.to_string())?;
            let rep = measure_conditioning(&u, p, 4 * d, seed).map_err(|e| e.to_string())?;
            (fmt_f64(rep.alpha_hat), fmt_f64(rep.beta_hat))
        } else {
            (String::new(), String::new())
        };
        Ok(vec![
            prob.a.rows().to_string(),
            d.to_string(),
            fmt_f64(p.value()),
            template.family.name().to_owned(),
            fmt_f64(t),
            fmt_f64(optimum.cost),
            fmt_f64(sk.cost),
            fmt_f64(samp.cost),
            fmt_f64(sk.cost / optimum.cost),
            fmt_f64(samp.cost / optimum.cost),
            alpha_col,
            beta_col,
        ])
    };
    let (rows, failed) = trial_rows(config.kind, config.seed, config.trials, width, trial_fn);
    Ok(CsvReport {
        header,
        rows,
        failed_rows: failed,
    })
}

fn run_sweep(config: &ExperimentConfig) -> Result<CsvReport, Vec<String>> {
    let base = config.base.as_ref().expect("validated");
    let grid = config.grid.as_ref().expect("validated");
    let keys: Vec<&String> = grid.keys().collect();
    let sizes: Vec<usize> = keys.iter().map(|k| grid[*k].len()).collect();
    let total: usize = sizes.iter().product();
    let mut merged: Option<CsvReport> = None;
    for flat in 0..total {
        let mut idx = flat;
        let mut point = BTreeMap::new();
        for (k, key) in keys.iter().enumerate() {
            let v = &grid[*key][idx % sizes[k]];
            idx /= sizes[k];
            point.insert((*key).clone(), v.clone());
        }
        let sub = apply_grid_point(base, &point).map_err(|e| vec![e])?;
        let mut sub = sub;
        // Derive a distinct seed per grid point from the sweep seed.
        sub.seed = derive_seed(config.seed, flat as u64 + 1);
        sub.out = None;
        sub.ci = false;
        let report = run_experiment(&sub)?;
        let mut point_desc = String::new();
        for (k, v) in &point {
            let _ = write!(point_desc, "{k}={v};");
        }
        match &mut merged {
            None => {
                let mut header = report.header.clone();
                header.push("grid_point".to_owned());
                let rows = report
                    .rows
                    .into_iter()
                    .map(|mut r| {
                        r.push(point_desc.clone());
                        r
                    })
                    .collect();
                merged = Some(CsvReport {
                    header,
                    rows,
                    failed_rows: report.failed_rows,
                });
            }
            Some(m) => {
                for mut r in report.rows {
                    r.push(point_desc.clone());
                    m.rows.push(r);
                }
                m.failed_rows += report.failed_rows;
            }
        }
    }
    merged.ok_or_else(|| vec!["empty sweep".to_owned()])
}

/// Replays up to 5 pseudo-randomly chosen rows and checks byte equality.
fn verify_rows(config: &ExperimentConfig, report: &CsvReport) -> Result<(), Vec<String>> {
    if report.rows.is_empty() || config.kind == ExperimentKind::Sweep {
        return Ok(());
    }
    let mut replay_cfg = config.clone();
    replay_cfg.ci = false;
    let replay = run_experiment(&replay_cfg)?;
    let mut picker = RngStream::new(config.seed, "rowcheck");
    let mut errs = Vec::new();
    for _ in 0..5.min(report.rows.len()) {
        let idx = picker.index(report.rows.len());
        if replay.rows[idx] != report.rows[idx] {
            errs.push(format!("row {idx} failed replay verification"));
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}
