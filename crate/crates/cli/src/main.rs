//! psketch: build sketching operators, apply them, and run reproducible
//! experiments that emit CSV reports.
//!
//! Exit codes: 0 success, 2 validation error, 3 resource guard, 4 some
//! trial rows failed (the run still completes and writes its report).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psketch_cli::config::{ExperimentConfig, ExperimentKind};
use psketch_cli::runner::run_experiment;
use psketch_core::embed::{self, EmbeddingSpec};
use psketch_core::error::Error as CoreError;
use psketch_core::hardgen::{generate_hard, HardInstanceSpec};
use psketch_core::io;
use psketch_core::matrix::MatrixRef;

#[derive(Parser)]
#[command(name = "psketch", version, about = "lp subspace sketching toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's trial count.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads (default: logical cores, or PSKETCH_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Spot-check that 5 rows replay byte-identically.
    #[arg(long)]
    ci: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build an embedding from a spec file and write it as MatrixMarket.
    Build {
        /// JSON EmbeddingSpec.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Apply an embedding to a matrix file (.mtx sparse, else dense text).
    Apply {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample an adversarial instance; writes <out>.mtx and <out>.roles.json.
    Hardgen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distortion measurement experiment (kinds: distort, hardstress).
    Distort(ExperimentArgs),
    /// Monte-Carlo tail frequency experiment.
    Tails(ExperimentArgs),
    /// Rank-drop frequency experiment.
    Rankdrop(ExperimentArgs),
    /// Regression pipeline experiment.
    Regress(ExperimentArgs),
    /// Cartesian parameter sweep over a base experiment.
    Sweep(ExperimentArgs),
}

fn core_exit(err: &CoreError) -> u8 {
    match err {
        CoreError::Resource(_) => 3,
        _ => 2,
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn load_spec(path: &Path, seed: Option<u64>) -> Result<EmbeddingSpec, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut spec: EmbeddingSpec =
        serde_json::from_str(&text).map_err(|e| format!("spec JSON: {e}"))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn run_build(spec_path: &Path, out: &Path, seed: Option<u64>) -> ExitCode {
    let spec = match load_spec(spec_path, seed) {
        Ok(s) => s,
        Err(e) => return fail(2, e),
    };
    let e = match embed::build(&spec) {
        Ok(e) => e,
        Err(err) => return fail(core_exit(&err), err),
    };
    let m = match embed::materialize(&e) {
        Ok(m) => m,
        Err(err) => return fail(core_exit(&err), err),
    };
    if let Err(err) = io::write_sparse(out, &m) {
        return fail(2, err);
    }
    let summary = serde_json::json!({
        "spec": e.spec,
        "rows": e.rows,
        "nnz": m.nnz(),
        "max_column_nnz": e.max_column_nnz(),
        "mean_column_nnz": e.mean_column_nnz(),
        "block_boundary": e.block_boundary,
    });
    let summary_path = out.with_extension("json");
    if let Err(err) = std::fs::write(&summary_path, summary.to_string()) {
        return fail(2, err);
    }
    println!("{summary}");
    ExitCode::SUCCESS
}

fn run_apply(spec_path: &Path, matrix: &Path, out: &Path, seed: Option<u64>) -> ExitCode {
    let mut spec = match load_spec(spec_path, seed) {
        Ok(s) => s,
        Err(e) => return fail(2, e),
    };
    let is_mtx = matrix.extension().and_then(|e| e.to_str()) == Some("mtx");
    let result = (|| -> Result<(), CoreError> {
        let product = if is_mtx {
            let a = io::read_sparse(matrix)?;
            spec.n = a.rows();
            let e = embed::build(&spec)?;
            embed::apply(&e, MatrixRef::Sparse(&a))?
        } else {
            let a = io::read_dense(matrix)?;
            spec.n = a.rows();
            let e = embed::build(&spec)?;
            embed::apply(&e, MatrixRef::Dense(&a))?
        };
        io::write_dense(out, &product)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => fail(core_exit(&err), err),
    }
}

fn run_hardgen(n: usize, d: usize, seed: u64, out: &Path) -> ExitCode {
    let spec = HardInstanceSpec::new(n, d, seed);
    let inst = match generate_hard(&spec) {
        Ok(i) => i,
        Err(err) => return fail(core_exit(&err), err),
    };
    let mtx_path = out.with_extension("mtx");
    if let Err(err) = io::write_sparse(&mtx_path, &inst.matrix) {
        return fail(2, err);
    }
    let roles = serde_json::json!({
        "n": n,
        "d": d,
        "seed": seed,
        "block_count": inst.block_count,
        "columns": inst.roles,
    });
    let roles_path = out.with_extension("roles.json");
    if let Err(err) = std::fs::write(&roles_path, roles.to_string()) {
        return fail(2, err);
    }
    println!(
        "wrote {} ({} nnz) and {}",
        mtx_path.display(),
        inst.matrix.nnz(),
        roles_path.display()
    );
    ExitCode::SUCCESS
}

fn run_experiment_command(expected: &[ExperimentKind], args: &ExperimentArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail(2, format!("{}: {e}", args.config.display())),
    };
    let mut config = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => return fail(2, e),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out = Some(out.clone());
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if args.ci {
        config.ci = true;
    }
    if !expected.contains(&config.kind) {
        return fail(
            2,
            format!(
                "config kind '{}' does not match this subcommand",
                config.kind.name()
            ),
        );
    }
    let threads = args
        .threads
        .or_else(|| {
            std::env::var("PSKETCH_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build();
    let pool = match pool {
        Ok(p) => p,
        Err(e) => return fail(2, e),
    };
    let report = pool.install(|| run_experiment(&config));
    match report {
        Ok(report) => {
            match &config.out {
                Some(path) => {
                    if let Err(e) = report.write_atomic(path) {
                        return fail(2, e);
                    }
                }
                None => print!("{}", report.to_csv()),
            }
            if report.failed_rows > 0 {
                eprintln!("{} of {} rows failed", report.failed_rows, report.rows.len());
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(errs) => {
            for e in &errs {
                eprintln!("error: {e}");
            }
            let code = if errs.iter().any(|e| e.contains("guard")) {
                3
            } else {
                2
            };
            ExitCode::from(code)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Build { spec, out, seed } => run_build(spec, out, *seed),
        Command::Apply {
            spec,
            matrix,
            out,
            seed,
        } => run_apply(spec, matrix, out, *seed),
        Command::Hardgen { n, d, seed, out } => run_hardgen(*n, *d, *seed, out),
        Command::Distort(args) => {
            run_experiment_command(&[ExperimentKind::Distort, ExperimentKind::HardStress], args)
        }
        Command::Tails(args) => run_experiment_command(&[ExperimentKind::Tails], args),
        Command::Rankdrop(args) => run_experiment_command(&[ExperimentKind::RankDrop], args),
        Command::Regress(args) => run_experiment_command(&[ExperimentKind::Regress], args),
        Command::Sweep(args) => run_experiment_command(&[ExperimentKind::Sweep], args),
    }
}
