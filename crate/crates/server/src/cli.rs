//! The `tackl` command line.

use std::error::Error;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use tackl::active::{run_experiment, SyntheticSpec};
use tackl::eval::evaluate;
use tackl::io::{
    load_features, load_pool, save_features, save_pool, write_aggregates, write_results, ExperimentConfig,
    FeatureTable, ModelCheckpoint, Provenance,
};
use tackl::model::{CombinedModel, TripletResponse, DEFAULT_MU};
use tackl::optim::{fit_ckl, fit_tackl, FitConfig};
use tackl::oracle::{aggregate_votes, exhaustive_pool, generate_ground_truth, make_aux_features, AnswerMode};
use tackl::rng::{derive_seed, Stream};

use crate::api::{serve, AppState};
use crate::store::Store;

pub type CliResult = Result<(), Box<dyn Error + Send + Sync>>;

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "TACKL_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "tackl", version, about = "Triplet embeddings with auxiliary features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitMethod {
    Ckl,
    Tackl,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every configured learner for every trial and write per-round metrics.
    RunExperiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-(method, round) means with 90% intervals.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Write a synthetic object set: features.csv, truth.csv and an exhaustive pool.txt.
    GenSynthetic {
        #[arg(long, default_value_t = 60)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        noise_dims: usize,
        /// Answer with the triplet likelihood under the truth instead of deterministically.
        #[arg(long)]
        probabilistic_mu: Option<f64>,
        /// Defaults to `$TACKL_DATA_DIR/synthetic`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, env = DATA_DIR_ENV, default_value = "tackl-data")]
        data_dir: PathBuf,
    },
    /// Majority-vote raw responses (`head closer farther` per line) into a pool.
    MakePool {
        #[arg(long)]
        votes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed for breaking even splits.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a model on every response in a pool and write a checkpoint.
    Fit {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FitMethod::Tackl)]
        method: FitMethod,
        #[arg(long)]
        dhat: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the labeling session API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Sessions are stored under this directory.
        #[arg(long, env = DATA_DIR_ENV, default_value = "tackl-data")]
        data_dir: PathBuf,
        /// Keep sessions in memory only.
        #[arg(long)]
        ephemeral: bool,
    },
    /// Print a checkpoint's metrics on a pool as JSON.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pool: PathBuf,
    },
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::RunExperiment { config, out: csv, summary } => run_experiment_cmd(&config, &csv, summary.as_deref(), out),
        Command::GenSynthetic { n, seed, noise_dims, probabilistic_mu, out_dir, data_dir } => {
            let dir = out_dir.unwrap_or_else(|| data_dir.join("synthetic"));
            gen_synthetic(n, seed, noise_dims, probabilistic_mu, &dir, out)
        }
        Command::MakePool { votes, out: pool, seed } => make_pool(&votes, &pool, seed, out),
        Command::Fit { pool, features, method, dhat, seed, out: ckpt } => {
            fit(&pool, features.as_deref(), method, dhat, seed, &ckpt, out)
        }
        Command::Serve { port, host, data_dir, ephemeral } => {
            let state = if ephemeral { AppState::in_memory() } else { AppState::with_store(Store::open(data_dir)?)? };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(SocketAddr::new(host, port), state))?;
            Ok(())
        }
        Command::Eval { model, pool } => eval(&model, &pool, out),
    }
}

pub fn run_experiment_cmd(config: &Path, csv: &Path, summary: Option<&Path>, out: &mut dyn Write) -> CliResult {
    let cfg = ExperimentConfig::load(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let data = cfg.data(base)?;
    let spec = cfg.spec();
    info!("running {} method(s) x {} trial(s) x {} round(s)", spec.methods.len(), spec.trials, spec.rounds + 1);
    let result = run_experiment(&spec, &data)?;
    write_results(&result.records, csv)?;
    if let Some(p) = summary {
        write_aggregates(&result.aggregates, p)?;
    }
    for row in result.aggregates.iter().filter(|r| r.round == spec.rounds) {
        writeln!(out, "{:>14} round {:>3}: error {:.4}", row.method, row.round, row.error.mean)?;
    }
    Ok(())
}

/// Trial 0 of a synthetic experiment with the same seed.
pub fn gen_synthetic(
    n: usize,
    seed: u64,
    noise_dims: usize,
    probabilistic_mu: Option<f64>,
    dir: &Path,
    out: &mut dyn Write,
) -> CliResult {
    let spec = SyntheticSpec { n, noise_dims, ..SyntheticSpec::default() };
    let t = [0u64];
    let space = generate_ground_truth(n, &spec.dims, derive_seed(seed, Stream::Generate, &t))?;
    let features = make_aux_features(
        &space,
        &spec.true_dims,
        noise_dims,
        &spec.noise,
        derive_seed(seed, Stream::Noise, &t),
    )?;
    let mode = probabilistic_mu.map_or(AnswerMode::Deterministic, |mu| AnswerMode::Probabilistic { mu });
    let pool = exhaustive_pool(&space, mode, derive_seed(seed, Stream::Oracle, &t), spec.budget)?;

    std::fs::create_dir_all(dir)?;
    let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let table = |m, prefix: &str, k: usize| FeatureTable {
        ids: ids.clone(),
        columns: Some((0..k).map(|j| format!("{prefix}{j}")).collect()),
        matrix: m,
    };
    let truth = tackl::model::AuxFeatureMatrix::new(space.points())?;
    save_features(&table(features, "f", spec.true_dims.len() + noise_dims), &dir.join("features.csv"))?;
    save_features(&table(truth, "x", space.dim()), &dir.join("truth.csv"))?;
    save_pool(&pool, &dir.join("pool.txt"))?;
    writeln!(out, "wrote {n} objects and {} pool entries to {}", pool.len(), dir.display())?;
    Ok(())
}

/// Raw responses, one `head closer farther` triple per line; `#` starts a comment.
pub fn parse_votes(text: &str) -> Result<Vec<TripletResponse>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", i + 1))?;
        let [a, b, c] = f[..] else {
            return Err(format!("line {}: expected 3 fields, found {}", i + 1, f.len()));
        };
        out.push(TripletResponse::new(a.into(), b.into(), c.into()).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}

pub fn make_pool(votes: &Path, pool_path: &Path, seed: u64, out: &mut dyn Write) -> CliResult {
    let raw = parse_votes(&std::fs::read_to_string(votes)?)?;
    let (pool, stats) = aggregate_votes(&raw, seed)?;
    save_pool(&pool, pool_path)?;
    writeln!(
        out,
        "{} votes -> {} queries: {:.1}% unanimous, {:.1}% majority, {:.1}% tied",
        raw.len(),
        stats.queries,
        100.0 * stats.full_fraction(),
        100.0 * stats.partial_fraction(),
        100.0 * stats.tied_fraction()
    )?;
    Ok(())
}

pub fn fit(
    pool: &Path,
    features: Option<&Path>,
    method: FitMethod,
    dhat: Option<usize>,
    seed: u64,
    ckpt: &Path,
    out: &mut dyn Write,
) -> CliResult {
    let responses = load_pool(pool)?.responses();
    let cfg = FitConfig { seed, ..FitConfig::default() };
    let model = match method {
        FitMethod::Ckl => {
            let n = match features {
                Some(f) => load_features(f)?.matrix.n(),
                None => responses.iter().map(|r| r.head.0.max(r.closer.0).max(r.farther.0) + 1).max().unwrap_or(0),
            };
            let (free, _) = fit_ckl(&responses, n, dhat.unwrap_or(crate::session::DEFAULT_CKL_DHAT), DEFAULT_MU, &cfg)?;
            CombinedModel::ckl(free, DEFAULT_MU)?
        }
        FitMethod::Tackl => {
            let f = load_features(features.ok_or("TACKL needs --features")?)?.matrix;
            let d = f.d();
            fit_tackl(&f, &responses, dhat.unwrap_or(d), DEFAULT_MU, &cfg)?.0
        }
    };
    let args = format!("fit {method:?} pool={} dhat={dhat:?} seed={seed}", pool.display());
    ModelCheckpoint::from_model(&model, Provenance::new(&args, 0, seed)).save(ckpt)?;
    let m = evaluate(&model, &responses)?;
    writeln!(out, "fitted {} responses; training error {:.4}", responses.len(), m.error)?;
    Ok(())
}

pub fn eval(model: &Path, pool: &Path, out: &mut dyn Write) -> CliResult {
    let model = ModelCheckpoint::load(model)?.to_model()?;
    let responses = load_pool(pool)?.responses();
    let m = evaluate(&model, &responses)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&m)?)?;
    Ok(())
}
