//! Command-line front end: dataset generation and conversion, training,
//! evaluation, baselines, the ablation grid, and self-verification.
//!
//! Every training-adjacent subcommand resolves its configuration the same
//! way: defaults, then an optional JSON config file, then `--set key=value`
//! overrides, then explicit flags. Runs write a reproducibility record
//! (resolved config, seed, build version, dataset digest) next to their
//! outputs.

use crate::ctdg::{CtdgError, Dataset, DatasetManifest};
use crate::loss::LossError;
use crate::ssm::SsmError;
use crate::synth::{SynthConfig, SynthError};
use crate::train::{
    evaluate, evaluate_baseline, run_ablation, train, BaselineKind, Checkpoint, Portion,
    TrainConfig, TrainError,
};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Exit codes: 0 success, 2 usage (from the argument parser), and the
/// distinct failure classes below.
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_RUN: i32 = 5;
pub const EXIT_VERIFY: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] CtdgError),
    #[error("run failed: {0}")]
    Run(String),
    #[error("verification failed: {0} of {1} checks")]
    Verify(usize, usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Run(_) => EXIT_RUN,
            CliError::Verify(..) => EXIT_VERIFY,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Ctdg(c) => CliError::Data(c),
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(m) => CliError::Config(m),
            SynthError::Ctdg(c) => CliError::Data(c),
            SynthError::Io { path, source } => {
                CliError::Run(format!("io error writing {}: {source}", path.display()))
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "navis",
    version,
    about = "Node affinity forecasting on continuous-time dynamic graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark dataset (event CSV plus manifest)
    GenerateSynthetic(GenerateArgs),
    /// Convert a link stream into per-period affinity targets and report
    /// dataset statistics
    ConvertLinks(ConvertArgs),
    /// Train a model and write a checkpoint, metrics, and a run record
    Train(TrainArgs),
    /// Evaluate a checkpoint on one dataset portion
    Evaluate(EvaluateArgs),
    /// Score the non-trained heuristic baselines
    Baseline(BaselineArgs),
    /// Train and score every ablation configuration
    Ablate(AblateArgs),
    /// Re-run the built-in consistency checks
    Verify,
}

/// Shared configuration resolution: `--config`, then `--set`.
#[derive(Debug, Args, Clone)]
pub struct ConfigArgs {
    /// JSON config file; omitted fields keep their defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one top-level config field, e.g. `--set epochs=10`.
    /// Values are parsed as JSON, falling back to strings
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

impl ConfigArgs {
    /// Deserializes `T` from defaults + file + overrides.
    pub fn resolve<T>(&self) -> Result<T, CliError>
    where
        T: serde::de::DeserializeOwned + Serialize + Default,
    {
        let mut value = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => serde_json::to_value(T::default()).expect("default serializes"),
        };
        let obj = value
            .as_object_mut()
            .ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
        for entry in &self.sets {
            let (key, raw) = entry
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set needs KEY=VALUE, got {entry}")))?;
            let parsed = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            obj.insert(key.to_string(), parsed);
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory for events.csv and manifest.json
    #[arg(long, short)]
    pub out: PathBuf,
    /// Generator seed (overrides the config file)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Dataset manifest (JSON naming the event CSV, candidate mode, period)
    #[arg(long, short)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, short)]
    pub manifest: PathBuf,
    /// Output directory for checkpoint.json, metrics.jsonl, run.json
    #[arg(long, short)]
    pub out: PathBuf,
    /// Training seed (overrides the config file)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, short)]
    pub manifest: PathBuf,
    #[arg(long, short)]
    pub checkpoint: PathBuf,
    /// Which periods to score: train, val, or test
    #[arg(long, value_enum, default_value = "test")]
    pub portion: PortionArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PortionArg {
    Train,
    Val,
    Test,
}

impl From<PortionArg> for Portion {
    fn from(p: PortionArg) -> Self {
        match p {
            PortionArg::Train => Portion::Train,
            PortionArg::Val => Portion::Val,
            PortionArg::Test => Portion::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, short)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub portion: PortionArg,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, short)]
    pub manifest: PathBuf,
    /// Output file for the ablation table (JSON lines)
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Reproducibility record written next to every training run.
#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub config_hash: String,
    pub seed: u64,
    pub build: String,
    pub dataset_sha256: String,
    pub best_val_ndcg: f64,
}

/// SHA-256 of the event file named by a manifest.
pub fn dataset_digest(manifest_path: &Path) -> Result<String, CliError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let bytes = std::fs::read(base.join(&manifest.events)).map_err(|e| {
        CliError::Data(CtdgError::Manifest(format!("cannot read event file: {e}")))
    })?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn load_dataset(manifest_path: &Path) -> Result<Dataset, CliError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    Ok(manifest.load_dataset(manifest_path)?)
}

/// Renders rows as a left-aligned text table.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let fmt_row = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let head: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    let mut out = fmt_row(&head);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    for row in rows {
        out.push('\n');
        out.push_str(&fmt_row(row));
    }
    out
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Run(format!("cannot create {}: {e}", dir.display())))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenerateSynthetic(args) => cmd_generate(args),
        Command::ConvertLinks(args) => cmd_convert(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Verify => cmd_verify(),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let mut config: SynthConfig = args.config.resolve()?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    ensure_dir(&args.out)?;
    let manifest_path = crate::synth::write_dataset(&config, &args.out)?;
    let resolved = args.out.join("generator.json");
    std::fs::write(
        &resolved,
        serde_json::to_string_pretty(&config).expect("config serializes"),
    )
    .map_err(|e| CliError::Run(format!("cannot write {}: {e}", resolved.display())))?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.manifest)?;
    let seq = &dataset.sequence;
    let nonzero = seq.queries.iter().filter(|q| !q.target.is_zero()).count();
    let rows = vec![
        vec!["events".to_string(), dataset.stream.events.len().to_string()],
        vec!["nodes".to_string(), dataset.stream.nodes.len().to_string()],
        vec!["candidates".to_string(), dataset.index.d().to_string()],
        vec!["periods".to_string(), seq.num_periods.to_string()],
        vec!["queries".to_string(), seq.queries.len().to_string()],
        vec!["nonzero targets".to_string(), nonzero.to_string()],
        vec!["dropped events".to_string(), seq.dropped_events.to_string()],
    ];
    println!("{}", render_table(&["stat", "value"], &rows));
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut config: TrainConfig = args.config.resolve()?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let dataset = load_dataset(&args.manifest)?;
    let digest = dataset_digest(&args.manifest)?;
    ensure_dir(&args.out)?;

    let outcome = train(&config, &dataset)?;
    let ckpt_path = args.out.join("checkpoint.json");
    outcome.best.save(&ckpt_path)?;

    let metrics_path = args.out.join("metrics.jsonl");
    let mut lines = String::new();
    for m in &outcome.metrics {
        lines.push_str(&serde_json::to_string(m).expect("metrics serialize"));
        lines.push('\n');
    }
    std::fs::write(&metrics_path, lines)
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", metrics_path.display())))?;

    let record = RunRecord {
        config_hash: config.hash(),
        seed: config.seed,
        build: env!("CARGO_PKG_VERSION").to_string(),
        dataset_sha256: digest,
        best_val_ndcg: outcome.best_val_ndcg,
        config,
    };
    let record_path = args.out.join("run.json");
    std::fs::write(
        &record_path,
        serde_json::to_string_pretty(&record).expect("record serializes"),
    )
    .map_err(|e| CliError::Run(format!("cannot write {}: {e}", record_path.display())))?;

    println!(
        "trained {} epochs, best validation ndcg@{} {:.4}",
        outcome.metrics.len(),
        record.config.ndcg_k,
        outcome.best_val_ndcg
    );
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.manifest)?;
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let report = evaluate(&checkpoint, &dataset, args.portion.into())?;
    let rows = vec![vec![
        format!("{:?}", args.portion).to_lowercase(),
        format!("{:.4}", report.mean_ndcg),
        format!("{:.4}", report.mean_l1),
        report.queries.to_string(),
    ]];
    println!(
        "{}",
        render_table(&["portion", "ndcg@k", "l1", "queries"], &rows)
    );
    Ok(())
}

/// The standard baseline roster.
pub fn baseline_roster() -> Vec<BaselineKind> {
    vec![
        BaselineKind::Persistent,
        BaselineKind::Ema { alpha: 0.2 },
        BaselineKind::Sma { window: 5 },
        BaselineKind::HistoricalMean,
        BaselineKind::Ar1,
    ]
}

fn cmd_baseline(args: BaselineArgs) -> Result<(), CliError> {
    let config: TrainConfig = args.config.resolve()?;
    let dataset = load_dataset(&args.manifest)?;
    let mut rows = Vec::new();
    for kind in baseline_roster() {
        let report = evaluate_baseline(
            &dataset,
            kind,
            config.fractions,
            config.ndcg_k,
            args.portion.into(),
        )?;
        rows.push(vec![
            kind.label(),
            format!("{:.4}", report.mean_ndcg),
            format!("{:.4}", report.mean_l1),
            report.queries.to_string(),
        ]);
    }
    println!(
        "{}",
        render_table(&["baseline", "ndcg@k", "l1", "queries"], &rows)
    );
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<(), CliError> {
    let config: TrainConfig = args.config.resolve()?;
    let dataset = load_dataset(&args.manifest)?;
    let table = run_ablation(&config, &dataset)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                format!("{:.4}", r.test_ndcg),
                format!("{:.4}", r.test_l1),
            ]
        })
        .collect();
    println!(
        "{}",
        render_table(&["configuration", "test ndcg@k", "test l1"], &rows)
    );
    if let Some(out) = &args.out {
        let mut lines = String::new();
        for r in &table {
            lines.push_str(&serde_json::to_string(r).expect("row serializes"));
            lines.push('\n');
        }
        std::fs::write(out, lines)
            .map_err(|e| CliError::Run(format!("cannot write {}: {e}", out.display())))?;
    }
    Ok(())
}

/// One self-check: a label and whether it held.
fn verify_checks() -> Vec<(&'static str, Result<(), String>)> {
    use crate::heuristics::{ema_step, EmaState};
    use crate::model::{
        ema_equivalent_params, navis_forward, pf_equivalent_params, WeightMode,
    };
    use crate::ssm::{instantiate_heuristic, ssm_step, HeuristicKind};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let mut checks: Vec<(&'static str, Result<(), String>)> = Vec::new();
    let to_res = |ok: bool, msg: String| if ok { Ok(()) } else { Err(msg) };

    // 1. the EMA state-space form matches the recursive EMA on a random
    // stream
    let check = (|| -> Result<(), String> {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let d = 6;
        let alpha = 0.3;
        let params = instantiate_heuristic(HeuristicKind::Ema { alpha }, d)
            .map_err(|e: SsmError| e.to_string())?;
        let mut ema = EmaState::new(d, alpha).map_err(|e| e.to_string())?;
        let mut h = vec![0.0; d];
        for _ in 0..100 {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (h2, s) = ssm_step(&params, &h, &x).map_err(|e| e.to_string())?;
            ema_step(&mut ema, &x).map_err(|e| e.to_string())?;
            h = h2;
            let err: f64 = s
                .iter()
                .zip(&ema.h)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if err > 1e-12 {
                return Err(format!("max deviation {err}"));
            }
        }
        Ok(())
    })();
    checks.push(("state-space form reproduces recursive smoothing", check));

    // 2. saturated gate parameterizations reproduce the heuristics
    let check = (|| -> Result<(), String> {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let d = 5;
        let alpha = 0.4;
        let params = ema_equivalent_params(d, alpha);
        let pf = pf_equivalent_params(d);
        let mut ema = EmaState::new(d, alpha).map_err(|e| e.to_string())?;
        let mut h = vec![0.0; d];
        for _ in 0..100 {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
            let g = vec![0.0; d];
            let (h2, s, _) = navis_forward(&params, &h, &x, &g, WeightMode::InnerProduct)
                .map_err(|e| e.to_string())?;
            ema_step(&mut ema, &x).map_err(|e| e.to_string())?;
            h = h2;
            let err: f64 = s
                .iter()
                .zip(&ema.h)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if err > 1e-6 {
                return Err(format!("gated model vs ema deviation {err}"));
            }
            let (_, s_pf, _) = navis_forward(&pf, &vec![0.3; d], &x, &g, WeightMode::InnerProduct)
                .map_err(|e| e.to_string())?;
            let err: f64 = s_pf
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if err > 1e-6 {
                return Err(format!("gated model vs persistence deviation {err}"));
            }
        }
        Ok(())
    })();
    checks.push(("saturated gates reproduce the heuristics", check));

    // 3. analytic gradients agree with finite differences
    let check = (|| -> Result<(), String> {
        use crate::model::{init_gru_params, init_params, navis_backward, InitScheme};
        let d = 4;
        let params = init_params(d, InitScheme::FanIn, 9);
        let gru = init_gru_params(d, InitScheme::FanIn, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let g: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ds: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |p: &crate::model::NavisParams| -> f64 {
            let (_, s, _) = navis_forward(p, &h, &x, &g, WeightMode::InnerProduct).unwrap();
            s.iter().zip(&ds).map(|(a, b)| a * b).sum()
        };
        let (_, _, cache) =
            navis_forward(&params, &h, &x, &g, WeightMode::InnerProduct).unwrap();
        let grads = navis_backward(&params, None, &cache, &ds, WeightMode::InnerProduct);
        let eps = 1e-6;
        let mut p = params.clone();
        for row in 0..7 {
            for k in 0..d {
                let orig = p.rows()[row][k];
                p.rows_mut()[row][k] = orig + eps;
                let up = loss(&p);
                p.rows_mut()[row][k] = orig - eps;
                let down = loss(&p);
                p.rows_mut()[row][k] = orig;
                let fd = (up - down) / (2.0 * eps);
                let an = grads.params.rows()[row][k];
                if (fd - an).abs() > 1e-6 * (1.0 + fd.abs()) {
                    return Err(format!("row {row} entry {k}: analytic {an} vs numeric {fd}"));
                }
            }
        }
        // trainable-update variant on one probe
        let (_, _, cache) = crate::model::navis_forward_gru(
            &params,
            &gru,
            &h,
            &x,
            &g,
            WeightMode::InnerProduct,
        )
        .unwrap();
        let grads = navis_backward(&params, Some(&gru), &cache, &ds, WeightMode::InnerProduct);
        let mut gp = gru.clone();
        let orig = gp.rows()[0][0];
        let probe = |gp: &crate::model::GruUpdateParams| -> f64 {
            let (_, s, _) = crate::model::navis_forward_gru(
                &params,
                gp,
                &h,
                &x,
                &g,
                WeightMode::InnerProduct,
            )
            .unwrap();
            s.iter().zip(&ds).map(|(a, b)| a * b).sum()
        };
        gp.rows_mut()[0][0] = orig + eps;
        let up = probe(&gp);
        gp.rows_mut()[0][0] = orig - eps;
        let down = probe(&gp);
        let fd = (up - down) / (2.0 * eps);
        let an = grads.gru.as_ref().expect("gru grads").rows()[0][0];
        to_res(
            (fd - an).abs() <= 1e-6 * (1.0 + fd.abs()),
            format!("trainable update: analytic {an} vs numeric {fd}"),
        )
    })();
    checks.push(("analytic gradients match finite differences", check));

    // 4. the ranking loss prefers correctly ordered scores where
    // cross-entropy does not
    let check = (|| -> Result<(), String> {
        use crate::loss::{cross_entropy, lambda_loss, RankOptions, RankingContext};
        let y = [0.4, 0.35, 0.25];
        let s1 = [0.8, 0.15, 0.05];
        let s2 = [0.35, 0.4, 0.25];
        let ce1 = cross_entropy(&s1, &y).map_err(|e: LossError| e.to_string())?;
        let ce2 = cross_entropy(&s2, &y).map_err(|e| e.to_string())?;
        if ce1 <= ce2 {
            return Err(format!("cross-entropy {ce1} vs {ce2}"));
        }
        let opts = RankOptions::default();
        let ctx1 = RankingContext::build(&s1, &y, opts).map_err(|e| e.to_string())?;
        let ctx2 = RankingContext::build(&s2, &y, opts).map_err(|e| e.to_string())?;
        let r1 = lambda_loss(&s1, &y, &ctx1).map_err(|e| e.to_string())?;
        let r2 = lambda_loss(&s2, &y, &ctx2).map_err(|e| e.to_string())?;
        to_res(
            r1 < r2,
            format!("rank loss {r1} for the correct order vs {r2}"),
        )
    })();
    checks.push(("rank loss orders scores where cross-entropy fails", check));

    checks
}

fn cmd_verify() -> Result<(), CliError> {
    let checks = verify_checks();
    let total = checks.len();
    let mut failed = 0;
    for (label, result) in checks {
        match result {
            Ok(()) => println!("pass  {label}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {label}: {msg}");
            }
        }
    }
    if failed > 0 {
        Err(CliError::Verify(failed, total))
    } else {
        println!("all {total} checks passed");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_overrides_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, r#"{"epochs": 7, "learning_rate": 0.5}"#).unwrap();
        let args = ConfigArgs {
            config: Some(path),
            sets: vec!["epochs=9".to_string(), "loss=\"ce\"".to_string()],
        };
        let config: TrainConfig = args.resolve().unwrap();
        assert_eq!(config.epochs, 9);
        assert_eq!(config.learning_rate, 0.5);
        assert_eq!(config.loss, crate::train::LossKind::Ce);
        assert_eq!(config.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn bad_override_is_a_config_error() {
        let args = ConfigArgs {
            config: None,
            sets: vec!["epochs".to_string()],
        };
        let err = args.resolve::<TrainConfig>().unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn unknown_field_in_config_rejected() {
        let args = ConfigArgs {
            config: None,
            sets: vec!["no_such_field=1".to_string()],
        };
        assert!(args.resolve::<TrainConfig>().is_err());
    }

    #[test]
    fn table_columns_align() {
        let rows = vec![
            vec!["a".to_string(), "1.0".to_string()],
            vec!["longer".to_string(), "2".to_string()],
        ];
        let table = render_table(&["name", "value"], &rows);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("name"));
        assert!(lines[3].starts_with("longer"));
        let col = lines[0].find("value").unwrap();
        assert_eq!(&lines[2][col..col + 3], "1.0");
    }

    #[test]
    fn self_checks_all_pass() {
        for (label, result) in verify_checks() {
            assert!(result.is_ok(), "{label}: {:?}", result.err());
        }
    }

    #[test]
    fn cli_parses_subcommands() {
        use clap::Parser;
        let cli = Cli::try_parse_from([
            "navis",
            "train",
            "--manifest",
            "m.json",
            "--out",
            "runs/a",
            "--set",
            "epochs=2",
        ])
        .unwrap();
        match cli.command {
            Command::Train(args) => {
                assert_eq!(args.manifest, PathBuf::from("m.json"));
                assert_eq!(args.config.sets, vec!["epochs=2"]);
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["navis", "bogus"]).is_err());
    }
}
