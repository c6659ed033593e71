//! Command implementations behind the `qexpr` binary: dataset generation
//! with ground-truth labels, training, evaluation, prediction, and the
//! correlation / sample-size / extrapolation studies. Every command writes
//! a run manifest next to its primary output so results can be reproduced
//! exactly.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::backend::BackendModel;
use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::expressibility::{expressibility, ExprConfig, ExprMode};
use crate::gnn::{
    load_checkpoint, predict, rmse, save_checkpoint, train, Checkpoint, ModelConfig, ModelParams,
    TrainConfig,
};
use crate::graphenc::{
    self, normalize_records, read_dataset, split_dataset, write_dataset, CircuitGraph, Split,
};
use crate::pqcgen::{random_pqc, GenConfig};
use crate::rng::RngStream;
use crate::transpile::transpile;
use crate::qasm;

/// Canonical binding angle used when encoding circuit structure as a graph;
/// arbitrary, away from every decomposition degeneracy.
const ENCODING_ANGLE: f64 = std::f64::consts::FRAC_PI_4;

#[derive(Parser, Debug)]
#[command(name = "qexpr", version, about = "Expressibility toolkit for parameterized quantum circuits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate labeled circuit-graph datasets.
    Generate(GenerateArgs),
    /// Compute the expressibility of one circuit.
    Expr(ExprArgs),
    /// Train the graph-transformer regressor.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labeled dataset.
    Eval(EvalArgs),
    /// Predict expressibility for a single circuit file.
    Predict(PredictArgs),
    /// Correlate global circuit features with expressibility.
    StudyCorrelation(StudyCorrelationArgs),
    /// Test RMSE as a function of per-stratum training-set size.
    StudySamplesize(StudySamplesizeArgs),
    /// Train on small registers, evaluate across all register sizes.
    StudyExtrapolation(StudyExtrapolationArgs),
    /// Re-run a previously recorded command from its manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenerateArgs {
    /// Qubit range, e.g. `1..5` (inclusive).
    #[arg(long)]
    pub qubits: String,
    /// Circuits per qubit count.
    #[arg(long)]
    pub per_qubit: usize,
    /// Repetition blocks are drawn uniformly from reps-min..=reps-max.
    #[arg(long, default_value_t = 1)]
    pub reps_min: usize,
    #[arg(long, default_value_t = 3)]
    pub reps_max: usize,
    /// Backend preset name or profile JSON path.
    #[arg(long, default_value = "noiseless")]
    pub backend: String,
    #[arg(long, default_value_t = 5000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 75)]
    pub bins: usize,
    #[arg(long, default_value = "exact")]
    pub mode: String,
    #[arg(long, default_value_t = 1024)]
    pub shots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV export of global features and labels.
    #[arg(long)]
    pub globals_csv: Option<PathBuf>,
    /// Keep state-independent circuits instead of resampling them.
    #[arg(long, default_value_t = false)]
    pub keep_trivial: bool,
    /// Resample circuits whose label exceeds this bound (0 disables the
    /// cap). Near-deterministic circuits produce labels approaching
    /// (2^n - 1) ln 75 that are both unreachable for a Huber-delta-1
    /// regressor and ambiguous under the angle-blind graph encoding.
    /// Single-qubit diagonal/permutation circuits are exempt: their fixed
    /// ln 75 label is exactly identifiable from the encoding.
    #[arg(long, default_value_t = 3.0)]
    pub max_label: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExprArgs {
    /// Circuit file (.json or .qasm).
    #[arg(long)]
    pub circuit: PathBuf,
    #[arg(long, default_value = "noiseless")]
    pub backend: String,
    #[arg(long, default_value_t = 5000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 75)]
    pub bins: usize,
    #[arg(long, default_value = "exact")]
    pub mode: String,
    #[arg(long, default_value_t = 1024)]
    pub shots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Result JSON path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Train/val/test percentages.
    #[arg(long, default_value = "70/10/20")]
    pub split: String,
    /// Seed of the stratified split (kept separate so eval can reproduce it).
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1500)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Epochs without validation improvement before the learning rate is
    /// reduced.
    #[arg(long, default_value_t = 10)]
    pub plateau_patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Restrict to one partition of a reproduced split (train|val|test|all).
    #[arg(long, default_value = "all")]
    pub partition: String,
    #[arg(long, default_value = "70/10/20")]
    pub split: String,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Per-qubit-count RMSE breakdown CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-record predictions CSV.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub circuit: PathBuf,
    #[arg(long, default_value = "noiseless")]
    pub backend: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct StudyCorrelationArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Feature-vs-label correlations CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Pairwise correlation matrix CSV (features + label).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct StudySamplesizeArgs {
    /// Training pool (labeled dataset).
    #[arg(long)]
    pub data: PathBuf,
    /// Fixed test set (labeled dataset).
    #[arg(long)]
    pub test_data: PathBuf,
    /// Comma-separated per-stratum training sizes.
    #[arg(long, default_value = "50,100,200,300")]
    pub sizes: String,
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct StudyExtrapolationArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Largest qubit count included in training.
    #[arg(long)]
    pub train_max_qubits: usize,
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Record of one command invocation, written next to its primary output.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub master_seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub started_unix: u64,
    pub wall_clock_secs: f64,
}

pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary_output.with_file_name(name)
}

fn write_manifest(
    command: &str,
    argv: &[String],
    seed: u64,
    inputs: &[&Path],
    outputs: &[&Path],
    started: std::time::SystemTime,
    began: std::time::Instant,
) -> Result<()> {
    let primary = outputs.first().copied();
    let manifest = RunManifest {
        command: command.to_string(),
        argv: argv.to_vec(),
        master_seed: seed,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        wall_clock_secs: began.elapsed().as_secs_f64(),
    };
    if let Some(primary) = primary {
        std::fs::write(manifest_path(primary), serde_json::to_string_pretty(&manifest)?)?;
    }
    Ok(())
}

fn parse_qubit_range(text: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = text.split("..").collect();
    let bad = || Error::validation(format!("bad qubit range `{text}`, expected e.g. `1..5`"));
    match parts.as_slice() {
        [single] => {
            let n = single.parse().map_err(|_| bad())?;
            Ok((n, n))
        }
        [a, b] => {
            let lo = a.parse().map_err(|_| bad())?;
            let hi = b.parse().map_err(|_| bad())?;
            if lo == 0 || hi < lo {
                return Err(bad());
            }
            Ok((lo, hi))
        }
        _ => Err(bad()),
    }
}

fn parse_split(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = text.split('/').collect();
    if parts.len() != 3 {
        return Err(Error::validation(format!("bad split `{text}`, expected e.g. `70/10/20`")));
    }
    let mut vals = [0.0; 3];
    for (v, p) in vals.iter_mut().zip(parts.iter()) {
        *v = p
            .parse::<f64>()
            .map_err(|_| Error::validation(format!("bad split component `{p}`")))?
            / 100.0;
    }
    Ok((vals[0], vals[1], vals[2]))
}

/// Load a circuit file by extension: .json or .qasm.
pub fn load_circuit_file(path: &Path) -> Result<Circuit> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("qasm") => qasm::parse(&text),
        _ => Circuit::from_json(&text),
    }
}

/// Build one labeled dataset record from an abstract circuit.
pub fn record_from_circuit(
    circuit: &Circuit,
    backend: &BackendModel,
    id: &str,
    expr_cfg: &ExprConfig,
    meta: serde_json::Value,
) -> Result<CircuitGraph> {
    let label = expressibility(circuit, backend, expr_cfg)?;
    let bound = circuit.bind(&vec![ENCODING_ANGLE; circuit.n_params])?;
    let transpiled = transpile(&bound, backend)?;
    graphenc::to_graph(
        &transpiled.circuit,
        backend,
        circuit.parameterized_gate_count(),
        id,
        Some(label.expr),
        meta,
    )
}

/// Generate the labeled corpus described by `args`; failures skip the
/// record and are logged so long runs survive individual bad circuits.
pub fn generate_records(args: &GenerateArgs) -> Result<Vec<CircuitGraph>> {
    let (lo, hi) = parse_qubit_range(&args.qubits)?;
    let backend = BackendModel::resolve(&args.backend)?;
    let mode: ExprMode = args.mode.parse()?;
    let cap = if args.max_label > 0.0 { args.max_label } else { f64::INFINITY };
    let mut records = Vec::with_capacity((hi - lo + 1) * args.per_qubit);
    for n in lo..=hi {
        for idx in 0..args.per_qubit {
            let id = format!("{}-q{n}-{idx:05}", backend.id);
            let result = (0..50u64)
                .find_map(|attempt| {
                    let stream =
                        RngStream::derive(args.seed, &[0xDA7A, n as u64, idx as u64, attempt]);
                    let lo = args.reps_min.clamp(1, 3);
                    let hi = args.reps_max.clamp(lo, 3);
                    let reps = lo + stream.clone().child(0).below(hi - lo + 1);
                    let mut gen = GenConfig::new(n, reps, stream.clone().child(1).next_u64());
                    gen.reject_state_independent = !args.keep_trivial;
                    let expr_cfg = ExprConfig {
                        num_pairs: args.pairs,
                        n_bins: args.bins,
                        mode,
                        shots: args.shots,
                        seed: stream.clone().child(2).next_u64(),
                    };
                    let result = random_pqc(&gen).and_then(|circuit| {
                        let cap_exempt = circuit.n_qubits == 1
                            && crate::pqcgen::is_diagonal_class(&circuit);
                        let meta = serde_json::json!({
                            "master_seed": args.seed,
                            "attempt": attempt,
                            "reps": reps,
                            "n_params": circuit.n_params,
                            "abstract_gates": circuit.gates.len(),
                            "generator": gen,
                            "pairs": args.pairs,
                            "mode": args.mode,
                            "shots": if mode == ExprMode::Exact { 0 } else { args.shots },
                        });
                        record_from_circuit(&circuit, &backend, &id, &expr_cfg, meta)
                            .map(|rec| (rec, cap_exempt))
                    });
                    match result {
                        Ok((rec, exempt)) if !exempt && rec.expr.unwrap_or(0.0) > cap => None,
                        other => Some(other.map(|(rec, _)| rec)),
                    }
                })
                .unwrap_or_else(|| {
                    Err(Error::validation(format!(
                        "no circuit under the label cap {cap} in 50 attempts"
                    )))
                });
            match result {
                Ok(rec) => records.push(rec),
                Err(e) => eprintln!("warning: skipping {id}: {e}"),
            }
        }
        eprintln!("generated {} circuits for n={n}", args.per_qubit);
    }
    Ok(records)
}

pub fn cmd_generate(args: &GenerateArgs, argv: &[String]) -> Result<()> {
    let started = std::time::SystemTime::now();
    let began = std::time::Instant::now();
    let records = generate_records(args)?;
    write_dataset(&args.out, &records)?;
    let mut outputs: Vec<&Path> = vec![&args.out];
    if let Some(csv) = &args.globals_csv {
        graphenc::export_globals_csv(csv, &records)?;
        outputs.push(csv);
    }
    write_manifest("generate", argv, args.seed, &[], &outputs, started, began)?;
    println!("wrote {} records to {}", records.len(), args.out.display());
    Ok(())
}

pub fn cmd_expr(args: &ExprArgs, argv: &[String]) -> Result<()> {
    let started = std::time::SystemTime::now();
    let began = std::time::Instant::now();
    let circuit = load_circuit_file(&args.circuit)?;
    let backend = BackendModel::resolve(&args.backend)?;
    let cfg = ExprConfig {
        num_pairs: args.pairs,
        n_bins: args.bins,
        mode: args.mode.parse()?,
        shots: args.shots,
        seed: args.seed,
    };
    let result = expressibility(&circuit, &backend, &cfg)?;
    let json = serde_json::json!({
        "expr": result.expr,
        "n_bins": result.histogram.n_bins,
        "num_pairs": result.num_pairs,
        "mode": result.mode,
        "shots": result.shots_per_pair,
        "histogram_counts": result.histogram.counts,
    });
    let text = serde_json::to_string_pretty(&json)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, &text)?;
            write_manifest("expr", argv, args.seed, &[&args.circuit], &[path], started, began)?;
        }
        None => println!("{text}"),
    }
    if args.out.is_some() {
        println!("expr = {}", result.expr);
    }
    Ok(())
}

fn load_labeled(path: &Path) -> Result<Vec<CircuitGraph>> {
    let (_, records) = read_dataset(path)?;
    if records.is_empty() {
        return Err(Error::Dataset { line: 2, msg: "dataset has no records".into() });
    }
    Ok(records)
}

pub fn cmd_train(args: &TrainArgs, argv: &[String]) -> Result<()> {
    let started = std::time::SystemTime::now();
    let began = std::time::Instant::now();
    let mut records = load_labeled(&args.data)?;
    let split = split_dataset(&records, parse_split(&args.split)?, args.split_seed)?;
    let stats = graphenc::normalize_dataset(&mut records, &split.train)?;
    let model_cfg = ModelConfig::default();
    let train_cfg = TrainConfig {
        lr: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        plateau_patience: args.plateau_patience,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let mut log = |m: &crate::gnn::EpochMetrics| {
        if m.epoch % 10 == 0 || m.epoch == 1 {
            eprintln!(
                "epoch {:>4}  train {:.5}  val {:.5}  lr {:.2e}",
                m.epoch, m.train_loss, m.val_loss, m.lr
            );
        }
    };
    let result = train(
        &records,
        &split.train,
        &split.val,
        &model_cfg,
        &train_cfg,
        &stats,
        Some(&args.out),
        Some(&mut log),
    )?;
    // The in-training checkpoints already wrote the best state; write once
    // more to cover the pathological case of no improvement after epoch 1.
    save_checkpoint(&args.out, &result.best_params, &train_cfg, &stats, result.best_epoch, result.best_val_loss)?;
    let mut outputs: Vec<&Path> = vec![&args.out];
    if let Some(metrics) = &args.metrics {
        result.write_metrics_csv(metrics)?;
        outputs.push(metrics);
    }
    write_manifest("train", argv, args.seed, &[&args.data], &outputs, started, began)?;
    println!(
        "best epoch {} with validation loss {:.6}; checkpoint at {}",
        result.best_epoch,
        result.best_val_loss,
        args.out.display()
    );
    Ok(())
}

/// Normalize records with checkpoint statistics and predict each one.
fn predict_records(
    params: &ModelParams,
    ckpt: &Checkpoint,
    records: &[CircuitGraph],
) -> Result<Vec<f64>> {
    let mut normalized = records.to_vec();
    normalize_records(&mut normalized, &ckpt.stats);
    let refs: Vec<&CircuitGraph> = normalized.iter().collect();
    predict(params, &refs)
}

fn partition_indices(args: &EvalArgs, records: &[CircuitGraph]) -> Result<Vec<usize>> {
    if args.partition == "all" {
        return Ok((0..records.len()).collect());
    }
    let split: Split = split_dataset(records, parse_split(&args.split)?, args.split_seed)?;
    Ok(match args.partition.as_str() {
        "train" => split.train,
        "val" => split.val,
        "test" => split.test,
        other => {
            return Err(Error::validation(format!(
                "unknown partition `{other}` (expected train, val, test, or all)"
            )))
        }
    })
}

pub fn cmd_eval(args: &EvalArgs, argv: &[String]) -> Result<f64> {
    let started = std::time::SystemTime::now();
    let began = std::time::Instant::now();
    let (params, ckpt) = load_checkpoint(&args.ckpt)?;
    let all = load_labeled(&args.data)?;
    let idx = partition_indices(args, &all)?;
    let subset: Vec<CircuitGraph> = idx.iter().map(|&i| all[i].clone()).collect();
    let preds = predict_records(&params, &ckpt, &subset)?;
    let labels: Vec<f64> = subset
        .iter()
        .map(|r| r.expr.ok_or_else(|| Error::validation(format!("record {} has no label", r.id))))
        .collect::<Result<_>>()?;
    let overall = rmse(&preds, &labels);

    use std::io::Write;
    let mut by_qubits: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, rec) in subset.iter().enumerate() {
        by_qubits.entry(rec.n_qubits).or_default().push(i);
    }
    let mut outputs: Vec<&Path> = Vec::new();
    if let Some(report) = &args.report {
        let mut out = std::io::BufWriter::new(std::fs::File::create(report)?);
        writeln!(out, "n_qubits,count,rmse")?;
        for (n, ids) in &by_qubits {
            let p: Vec<f64> = ids.iter().map(|&i| preds[i]).collect();
            let l: Vec<f64> = ids.iter().map(|&i| labels[i]).collect();
            writeln!(out, "{n},{},{}", ids.len(), rmse(&p, &l))?;
        }
        outputs.push(report);
    }
    if let Some(pred_path) = &args.predictions {
        let mut out = std::io::BufWriter::new(std::fs::File::create(pred_path)?);
        writeln!(out, "id,n_qubits,label,prediction")?;
        for (i, rec) in subset.iter().enumerate() {
            writeln!(out, "{},{},{},{}", rec.id, rec.n_qubits, labels[i], preds[i])?;
        }
        outputs.push(pred_path);
    }
    if !outputs.is_empty() {
        write_manifest("eval", argv, args.split_seed, &[&args.data, &args.ckpt], &outputs, started, began)?;
    }
    println!("rmse = {overall:.6} over {} records ({})", subset.len(), args.partition);
    Ok(overall)
}

pub fn cmd_predict(args: &PredictArgs, _argv: &[String]) -> Result<f64> {
    let (params, ckpt) = load_checkpoint(&args.ckpt)?;
    let circuit = load_circuit_file(&args.circuit)?;
    let backend = BackendModel::resolve(&args.backend)?;
    let bound = circuit.bind(&vec![ENCODING_ANGLE; circuit.n_params])?;
    let transpiled = transpile(&bound, &backend)?;
    let graph = graphenc::to_graph(
        &transpiled.circuit,
        &backend,
        circuit.parameterized_gate_count(),
        args.circuit.display().to_string(),
        None,
        serde_json::Value::Null,
    )?;
    let preds = predict_records(&params, &ckpt, &[graph])?;
    println!(
        "{}",
        serde_json::json!({ "circuit": args.circuit.display().to_string(), "expr_pred": preds[0] })
    );
    Ok(preds[0])
}

/// Pearson correlation; returns (r, flagged) where flagged marks a
/// zero-variance input reported as r = 0.
pub fn pearson(xs: &[f64], ys: &[f64]) -> (f64, bool) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx < 1e-24 || syy < 1e-24 {
        return (0.0, true);
    }
    (sxy / (sxx * syy).sqrt(), false)
}

/// Columns studied for correlation: the 7 global features plus the derived
/// single-qubit native gate count (RZ + SX + X).
pub fn correlation_columns(records: &[CircuitGraph]) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut names: Vec<String> = graphenc::GLOBAL_FEATURE_NAMES
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.push("n_1q_gates".into());
    let mut cols = vec![Vec::with_capacity(records.len()); names.len()];
    for rec in records {
        for (i, &v) in rec.global.iter().enumerate() {
            cols[i].push(v);
        }
        cols[7].push(rec.global[3] + rec.global[4] + rec.global[5]);
    }
    (names, cols)
}

pub fn cmd_study_correlation(args: &StudyCorrelationArgs, argv: &[String]) -> Result<()> {
    use std::io::Write;
    let started = std::time::SystemTime::now();
    let began = std::time::Instant::now();
    let records = load_labeled(&args.data)?;
    if records.len() < 100 {
        return Err(Error::validation(format!(
            "correlation study needs at least 100 labeled records, got {}",
            records.len()
        )));
    }
    let labels: Vec<f64> = records
        .iter()
        .map(|r| r.expr.ok_or_else(|| Error::validation(format!("record {} has no label", r.id))))
        .collect::<Result<_>>()?;
    let (names, cols) = correlation_columns(&records);

    let mut out = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    writeln!(out, "feature,r,zero_variance")?;
    for (name, col) in names.iter().zip(cols.iter()) {
        let (r, flagged) = pearson(col, &labels);
        writeln!(out, "{name},{r},{flagged}")?;
    }
    drop(out);

    let mut outputs: Vec<&Path> = vec![&args.out];
    if let Some(matrix_path) = &args.matrix {
        let mut all_names = names.clone();
        all_names.push("expr".into());
        let mut all_cols = cols.clone();
        all_cols.push(labels.clone());
        let mut out = std::io::BufWriter::new(std::fs::File::create(matrix_path)?);
        writeln!(out, ",{}", all_names.join(","))?;
        for (i, name) in all_names.iter().enumerate() {
            let cells: Vec<String> = all_cols
                .iter()
                .map(|col| pearson(&all_cols[i], col).0.to_string())
                .collect();
            writeln!(out, "{name},{}", cells.join(","))?;
        }
        outputs.push(matrix_path);
    }
    write_manifest("study-correlation", argv, 0, &[&args.data], &outputs, started, began)?;
    println!("wrote correlation study to {}", args.out.display());
    Ok(())
}

/// Train/val split of an explicit index pool: 7/8 train, 1/8 validation
/// (at least one validation record), mirroring the 70/10 proportions of
/// the full pipeline.
fn pool_split(pool: &[usize], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order = pool.to_vec();
    RngStream::derive(seed, &[0x9001]).shuffle(&mut order);
    let n_val = (order.len() / 8).max(1);
    let val = order[..n_val].to_vec();
    let train = order[n_val..].to_vec();
    (train, val)
}

fn stratified_take(
    records: &[CircuitGraph],
    per_stratum: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut strata: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, rec) in records.iter().enumerate() {
        strata.entry(rec.n_qubits).or_default().push(i);
    }
    let mut out = Vec::new();
    for (n, mut idx) in strata {
        if idx.len() < per_stratum {
            return Err(Error::validation(format!(
                "stratum n_qubits={n} has {} records, need {per_stratum}",
                idx.len()
            )));
        }
        RngStream::derive(seed, &[0x7A4E, n as u64]).shuffle(&mut idx);
        out.extend(&idx[..per_stratum]);
    }
    out.sort_unstable();
    Ok(out)
}

/// One training run on explicit train/val indices, evaluated on separately
/// normalized test records. Returns (test RMSE, per-qubit RMSE map).
#[allow(clippy::too_many_arguments)]
fn train_and_test(
    pool: &[CircuitGraph],
    train_idx: &[usize],
    val_idx: &[usize],
    test: &[CircuitGraph],
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<(f64, std::collections::BTreeMap<usize, f64>)> {
    let mut working = pool.to_vec();
    let stats = graphenc::normalize_dataset(&mut working, train_idx)?;
    let model_cfg = ModelConfig::default();
    let train_cfg = TrainConfig {
        epochs,
        batch_size,
        seed,
        ..TrainConfig::default()
    };
    let result = train(&working, train_idx, val_idx, &model_cfg, &train_cfg, &stats, None, None)?;

    let mut test_norm = test.to_vec();
    normalize_records(&mut test_norm, &stats);
    let refs: Vec<&CircuitGraph> = test_norm.iter().collect();
    let preds = predict(&result.best_params, &refs)?;
    let labels: Vec<f64> = test
        .iter()
        .map(|r| r.expr.ok_or_else(|| Error::validation(format!("record {} has no label", r.id))))
        .collect::<Result<_>>()?;
    let overall = rmse(&preds, &labels);
    let mut per_qubit = std::collections::BTreeMap::new();
    let mut groups: std::collections::BTreeMap<usize, (Vec<f64>, Vec<f64>)> = Default::default();
    for (i, rec) in test.iter().enumerate() {
        let entry = groups.entry(rec.n_qubits).or_default();
        entry.0.push(preds[i]);
        entry.1.push(labels[i]);
    }
    for (n, (p, l)) in groups {
        per_qubit.insert(n, rmse(&p, &l));
    }
    Ok((overall, per_qubit))
}

pub fn cmd_study_samplesize(args: &StudySamplesizeArgs, argv: &[String]) -> Result<Vec<(usize, f64)>> {
    use std::io::Write;
    let started = std::time::SystemTime::now();
    let began = std::time::Instant::now();
    let pool = load_labeled(&args.data)?;
    let test = load_labeled(&args.test_data)?;
    let sizes: Vec<usize> = args
        .sizes
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::validation(format!("bad size `{s}`")))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &size in &sizes {
        let subset = stratified_take(&pool, size, args.seed)?;
        let (train_idx, val_idx) = pool_split(&subset, args.seed ^ size as u64);
        let (test_rmse, _) = train_and_test(
            &pool,
            &train_idx,
            &val_idx,
            &test,
            args.epochs,
            args.batch_size,
            args.seed,
        )?;
        eprintln!("size {size}: test rmse {test_rmse:.5}");
        rows.push((size, test_rmse));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    writeln!(out, "train_size,rmse")?;
    for (size, r) in &rows {
        writeln!(out, "{size},{r}")?;
    }
    drop(out);
    write_manifest(
        "study-samplesize",
        argv,
        args.seed,
        &[&args.data, &args.test_data],
        &[&args.out],
        started,
        began,
    )?;
    println!("wrote sample-size study to {}", args.out.display());
    Ok(rows)
}

pub struct ExtrapolationRow {
    pub n_qubits: usize,
    pub rmse: f64,
    pub scope: &'static str,
}

pub fn cmd_study_extrapolation(
    args: &StudyExtrapolationArgs,
    argv: &[String],
) -> Result<Vec<ExtrapolationRow>> {
    use std::io::Write;
    let started = std::time::SystemTime::now();
    let began = std::time::Instant::now();
    let records = load_labeled(&args.data)?;
    let max_qubits = records.iter().map(|r| r.n_qubits).max().unwrap_or(0);
    if args.train_max_qubits >= max_qubits {
        return Err(Error::validation(format!(
            "train-max-qubits {} leaves nothing to extrapolate (dataset max is {max_qubits})",
            args.train_max_qubits
        )));
    }

    // In-range records follow the usual 70/10/20 split; the held-out 20%
    // measures interpolation. Out-of-range strata are evaluated whole.
    let in_range: Vec<CircuitGraph> = records
        .iter()
        .filter(|r| r.n_qubits <= args.train_max_qubits)
        .cloned()
        .collect();
    let split = split_dataset(&in_range, (0.7, 0.1, 0.2), args.seed)?;
    let mut test: Vec<CircuitGraph> = split.test.iter().map(|&i| in_range[i].clone()).collect();
    test.extend(
        records
            .iter()
            .filter(|r| r.n_qubits > args.train_max_qubits)
            .cloned(),
    );
    let (_, per_qubit) = train_and_test(
        &in_range,
        &split.train,
        &split.val,
        &test,
        args.epochs,
        args.batch_size,
        args.seed,
    )?;

    let mut rows = Vec::new();
    let mut out = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    writeln!(out, "n_qubits,rmse,scope")?;
    for (n, r) in per_qubit {
        let scope = if n <= args.train_max_qubits { "interpolation" } else { "extrapolation" };
        writeln!(out, "{n},{r},{scope}")?;
        rows.push(ExtrapolationRow { n_qubits: n, rmse: r, scope });
    }
    drop(out);
    write_manifest("study-extrapolation", argv, args.seed, &[&args.data], &[&args.out], started, began)?;
    println!("wrote extrapolation study to {}", args.out.display());
    Ok(rows)
}

pub fn cmd_rerun(args: &RerunArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.manifest)?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("bad manifest: {e}")))?;
    let mut argv = vec!["qexpr".to_string()];
    argv.extend(manifest.argv.iter().cloned());
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| Error::validation(format!("manifest argv does not parse: {e}")))?;
    dispatch(cli.command, &manifest.argv)
}

/// Execute one parsed command. `argv` is the raw argument list (without
/// the program name) recorded into manifests.
pub fn dispatch(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::Generate(args) => cmd_generate(&args, argv),
        Command::Expr(args) => cmd_expr(&args, argv),
        Command::Train(args) => cmd_train(&args, argv),
        Command::Eval(args) => cmd_eval(&args, argv).map(|_| ()),
        Command::Predict(args) => cmd_predict(&args, argv).map(|_| ()),
        Command::StudyCorrelation(args) => cmd_study_correlation(&args, argv),
        Command::StudySamplesize(args) => cmd_study_samplesize(&args, argv).map(|_| ()),
        Command::StudyExtrapolation(args) => cmd_study_extrapolation(&args, argv).map(|_| ()),
        Command::Rerun(args) => cmd_rerun(&args),
    }
}
