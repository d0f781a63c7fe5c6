//! Command-line entry point: training, evaluation, gradient verification,
//! synthetic data generation and learned-adjacency inspection.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 data error, 4 numerical abort.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use cheblap_core::error::Error;
use cheblap_core::graph::{
    build_laplacian, rescale_spectrum, write_adjacency, write_laplacian_dump, AdjacencyParam,
    LaplacianKind,
};
use cheblap_core::model::{load_checkpoint, save_checkpoint, LaplacianModel};
use cheblap_core::skeleton::{
    load_dataset, read_edge_list, synth_generate, write_dataset, LoadOptions, SynthSpec,
};
use cheblap_core::train::{
    evaluate, metrics_to_text, parse_config_file, train, TrainConfig,
};
use cheblap_core::{gradcheck, Result};

#[derive(Parser)]
#[command(
    name = "cheblap",
    about = "Graph convolutional networks over a trainable Laplacian in an elementwise Chebyshev basis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, metrics log and run manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Verify analytic adjacency gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic skeleton dataset.
    Synth(SynthArgs),
    /// Dump the learned adjacency and operator of a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory containing manifest.txt and edges.txt.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint.txt, metrics.log, run_manifest.txt.
    #[arg(long)]
    out: PathBuf,
    /// Override: training mode [hl|ml|tll|learned].
    #[arg(long)]
    mode: Option<String>,
    /// Override: operator parametrization [comb|ndrw|drw|ndn|dn].
    #[arg(long)]
    kind: Option<String>,
    /// Override: symmetry constraint [0|1].
    #[arg(long)]
    sym: Option<u8>,
    /// Override: orthogonality constraint [0|1].
    #[arg(long)]
    orth: Option<u8>,
    /// Override: basis order.
    #[arg(long = "K")]
    order: Option<usize>,
    /// Override: RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override: number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override: batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Override: initial learning rate.
    #[arg(long)]
    base_lr: Option<f64>,
    /// Force single-threaded execution for bitwise reproducibility.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory containing manifest.txt and edges.txt.
    #[arg(long)]
    data: PathBuf,
    /// Which split to score [train|test].
    #[arg(long, default_value = "test")]
    split: String,
    /// Temporal chunks used at preprocessing time.
    #[arg(long, default_value_t = 4)]
    chunks: usize,
    /// Reference joints as `a,b,c`.
    #[arg(long, default_value = "0,1,2")]
    ref_joints: String,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Graph size (at most 16).
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Basis order.
    #[arg(long = "K", default_value_t = 4)]
    order: usize,
    /// Comma-separated kinds, `s-` prefix for symmetric; `all` checks every
    /// parametrization.
    #[arg(long, default_value = "all")]
    kinds: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent random draws per kind.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    train_per_class: usize,
    #[arg(long, default_value_t = 50)]
    test_per_class: usize,
    #[arg(long, default_value_t = 15)]
    joints: usize,
    #[arg(long, default_value_t = 32)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.35)]
    signal_amp: f64,
    #[arg(long, default_value_t = 0.8)]
    noise_amp: f64,
    #[arg(long, default_value_t = 0.02)]
    jitter_amp: f64,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory for the adjacency and operator dumps.
    #[arg(long)]
    out: PathBuf,
    /// Known interaction graph to score the strongest learned off-skeleton
    /// edges against (edge-list file).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// How many off-skeleton edges to list.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidOrder(_) => 2,
        Error::Parse { .. }
        | Error::MissingFile(_)
        | Error::Io { .. }
        | Error::TooShort { .. }
        | Error::IndexOutOfRange { .. }
        | Error::DegenerateReference { .. }
        | Error::EmptySplit
        | Error::ShapeMismatch { .. }
        | Error::InvalidLabel { .. } => 3,
        Error::NonFinite { .. }
        | Error::NonFiniteLoss { .. }
        | Error::DivergedLoss { .. }
        | Error::NonFiniteUpdate { .. }
        | Error::DegenerateDegree { .. }
        | Error::DegenerateSpectrum { .. }
        | Error::NotSymmetric { .. }
        | Error::MismatchedBasis
        | Error::MismatchedTrace(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn parse_ref_joints(text: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "ref_joints wants three comma-separated indices, got {text:?}"
        )));
    }
    let mut out = [0usize; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| Error::Config(format!("bad reference joint {part:?}")))?;
    }
    Ok(out)
}

/// Worker cap from the environment; flags > file > defaults, env caps last.
fn apply_thread_cap(config: &mut TrainConfig) -> Result<()> {
    if let Ok(raw) = std::env::var("CHEBLAP_THREADS") {
        let cap: usize = raw
            .parse()
            .map_err(|_| Error::Config(format!("bad CHEBLAP_THREADS value {raw:?}")))?;
        if cap == 0 {
            return Err(Error::Config("CHEBLAP_THREADS must be positive".into()));
        }
        config.threads = if config.threads == 0 {
            cap
        } else {
            config.threads.min(cap)
        };
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<u8> {
    // a broken or missing config file is a configuration error, not a data one
    let mut map: BTreeMap<String, String> =
        parse_config_file(&args.config).map_err(|e| Error::Config(e.to_string()))?;
    let mut set = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            map.insert(key.to_string(), v);
        }
    };
    set("mode", args.mode);
    set("kind", args.kind);
    set("sym", args.sym.map(|v| v.to_string()));
    set("orth", args.orth.map(|v| v.to_string()));
    set("K", args.order.map(|v| v.to_string()));
    set("seed", args.seed.map(|v| v.to_string()));
    set("epochs", args.epochs.map(|v| v.to_string()));
    set("batch_size", args.batch_size.map(|v| v.to_string()));
    set("base_lr", args.base_lr.map(|v| v.to_string()));
    if args.deterministic {
        map.insert("deterministic".into(), "1".into());
    }
    let mut config = TrainConfig::from_map(&map)?;
    apply_thread_cap(&mut config)?;

    let opts = LoadOptions {
        reference: config.reference,
        chunks: config.chunks,
        normalize: true,
    };
    let dataset = load_dataset(&args.data.join("manifest.txt"), &opts)?;
    println!(
        "loaded {} train / {} test samples, {} classes, {} nodes",
        dataset.train.len(),
        dataset.test.len(),
        dataset.num_classes,
        dataset.adjacency.nrows()
    );

    let started = Instant::now();
    let (params, metrics) = train(&config, &dataset)?;
    let wall = started.elapsed().as_secs_f64();

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::Io {
            path: args.out.display().to_string(),
            source: e,
        })?;
    save_checkpoint(&args.out.join("checkpoint.txt"), &params)?;
    let metrics_path = args.out.join("metrics.log");
    std::fs::write(&metrics_path, metrics_to_text(&metrics)).map_err(|e| Error::Io {
        path: metrics_path.display().to_string(),
        source: e,
    })?;
    let mut manifest = String::new();
    for (key, value) in config.to_map() {
        manifest.push_str(&format!("{key} = {value}\n"));
    }
    manifest.push_str(&format!("wall_time_s = {wall:.3}\n"));
    let manifest_path = args.out.join("run_manifest.txt");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;

    if let Some(last) = metrics.last() {
        println!(
            "epoch {}: loss {:.6} train_acc {:.4} test_acc {:.4}",
            last.epoch, last.loss, last.train_acc, last.test_acc
        );
    }
    println!("outputs written to {}", args.out.display());
    Ok(0)
}

fn cmd_eval(args: EvalArgs) -> Result<u8> {
    let params = load_checkpoint(&args.checkpoint)?;
    let opts = LoadOptions {
        reference: parse_ref_joints(&args.ref_joints)?,
        chunks: args.chunks,
        normalize: true,
    };
    let dataset = load_dataset(&args.data.join("manifest.txt"), &opts)?;
    let split = match args.split.as_str() {
        "train" => &dataset.train,
        "test" => &dataset.test,
        other => {
            return Err(Error::Config(format!(
                "split must be train or test, got {other:?}"
            )))
        }
    };
    let report = evaluate(&params, split)?;
    println!(
        "class_averaged_accuracy = {:.6}",
        report.class_averaged_accuracy
    );
    println!("sample_accuracy = {:.6}", report.sample_accuracy);
    for (class, (correct, total)) in report.per_class.iter().enumerate() {
        if *total > 0 {
            println!(
                "class {class}: {correct}/{total} = {:.4}",
                *correct as f64 / *total as f64
            );
        }
    }
    println!("confusion (rows = truth, cols = prediction):");
    for row in report.confusion.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        println!("  {}", line.join(" "));
    }
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<u8> {
    if args.n == 0 || args.n > 16 {
        return Err(Error::Config(format!(
            "n must be between 1 and 16, got {}",
            args.n
        )));
    }
    if args.order == 0 {
        return Err(Error::InvalidOrder(args.order));
    }
    let kinds: Vec<LaplacianKind> = if args.kinds == "all" {
        LaplacianKind::all()
    } else {
        args.kinds
            .split(',')
            .map(|s| {
                LaplacianKind::parse(s.trim())
                    .ok_or_else(|| Error::Config(format!("unknown kind {s:?}")))
            })
            .collect::<Result<_>>()?
    };
    // negative-control hook used by the test suite
    let corrupt = std::env::var("CHEBLAP_CORRUPT_JACOBIAN").is_ok_and(|v| v == "1");
    let reports = gradcheck::run_checks(&kinds, args.n, args.order, args.seeds, args.seed, corrupt)?;
    print!("{}", gradcheck::format_report(&reports, gradcheck::DEFAULT_THRESHOLD));
    if reports
        .iter()
        .all(|r| r.passed(gradcheck::DEFAULT_THRESHOLD))
    {
        println!("gradcheck: PASS");
        Ok(0)
    } else {
        println!("gradcheck: FAIL");
        Ok(1)
    }
}

fn cmd_synth(args: SynthArgs) -> Result<u8> {
    let spec = SynthSpec {
        classes: args.classes,
        train_per_class: args.train_per_class,
        test_per_class: args.test_per_class,
        joints: args.joints,
        frames: args.frames,
        seed: args.seed,
        signal_amp: args.signal_amp,
        noise_amp: args.noise_amp,
        jitter_amp: args.jitter_amp,
    };
    let synth = synth_generate(&spec);
    let manifest = write_dataset(&args.out, &synth)?;
    println!(
        "wrote {} sequences ({} classes, {} joints, {} frames) to {}",
        synth.sequences.len(),
        spec.classes,
        spec.joints,
        spec.frames,
        args.out.display()
    );
    println!("manifest: {}", manifest.display());
    println!(
        "skeleton edges: {}, hidden interaction edges: {}",
        synth.skeleton_edges.len(),
        synth.hidden_edges.len()
    );
    Ok(0)
}

fn cmd_inspect(args: InspectArgs) -> Result<u8> {
    let params = load_checkpoint(&args.checkpoint)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.display().to_string(),
        source: e,
    })?;
    let kind = params.config.kind;
    let dump_operator = |a: &AdjacencyParam, path: &Path| -> Result<()> {
        let raw = build_laplacian(a, kind, false)?;
        let op = if params.config.rescale {
            rescale_spectrum(&raw)?
        } else {
            raw
        };
        write_laplacian_dump(path, &op)
    };

    match &params.laplacian {
        LaplacianModel::Fixed(a) | LaplacianModel::Learned(a) => {
            write_adjacency(&args.out.join("learned_adjacency.txt"), a.values())?;
            dump_operator(a, &args.out.join("laplacian.txt"))?;

            // undirected edge strengths absent from the handcrafted graph
            let eff = a.effective(kind);
            let n = eff.nrows();
            let mut off: Vec<(usize, usize, f64)> = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if params.handcrafted[[i, j]] == 0.0 && params.handcrafted[[j, i]] == 0.0 {
                        let w = 0.5 * (eff[[i, j]] + eff[[j, i]]);
                        if w > 1e-12 {
                            off.push((i, j, w));
                        }
                    }
                }
            }
            off.sort_by(|a, b| b.2.partial_cmp(&a.2).expect("finite weights"));
            let mut text = String::new();
            for &(i, j, w) in &off {
                text.push_str(&format!("{i} {j} {w}\n"));
            }
            let off_path = args.out.join("off_skeleton_edges.txt");
            std::fs::write(&off_path, text).map_err(|e| Error::Io {
                path: off_path.display().to_string(),
                source: e,
            })?;
            println!("off-skeleton edges found: {}", off.len());
            for &(i, j, w) in off.iter().take(args.top) {
                println!("  {i} -- {j}  weight {w:.6}");
            }

            if let Some(truth_path) = &args.truth {
                let truth = read_edge_list(truth_path)?;
                let normalize = |(u, v): (usize, usize)| if u <= v { (u, v) } else { (v, u) };
                let truth_set: std::collections::BTreeSet<(usize, usize)> =
                    truth.iter().map(|&e| normalize(e)).collect();
                let hits = off
                    .iter()
                    .take(truth_set.len())
                    .filter(|&&(i, j, _)| truth_set.contains(&(i, j)))
                    .count();
                println!(
                    "hit_rate = {hits}/{} ({:.1}%)",
                    truth_set.len(),
                    100.0 * hits as f64 / truth_set.len().max(1) as f64
                );
            }
        }
        LaplacianModel::Mixture(logits) => {
            let weights = cheblap_core::model::softmax(logits);
            println!("mixture weights over plain operator kinds:");
            for (base, w) in cheblap_core::graph::BaseKind::ALL.iter().zip(weights.iter()) {
                println!("  {:<5} {w:.6}", base.label());
            }
            let hand = AdjacencyParam::new(params.handcrafted.clone())?;
            write_adjacency(&args.out.join("learned_adjacency.txt"), hand.values())?;
        }
        LaplacianModel::Independent(list) => {
            for (k, a) in list.iter().enumerate() {
                write_adjacency(&args.out.join(format!("learned_adjacency_{k}.txt")), a.values())?;
                dump_operator(a, &args.out.join(format!("laplacian_{k}.txt")))?;
            }
            println!("wrote {} independent operators", list.len());
        }
    }
    println!("inspection written to {}", args.out.display());
    Ok(0)
}
