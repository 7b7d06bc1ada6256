//! `gctd` — condense a graph through tensor decomposition and evaluate the
//! result with a small GNN.
//!
//! Subcommands: `condense`, `evaluate`, `stats`, `grid`, `export-dot`.
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
//! failure. `THREADS` caps the worker pool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gctd_core::condense::{export_dot, read_condensed, write_condensed, CondensedGraph};
use gctd_core::config::{GridSpec, RunConfig};
use gctd_core::decompose::{write_checkpoint, write_loss_csv};
use gctd_core::error::{Error, Result};
use gctd_core::eval::{write_epoch_csv, write_report};
use gctd_core::graph::{Graph, GraphStats};
use gctd_core::pipeline::{evaluate_condensed, evaluate_full, run_grid};

#[derive(Parser)]
#[command(
    name = "gctd",
    about = "Graph condensation via nonnegative multi-view tensor decomposition",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Condense a dataset into a small synthetic graph.
    Condense(CondenseArgs),
    /// Train a GNN on a condensed graph and test it on the original.
    Evaluate(EvaluateArgs),
    /// Print node/edge/sparsity/storage statistics for a dataset directory
    /// or a condensed-graph file.
    Stats(StatsArgs),
    /// Exhaustive hyperparameter search: condense + evaluate per combination.
    Grid(GridArgs),
    /// Export a condensed graph as Graphviz DOT (node color = class).
    ExportDot(ExportDotArgs),
}

#[derive(Args, Clone)]
struct ConfigFlags {
    /// JSON config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory (meta.json, edges.tsv, features.tsv, labels.tsv, splits.tsv).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Condensation ratio r in (0, 1).
    #[arg(long)]
    ratio: Option<f64>,
    /// Number of augmented views K (total slices K+1).
    #[arg(long)]
    views: Option<usize>,
    /// Edge drop probability.
    #[arg(long)]
    pr: Option<f64>,
    /// Edge add probability.
    #[arg(long)]
    pa: Option<f64>,
    /// Master seed; every stage derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation runs to aggregate.
    #[arg(long)]
    runs: Option<usize>,
    /// Evaluation model registry name.
    #[arg(long)]
    model: Option<String>,
    /// Node assignment strategy registry name.
    #[arg(long)]
    assign: Option<String>,
    /// Zero condensed edge weights strictly below this value.
    #[arg(long)]
    edge_threshold: Option<f64>,
    /// Require a seed and keep every stage single-stream reproducible.
    #[arg(long)]
    deterministic: bool,
    /// Accept hyperparameters outside the published tuning grids.
    #[arg(long)]
    allow_off_grid: bool,
    #[arg(long)]
    dec_lr: Option<f64>,
    #[arg(long)]
    dec_wd: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dec_epochs: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    eval_lr: Option<f64>,
    #[arg(long)]
    eval_wd: Option<f64>,
    #[arg(long)]
    eval_epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Number of K-Means iterations.
    #[arg(long)]
    kmeans_iters: Option<usize>,
    /// Skip feature row normalization in the evaluation stage.
    #[arg(long)]
    no_feature_norm: bool,
}

impl ConfigFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = self.ratio {
            cfg.ratio = v;
        }
        if let Some(v) = self.views {
            cfg.views = v;
        }
        if let Some(v) = self.pr {
            cfg.drop_prob = v;
        }
        if let Some(v) = self.pa {
            cfg.add_prob = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = Some(v);
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = &self.model {
            cfg.model = v.clone();
        }
        if let Some(v) = &self.assign {
            cfg.assign = v.clone();
        }
        if let Some(v) = self.edge_threshold {
            cfg.edge_threshold = Some(v);
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        if self.allow_off_grid {
            cfg.allow_off_grid = true;
        }
        if let Some(v) = self.dec_lr {
            cfg.dec_learning_rate = v;
        }
        if let Some(v) = self.dec_wd {
            cfg.dec_weight_decay = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.dec_epochs {
            cfg.dec_epochs = v;
        }
        if let Some(v) = self.tolerance {
            cfg.tolerance = v;
        }
        if let Some(v) = self.eval_lr {
            cfg.eval_learning_rate = v;
        }
        if let Some(v) = self.eval_wd {
            cfg.eval_weight_decay = v;
        }
        if let Some(v) = self.eval_epochs {
            cfg.eval_epochs = v;
        }
        if let Some(v) = self.hidden {
            cfg.hidden = v;
        }
        if let Some(v) = self.kmeans_iters {
            cfg.kmeans_iters = v;
        }
        if self.no_feature_norm {
            cfg.feature_norm = false;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct CondenseArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Output directory (defaults to the config's out_dir, then gctd-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse/populate a binary tensor cache keyed by (dataset hash, views,
    /// probabilities, seed); stale caches are rebuilt.
    #[arg(long)]
    tensor_cache: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Condensed-graph JSON produced by `condense`, or `full` to evaluate
    /// the original dataset itself.
    #[arg(long)]
    condensed: Option<PathBuf>,
    /// Evaluate the full dataset (baseline) instead of a condensed graph.
    #[arg(long, conflicts_with = "condensed")]
    full: bool,
    #[command(flatten)]
    flags: ConfigFlags,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-epoch train/val losses as CSV.
    #[arg(long)]
    epoch_csv: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Dataset directory or condensed-graph JSON file.
    path: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// Grid specification JSON (lists of candidate values per knob).
    #[arg(long)]
    grid: PathBuf,
    #[command(flatten)]
    flags: ConfigFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportDotArgs {
    /// Condensed-graph JSON file.
    #[arg(long)]
    condensed: PathBuf,
    /// Output DOT path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version output is not an error
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    init_thread_pool();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn init_thread_pool() {
    if let Ok(threads) = std::env::var("THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Condense(args) => cmd_condense(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Grid(args) => cmd_grid(args),
        Command::ExportDot(args) => cmd_export_dot(args),
    }
}

fn require_dataset(cfg: &RunConfig) -> Result<&Path> {
    cfg.dataset
        .as_deref()
        .ok_or_else(|| Error::config("no dataset given (use --dataset or the config file)"))
}


fn resolve_out(flag: &Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("gctd-out"))
}

fn resolve_seed(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or_else(gctd_core::seed::entropy_seed)
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

/// Attach the config hash to an error (the pipeline already names the
/// failing module).
fn with_hash(err: Error, cfg_hash: u64) -> Error {
    let tag = format!("(config {cfg_hash:016x})");
    match err {
        Error::Config(m) => Error::Config(format!("{tag} {m}")),
        Error::Data(m) => Error::Data(format!("{tag} {m}")),
        Error::DataAt { path, line, msg } => Error::DataAt {
            path,
            line,
            msg: format!("{tag} {msg}"),
        },
        Error::Numerical(m) => Error::Numerical(format!("{tag} {m}")),
        e @ Error::Io { .. } => e,
    }
}

fn stats_row(s: &GraphStats) -> String {
    format!(
        "{:<12} {:>10} {:>10} {:>10} {:>12}",
        "",
        s.num_nodes,
        s.num_edges,
        format!("{:.2}%", s.sparsity),
        human_bytes(s.storage_bytes)
    )
}

fn stats_table(name: &str, s: &GraphStats) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>10} {:>10} {:>10} {:>12}\n",
        "", "nodes", "edges", "sparsity", "storage"
    ));
    out.push_str(&format!("{:<12}{}", name, &stats_row(s)[12..]));
    out
}

fn human_bytes(b: u64) -> String {
    if b >= 1_048_576 {
        format!("{:.2} MB", b as f64 / 1_048_576.0)
    } else if b >= 1024 {
        format!("{:.2} KB", b as f64 / 1024.0)
    } else {
        format!("{b} B")
    }
}

fn git_ref() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn cmd_condense(args: CondenseArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    print_warnings(&cfg.validate()?);
    let dataset = require_dataset(&cfg)?;
    let seed = resolve_seed(&cfg);
    let cfg_hash = cfg.hash(seed);

    let out_dir = resolve_out(&args.out, &cfg);
    let g = Graph::load(dataset)
        .map_err(|e| with_hash(e.in_module("graph-model"), cfg_hash))?;
    print_warnings(&gctd_core::pipeline::condense_warnings(&g, &cfg));
    let out = gctd_core::pipeline::condense_graph_cached(
        &g,
        &cfg,
        seed,
        args.tensor_cache.as_deref(),
        |_, _, _| {},
    )
    .map_err(|e| with_hash(e, cfg_hash))?;

    ensure_dir(&out_dir)?;
    let resolved = cfg.resolved_value(seed);
    let condensed_path = out_dir.join("condensed.json");
    write_condensed(&condensed_path, &out.condensed, resolved.clone(), seed)?;
    write_checkpoint(out_dir.join("checkpoint.bin"), &out.decomposition)?;
    write_loss_csv(out_dir.join("loss.csv"), out.decomposition.loss_history())?;
    fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(&resolved).expect("config serializes"),
    )
    .map_err(|e| Error::io(out_dir.join("config.json"), e))?;

    let hist = out.decomposition.loss_history();
    println!(
        "condensed {} nodes -> {} synthetic nodes in {} epochs (final loss {:.3e}, seed {seed})",
        out.base_nodes,
        out.n_prime,
        hist.len(),
        hist.last().copied().unwrap_or(f64::NAN),
    );
    println!("{}", stats_table("condensed", &out.condensed.stats()));
    println!("wrote {}", condensed_path.display());
    Ok(())
}

fn load_condensed(path: &Path) -> Result<(CondensedGraph, serde_json::Value, u64)> {
    read_condensed(path)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let mut cfg = args.flags.resolve()?;
    let dataset = require_dataset(&cfg)?.to_path_buf();
    let g = Graph::load(&dataset)?;

    let out_dir = resolve_out(&args.out, &cfg);
    ensure_dir(&out_dir)?;
    let report = if args.full {
        print_warnings(&cfg.validate()?);
        let seed = resolve_seed(&cfg);
        let cfg_hash = cfg.hash(seed);
        let report = evaluate_full(&g, &cfg, seed)
            .map_err(|e| with_hash(e.in_module("gnn-eval"), cfg_hash))?;
        write_report(
            out_dir.join("report.json"),
            &report,
            cfg.resolved_value(seed),
            seed,
            &git_ref(),
        )?;
        report
    } else {
        let condensed_path = args.condensed.as_deref().ok_or_else(|| {
            Error::config("evaluate needs --condensed FILE (or --full for the baseline)")
        })?;
        let (cg, _cfg_embedded, condense_seed) = load_condensed(condensed_path)?;
        // default to the seed the condensed graph was produced with
        if cfg.seed.is_none() {
            cfg.seed = Some(condense_seed);
        }
        print_warnings(&cfg.validate()?);
        let seed = resolve_seed(&cfg);
        let cfg_hash = cfg.hash(seed);
        let report = evaluate_condensed(&cg, &g, &cfg, seed)
            .map_err(|e| with_hash(e.in_module("gnn-eval"), cfg_hash))?;
        write_report(
            out_dir.join("report.json"),
            &report,
            cfg.resolved_value(seed),
            seed,
            &git_ref(),
        )?;
        report
    };
    if args.epoch_csv {
        write_epoch_csv(out_dir.join("epochs.csv"), &report)?;
    }
    println!(
        "{}: test accuracy {:.2} ± {:.2} over {} runs (val {:.2}, {:.1}s)",
        report.model,
        report.mean,
        report.std,
        report.runs.len(),
        report.val_mean,
        report.wall_time_s
    );
    println!("wrote {}", out_dir.join("report.json").display());
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let path = &args.path;
    if path.is_dir() {
        let g = Graph::load(path)?;
        println!("{}", stats_table("dataset", &g.stats()));
        Ok(())
    } else if path.is_file() {
        let (cg, _, _) = read_condensed(path)?;
        println!("{}", stats_table("condensed", &cg.stats()));
        Ok(())
    } else {
        Err(Error::data(format!(
            "{}: not a dataset directory or condensed-graph file",
            path.display()
        )))
    }
}

fn cmd_grid(args: GridArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    print_warnings(&cfg.validate()?);
    let dataset = require_dataset(&cfg)?;
    let grid_text = fs::read_to_string(&args.grid).map_err(|e| Error::io(&args.grid, e))?;
    let grid: GridSpec = serde_json::from_str(&grid_text)
        .map_err(|e| Error::config(format!("{}: {e}", args.grid.display())))?;
    grid.validate(cfg.allow_off_grid)?;

    let combos = grid.combinations(&cfg);
    println!("grid: {} combinations", combos.len());
    let g = Graph::load(dataset)?;
    for combo in &combos {
        for w in gctd_core::pipeline::condense_warnings(&g, combo) {
            eprintln!("warning: {w}");
        }
    }
    let seed = resolve_seed(&cfg);

    let out_dir = resolve_out(&args.out, &cfg);
    ensure_dir(&out_dir)?;
    let leaderboard = out_dir.join("leaderboard.csv");
    let header = "index,views,drop_prob,add_prob,dec_lr,dec_wd,eval_lr,eval_wd,n_prime,final_loss,val_acc_mean,test_acc_mean,test_acc_std\n";
    fs::write(&leaderboard, header).map_err(|e| Error::io(&leaderboard, e))?;

    // flushed row by row so an interrupted search leaves the finished rows
    let results = run_grid(&g, &combos, seed, |r| {
        let row = format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.index,
            r.config.views,
            r.config.drop_prob,
            r.config.add_prob,
            r.config.dec_learning_rate,
            r.config.dec_weight_decay,
            r.config.eval_learning_rate,
            r.config.eval_weight_decay,
            r.n_prime,
            r.final_loss,
            r.val_mean,
            r.test_mean,
            r.test_std
        );
        let _ = fs::OpenOptions::new()
            .append(true)
            .open(&leaderboard)
            .and_then(|mut f| {
                use std::io::Write;
                f.write_all(row.as_bytes())
            });
        println!(
            "combo {:>3}/{}: val {:.2} test {:.2} ± {:.2}",
            r.index + 1,
            combos.len(),
            r.val_mean,
            r.test_mean,
            r.test_std
        );
    })?;

    // final leaderboard, ranked by validation accuracy
    let mut ranked = String::from("rank,");
    ranked.push_str(header);
    for (rank, r) in results.iter().enumerate() {
        ranked.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            rank + 1,
            r.index,
            r.config.views,
            r.config.drop_prob,
            r.config.add_prob,
            r.config.dec_learning_rate,
            r.config.dec_weight_decay,
            r.config.eval_learning_rate,
            r.config.eval_weight_decay,
            r.n_prime,
            r.final_loss,
            r.val_mean,
            r.test_mean,
            r.test_std
        ));
    }
    fs::write(&leaderboard, ranked).map_err(|e| Error::io(&leaderboard, e))?;

    let best = &results[0];
    fs::write(
        out_dir.join("best_config.json"),
        serde_json::to_string_pretty(&best.config.resolved(seed)).expect("config serializes"),
    )
    .map_err(|e| Error::io(out_dir.join("best_config.json"), e))?;
    println!(
        "best: val {:.2}, test {:.2} ± {:.2} -> {}",
        best.val_mean,
        best.test_mean,
        best.test_std,
        out_dir.join("best_config.json").display()
    );
    Ok(())
}

fn cmd_export_dot(args: ExportDotArgs) -> Result<()> {
    let (cg, _, _) = read_condensed(&args.condensed)?;
    let dot = export_dot(&cg);
    match &args.out {
        Some(path) => {
            fs::write(path, dot).map_err(|e| Error::io(path, e))?;
            println!("wrote {}", path.display());
        }
        None => print!("{dot}"),
    }
    Ok(())
}
