use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ddsgnn_core::config::{Ablation, ConfigError, KPolicy, ModelConfig};
use ddsgnn_core::data::{
    find_manifest, load_dataset, persist_report, read_predictions, write_json, write_predictions, write_rows_csv,
    DataError, IdMap, PredictionRow,
};
use ddsgnn_core::experiment::{self, summarize, SummaryRow, DEFAULT_SWEEP_K};
use ddsgnn_core::losses::LossError;
use ddsgnn_core::metrics::{EvalReport, ReportMeta};
use ddsgnn_core::model::Checkpoint;
use ddsgnn_core::synthetic::{generate, SyntheticConfig};
use ddsgnn_core::train::{self, RunContext, RunError};
use ddsgnn_core::{GraphError, SignedGraph};

#[derive(Parser)]
#[command(name = "ddsgnn", version, about = "Degree-debiased signed GNN experiments")]
struct Cli {
    /// Log per-epoch losses (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one model per seed and evaluate it on the test split.
    Train(RunArgs),
    /// Re-evaluate a checkpoint, optionally under another K policy.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Full model and the three single-component ablations.
    Ablate(RunArgs),
    /// Train and evaluate with K fixed to each value.
    SweepK {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated K values.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_K.to_vec())]
        k: Vec<f64>,
    },
    /// Group accuracies of a predictions file (source,target,sign) on the
    /// test split of the given seed. No training.
    Audit {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Parse a dataset and compare its counts with the known statistics.
    Ingest(RunArgs),
    /// Write a synthetic heavy-tailed signed graph as a bitcoin-csv file.
    Synth {
        #[arg(long, default_value_t = 3783)]
        nodes: usize,
        #[arg(long, default_value_t = 14000)]
        edges: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML model config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset name, or `synthetic` / `synthetic:NODES:EDGES` for a generated graph.
    #[arg(long)]
    dataset: Option<String>,
    /// Edge-list file (plain or gzip).
    #[arg(long)]
    data: Option<PathBuf>,
    /// bitcoin-csv, wikirfa or slashdot.
    #[arg(long)]
    format: Option<String>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed range N..M (end exclusive).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// mean, fixed:K or pct:T:B.
    #[arg(long)]
    k_policy: Option<String>,
    /// full, no-translation, no-head-constraint or no-localization.
    #[arg(long, conflicts_with = "no_plugin")]
    ablation: Option<String>,
    /// Train the plain signed GCN baseline.
    #[arg(long)]
    no_plugin: bool,
    #[arg(long)]
    epochs: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> Result<ModelConfig> {
        let mut cfg = match &self.config {
            Some(p) => ModelConfig::load(p)?,
            None => ModelConfig::default(),
        };
        self.overlay(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn overlay(&self, cfg: &mut ModelConfig) -> Result<()> {
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if let Some(p) = &self.data {
            cfg.data_path = Some(p.clone());
        }
        if let Some(f) = &self.format {
            cfg.format = Some(f.parse().map_err(|_| ConfigError::Invalid(format!("unknown format `{f}`")))?);
        }
        if let Some(k) = &self.k_policy {
            cfg.k_policy = k.parse::<KPolicy>()?;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = &self.ablation {
            *cfg = cfg.with_ablation(a.parse::<Ablation>()?);
        }
        if self.no_plugin {
            *cfg = cfg.baseline();
        }
        Ok(())
    }

    fn seeds(&self, cfg: &ModelConfig) -> Result<Vec<u64>> {
        Ok(match (&self.seeds, self.seed) {
            (Some(r), _) => experiment::parse_seeds(r)?,
            (None, Some(s)) => vec![s],
            (None, None) => vec![cfg.seed],
        })
    }
}

struct Dataset {
    name: String,
    graph: SignedGraph,
    id_map: Option<IdMap>,
}

fn parse_synthetic(name: &str) -> Result<Option<SyntheticConfig>> {
    let mut parts = name.split(':');
    if parts.next() != Some("synthetic") {
        return Ok(None);
    }
    let rest: Vec<&str> = parts.collect();
    Ok(Some(match rest.as_slice() {
        [] => SyntheticConfig::bitcoin_alpha_like(0),
        [n, e] => SyntheticConfig::small(
            n.parse().map_err(|_| ConfigError::Invalid(format!("bad node count in `{name}`")))?,
            e.parse().map_err(|_| ConfigError::Invalid(format!("bad edge count in `{name}`")))?,
            0,
        ),
        _ => bail!(ConfigError::Invalid(format!("expected synthetic or synthetic:NODES:EDGES, got `{name}`"))),
    }))
}

fn load_graph(cfg: &ModelConfig) -> Result<Dataset> {
    if let Some(sc) = parse_synthetic(&cfg.dataset)? {
        return Ok(Dataset {
            name: cfg.dataset.clone(),
            graph: generate(&sc).map_err(DataError::from)?,
            id_map: None,
        });
    }
    let path = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid(format!("no data path for dataset `{}` (use --data)", cfg.dataset)))?;
    let d = load_dataset(&cfg.dataset, path, cfg.edge_format()?, cfg.conflict_policy)?;
    log::info!(
        "{}: {} nodes, {} edges ({} positive)",
        d.name,
        d.stats.nodes,
        d.stats.edges(),
        d.stats.pos_edges
    );
    Ok(Dataset {
        name: d.name,
        graph: d.graph,
        id_map: Some(d.id_map),
    })
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn run_dir(out: &Path, cfg: &ModelConfig, seed: u64) -> PathBuf {
    out.join(cfg.variant()).join(format!("seed-{seed}"))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn print_summary(row: &SummaryRow) {
    let pm = |m: Option<f64>, s: Option<f64>| match (m, s) {
        (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
        (m, _) => fmt_opt(m),
    };
    println!(
        "{:<28} runs={} auc={} f1={} delta_dsp={}",
        row.key,
        row.runs,
        pm(row.auc, row.auc_std),
        pm(row.f1, row.f1_std),
        pm(row.delta_dsp, row.delta_dsp_std)
    );
}

/// Trains every seed, writing per-run artifacts under `out`.
fn train_seeds(ds: &Dataset, cfg: &ModelConfig, seeds: &[u64], out: &Path) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let run = experiment::run_seed(&ds.graph, &ds.name, cfg, seed)?;
        let dir = run_dir(out, cfg, seed);
        ensure_dir(&dir)?;
        write_json(&train::checkpoint(&run.trained), &dir.join("checkpoint.json"))?;
        write_rows_csv(&run.trained.log, &dir.join("log.csv"))?;
        let preds = train::predict_test(&run.trained, &run.ctx)?;
        write_predictions(
            &experiment::prediction_rows(&run.ctx, ds.id_map.as_ref(), &preds),
            &dir.join("predictions.csv"),
        )?;
        persist_report(&run.report, &dir.join("report.json"), Some(&out.join("reports.csv")))?;
        println!(
            "{} seed {seed}: auc={} f1={:.4} delta_dsp={}",
            cfg.variant(),
            fmt_opt(run.report.auc),
            run.report.f1,
            fmt_opt(run.report.delta_dsp)
        );
        reports.push(run.report);
    }
    Ok(reports)
}

fn prepare_out(args: &RunArgs, ds: &Dataset) -> Result<()> {
    ensure_dir(&args.out)?;
    if let Some(m) = &ds.id_map {
        m.save(&args.out.join("id_map.json"))?;
    }
    Ok(())
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let seeds = args.seeds(&cfg)?;
    let ds = load_graph(&cfg)?;
    prepare_out(args, &ds)?;
    let reports = train_seeds(&ds, &cfg, &seeds, &args.out)?;
    print_summary(&summarize(cfg.variant(), &reports));
    Ok(())
}

fn cmd_eval(args: &RunArgs, checkpoint: &Path) -> Result<()> {
    let text = std::fs::read_to_string(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let ck: Checkpoint<ModelConfig> = serde_json::from_str(&text).map_err(DataError::from)?;
    let mut cfg = match &args.config {
        Some(p) => ModelConfig::load(p)?,
        None => ck.config.clone(),
    };
    // Only the grouping and data location may change at evaluation time.
    let eval_args = RunArgs {
        ablation: None,
        no_plugin: false,
        epochs: None,
        ..args.clone()
    };
    eval_args.overlay(&mut cfg)?;
    cfg.validate()?;
    let trained = train::restore(&ck, &cfg)?;
    let ds = load_graph(&cfg)?;
    let ctx = RunContext::prepare(&ds.graph, &cfg, cfg.seed)?;
    let partition = ctx.partition_for(&cfg.k_policy)?;
    let report = train::evaluate(&trained, &ctx, &ds.name, &cfg.k_policy, &partition)?;
    prepare_out(args, &ds)?;
    persist_report(&report, &args.out.join("report.json"), Some(&args.out.join("reports.csv")))?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(DataError::from)?);
    Ok(())
}

fn cmd_ablate(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let seeds = args.seeds(&cfg)?;
    let ds = load_graph(&cfg)?;
    prepare_out(args, &ds)?;
    let mut rows = Vec::new();
    for variant in Ablation::ALL {
        let c = cfg.with_ablation(variant);
        let reports = train_seeds(&ds, &c, &seeds, &args.out)?;
        rows.push(summarize(variant.name(), &reports));
    }
    write_rows_csv(&rows, &args.out.join("ablation.csv"))?;
    rows.iter().for_each(print_summary);
    Ok(())
}

fn cmd_sweep_k(args: &RunArgs, ks: &[f64]) -> Result<()> {
    if ks.is_empty() {
        bail!(ConfigError::Invalid("--k needs at least one value".into()));
    }
    let cfg = args.config()?;
    let seeds = args.seeds(&cfg)?;
    let ds = load_graph(&cfg)?;
    prepare_out(args, &ds)?;
    let mut ks = ks.to_vec();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    let mut rows = Vec::new();
    for k in ks {
        let c = ModelConfig {
            k_policy: KPolicy::Fixed(k),
            ..cfg.clone()
        };
        let reports = train_seeds(&ds, &c, &seeds, &args.out.join(format!("k-{k}")))?;
        rows.push(summarize(k.to_string(), &reports));
    }
    write_rows_csv(&rows, &args.out.join("sweep_k.csv"))?;
    rows.iter().for_each(print_summary);
    Ok(())
}

fn cmd_audit(args: &RunArgs, predictions: &Path) -> Result<()> {
    let cfg = args.config()?;
    let ds = load_graph(&cfg)?;
    let rows: Vec<PredictionRow> = read_predictions(predictions)?;
    let ctx = RunContext::prepare(&ds.graph, &cfg, cfg.seed)?;
    let meta = ReportMeta {
        dataset: ds.name.clone(),
        seed: cfg.seed,
        k_policy: String::new(),
        k_value: None,
        model: "external".into(),
        epochs: 0,
        mu: 0.0,
        eta: 0.0,
        f1_variant: cfg.f1_variant,
    };
    let report = experiment::audit(&ctx, ds.id_map.as_ref(), &rows, &cfg.k_policy, meta)?;
    ensure_dir(&args.out)?;
    persist_report(&report, &args.out.join("audit.json"), None)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(DataError::from)?);
    Ok(())
}

fn cmd_ingest(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let path = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("ingest needs --data".into()))?;
    let d = load_dataset(&cfg.dataset, path, cfg.edge_format()?, cfg.conflict_policy)?;
    ensure_dir(&args.out)?;
    d.id_map.save(&args.out.join("id_map.json"))?;
    write_json(&d.stats, &args.out.join("ingest.json"))?;
    println!("{}", serde_json::to_string_pretty(&d.stats).map_err(DataError::from)?);
    if let Some(m) = find_manifest(&cfg.dataset) {
        let check = m.check(&d.stats);
        println!("manifest check for {}: {}", m.name, if check.passes() { "ok" } else { "DEVIATES" });
        for w in check.warnings() {
            println!("  {w}");
        }
    }
    Ok(())
}

fn cmd_synth(nodes: usize, edges: usize, seed: u64, output: &Path) -> Result<()> {
    let g = generate(&SyntheticConfig::small(nodes, edges, seed)).map_err(DataError::from)?;
    let mut text = String::with_capacity(g.edge_count() * 16);
    for (i, e) in g.edges().iter().enumerate() {
        text.push_str(&format!("{},{},{},{}\n", e.u, e.v, e.sign.as_i8(), i));
    }
    std::fs::write(output, text).with_context(|| format!("writing {}", output.display()))?;
    println!("wrote {} edges over {} nodes to {}", g.edge_count(), g.node_count(), output.display());
    Ok(())
}

/// 2 config, 3 data, 4 numerical failure, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<RunError>() {
            return match e {
                _ if e.is_numerical() => 4,
                RunError::Config(_) | RunError::DimMismatch(_) | RunError::Loss(LossError::InvalidConfig(_)) => 2,
                RunError::Data(_) | RunError::Graph(_) | RunError::UnmatchedEdges(..) | RunError::Io(_) => 3,
                RunError::Loss(LossError::EmptyTrainSet) => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<DataError>().is_some() || cause.downcast_ref::<GraphError>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval { run, checkpoint } => cmd_eval(run, checkpoint),
        Cmd::Ablate(a) => cmd_ablate(a),
        Cmd::SweepK { run, k } => cmd_sweep_k(run, k),
        Cmd::Audit { run, predictions } => cmd_audit(run, predictions),
        Cmd::Ingest(a) => cmd_ingest(a),
        Cmd::Synth {
            nodes,
            edges,
            seed,
            output,
        } => cmd_synth(*nodes, *edges, *seed, output),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
