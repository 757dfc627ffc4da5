//! Batch driver: dataset generation, graph building, training, localization,
//! planning, ablation sweeps and reports.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use semgraph::benchmark::{frame_graphs, Benchmark, FrameSpec};
use semgraph::dataset::{
    load_sequence, render_label_map, save_sequence, SequenceManifest, World,
    MANIFEST_SCHEMA_VERSION,
};
use semgraph::experiment::{
    ablation_csv, bit_cost_report, evaluate_cell, parse_ablation_csv, plan_csv, plan_study,
    prepare, run_ablation, summarize, summary_csv, train_gcn, ClassifierKind, DatasetPaths,
    ExperimentConfig, REPORT_SCHEMA_VERSION,
};
use semgraph::gcn::{save_model, ModelMeta, PARAMS_SCHEMA_VERSION};
use semgraph::planner::{curve_to_csv, QSTORE_SCHEMA_VERSION};
use semgraph::scene_graph::build_scene_graph;

#[derive(Parser, Debug)]
#[command(name = "semgraph", disable_version_flag = true)]
#[command(about = "Semantic scene graph place recognition experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,

    /// Print the crate version and the schema versions of every file format.
    #[arg(long, short = 'V')]
    version: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON experiment configuration; defaults apply to omitted fields.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out` in the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic benchmark splits to sequence directories.
    Generate,
    /// Build scene graphs for a sequence directory, or the benchmark test split.
    Graphs {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train the configured GCN and save its weights.
    Train,
    /// Classify and filter every query sequence; writes metrics and traces.
    Localize,
    /// Train the viewpoint planner and compare it with fixed steps.
    Plan,
    /// Run the ablation cross product over the configured seeds.
    Ablate,
    /// Summarize an ablation CSV per cell.
    Report {
        /// Defaults to `<out>/ablation.csv`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn version_text() -> String {
    format!(
        "semgraph {}\nparams schema {PARAMS_SCHEMA_VERSION}\nqstore schema {QSTORE_SCHEMA_VERSION}\n\
         manifest schema {MANIFEST_SCHEMA_VERSION}\nreport schema {REPORT_SCHEMA_VERSION}",
        env!("CARGO_PKG_VERSION")
    )
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_json_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config = config.seeded(seed);
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

/// Records the resolved configuration, its hash and the command next to the outputs.
fn write_run_record(config: &ExperimentConfig, command: &str) -> Result<()> {
    write_json(
        &config.out.join(format!("{command}.run.json")),
        &json!({
            "schema_version": REPORT_SCHEMA_VERSION,
            "command": command,
            "seed": config.seed,
            "config_hash": config.hash(),
            "config": config,
        }),
    )
}

fn export_split(world: &World, frames: &[FrameSpec], dir: &Path) -> Result<()> {
    let mut manifest = SequenceManifest::new(world.config.render_dims, world.domain.tag.clone());
    let mut maps = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        manifest.push(&f.pose, i as f64);
        maps.push(render_label_map(world, &f.pose)?);
    }
    save_sequence(&manifest, &maps, dir)?;
    log::info!("wrote {} frames to {}", frames.len(), dir.display());
    Ok(())
}

fn generate(config: &ExperimentConfig) -> Result<()> {
    let b = Benchmark::build(&config.benchmark)?;
    let data = config.out.join("data");
    export_split(&b.train_world, &b.train, &data.join("train"))?;
    export_split(&b.map_world, &b.train, &data.join("map"))?;
    export_split(&b.train_world, &b.test, &data.join("test"))?;
    let mut query = Vec::new();
    for (i, q) in b.queries.iter().enumerate() {
        let dir = data.join(format!("query_{i:03}"));
        export_split(&b.query_world, q, &dir)?;
        query.push(dir);
    }
    let paths = DatasetPaths {
        train: data.join("train"),
        map: Some(data.join("map")),
        test: Some(data.join("test")),
        query,
    };
    write_json(&data.join("datasets.json"), &serde_json::to_value(&paths)?)
}

fn graphs(config: &ExperimentConfig, input: Option<&Path>) -> Result<()> {
    let graphs = match input {
        Some(dir) => {
            let (_, maps) = load_sequence(dir)?;
            maps.iter()
                .map(|m| build_scene_graph(m, &config.graph))
                .collect::<semgraph::Result<Vec<_>>>()?
        }
        None => {
            let b = Benchmark::build(&config.benchmark)?;
            frame_graphs(&b.train_world, &b.test, std::slice::from_ref(&config.graph))?
                .pop()
                .unwrap_or_default()
        }
    };
    let dumps: Vec<_> = graphs.iter().map(|g| g.dump()).collect();
    write_json(
        &config.out.join("graphs.json"),
        &serde_json::to_value(&dumps)?,
    )?;
    let bits = bit_cost_report(&graphs)?;
    write_json(
        &config.out.join("bits.json"),
        &json!({
            "seed": config.seed,
            "config_hash": config.hash(),
            "graphs": graphs.len(),
            "mean_nodes": bits.mean_nodes,
            "mean_node_bits": bits.mean_node_bits,
            "mean_edge_bits": bits.mean_edge_bits,
            "mean_total_bits": bits.mean_total_bits(),
        }),
    )?;
    println!(
        "{} graphs: {:.2} nodes, {:.1} node bits, {:.1} edge bits per graph",
        graphs.len(),
        bits.mean_nodes,
        bits.mean_node_bits,
        bits.mean_edge_bits
    );
    Ok(())
}

fn train_cmd(config: &ExperimentConfig) -> Result<()> {
    let cell = config.cell();
    if cell.classifier != ClassifierKind::Gcn {
        bail!("`train` needs classifier = gcn; kNN and NBNN have no weights");
    }
    let data = prepare(config, &[cell.merging], false)?;
    let (outcome, test_top1) = train_gcn(config, &data, &cell)?;
    let path = config.out.join("model.bin");
    let meta = ModelMeta {
        schema_version: PARAMS_SCHEMA_VERSION,
        dims: outcome.params.dims,
        hyper: config.gcn,
        seed: config.gcn.seed,
        feature_mode: cell.descriptor,
    };
    save_model(&path, &outcome.params, &meta)?;
    write_json(
        &config.out.join("train.json"),
        &json!({
            "seed": config.seed,
            "config_hash": config.hash(),
            "epoch_losses": outcome.epoch_losses,
            "test_top1": test_top1,
        }),
    )?;
    println!(
        "trained {} epochs, final loss {:.4}, test top-1 {test_top1:.3}",
        outcome.epoch_losses.len(),
        outcome.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn localize(config: &ExperimentConfig) -> Result<()> {
    let cell = config.cell();
    let data = prepare(
        config,
        &[cell.merging],
        cell.classifier != ClassifierKind::Gcn,
    )?;
    let (report, traces) = evaluate_cell(config, &data, &cell)?;
    let traces_dir = config.out.join("traces");
    fs::create_dir_all(&traces_dir)?;
    for (i, t) in traces.iter().enumerate() {
        write(&traces_dir.join(format!("query_{i:03}.csv")), t.to_csv())?;
    }
    write_json(
        &config.out.join("metrics.json"),
        &json!({ "schema_version": REPORT_SCHEMA_VERSION, "config_hash": config.hash(), "report": report }),
    )?;
    println!(
        "single-view top-1 {:.3}, filtered top-1 {:.3} (final viewpoint {:.3}), {:.2} nodes and {:.1} bits per graph",
        report.single_view_top1,
        report.pf_top1_all,
        report.pf_top1_final,
        report.bits.mean_nodes,
        report.bits.mean_total_bits()
    );
    Ok(())
}

fn plan(config: &ExperimentConfig) -> Result<()> {
    let (study, store, _) = plan_study(config)?;
    let mut file = fs::File::create(config.out.join("qstore.bin"))?;
    store.write_to(&mut file)?;
    write(&config.out.join("curve.csv"), curve_to_csv(&study.curve))?;
    write(
        &config.out.join("plan.csv"),
        plan_csv(&study, &config.planner.mdp.actions),
    )?;
    let (best_a, best) = study.best_fixed();
    write_json(
        &config.out.join("plan.json"),
        &json!({
            "seed": config.seed,
            "config_hash": config.hash(),
            "classifier_top1": study.classifier_top1,
            "learned_mean": study.learned_mean(),
            "fixed_means": study.fixed_means(),
            "store_size": store.len(),
        }),
    )?;
    println!(
        "learned policy {:.3} vs best fixed step {} m at {best:.3}",
        study.learned_mean(),
        config.planner.mdp.actions[best_a]
    );
    Ok(())
}

fn ablate(config: &ExperimentConfig) -> Result<()> {
    let rows = run_ablation(config)?;
    let failures = rows.iter().filter(|r| r.outcome.result.is_err()).count();
    write(&config.out.join("ablation.csv"), ablation_csv(&rows))?;
    write(
        &config.out.join("summary.csv"),
        summary_csv(&summarize(&rows)),
    )?;
    println!("{} rows, {failures} failed", rows.len());
    Ok(())
}

fn report(config: &ExperimentConfig, input: Option<&Path>) -> Result<()> {
    let path = input
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.out.join("ablation.csv"));
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let table = summary_csv(&summarize(&parse_ablation_csv(&text)?));
    write(&config.out.join("summary.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.version {
        println!("{}", version_text());
        return Ok(());
    }
    let Some(command) = cli.command else {
        bail!("no subcommand given; see --help");
    };
    let config = load_config(&cli.common)?;
    fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;
    let name = match &command {
        Command::Generate => "generate",
        Command::Graphs { .. } => "graphs",
        Command::Train => "train",
        Command::Localize => "localize",
        Command::Plan => "plan",
        Command::Ablate => "ablate",
        Command::Report { .. } => "report",
    };
    write_run_record(&config, name)?;
    match command {
        Command::Generate => generate(&config),
        Command::Graphs { input } => graphs(&config, input.as_deref()),
        Command::Train => train_cmd(&config),
        Command::Localize => localize(&config),
        Command::Plan => plan(&config),
        Command::Ablate => ablate(&config),
        Command::Report { input } => report(&config, input.as_deref()),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
