mod config;
mod failure;
mod features;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use duet_core::format::{
    build_annotation_container, deserialize_container, load_joints_tree, reduce_joints, serialize_container_with,
    validate_dataset_tree, AnnotationContainer,
};
use duet_core::graph::build_graph_with;
use duet_core::harness::{results_from_csv, results_to_csv, run_suite};
use duet_core::head::{head_evaluate, head_train, project_features_2d, projection_csv};
use duet_core::stats::{hypothesis_report, table5_fixture};
use duet_core::stgcn::{train, StgcnModel};
use duet_core::synth::{generate_container, generate_dataset};
use duet_core::taxonomy::{functions_present, kinesic_function_of};
use serde_json::json;

use config::RunConfig;
use failure::Failure;
use features::FeatureTable;

const ALPHA: f64 = 0.05;

#[derive(Parser)]
#[command(
    name = "duet",
    version,
    about = "Dyadic skeleton pipeline: data, backbone, kinesics head, statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every stage seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset tree; the JSON report goes to --out or next to the root.
    Validate {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic joints tree and its annotation container.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        root: Option<PathBuf>,
    },
    /// Build an annotation container from an existing joints tree.
    Annotate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        root: Option<PathBuf>,
    },
    /// Train the backbone on a container and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        container: Option<PathBuf>,
    },
    /// Write pooled backbone features of every sample as CSV.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        container: Option<PathBuf>,
    },
    /// Train the kinesics head on extracted features.
    Head {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Run a subset suite and write the results CSV.
    Suite {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        container: Option<PathBuf>,
    },
    /// Correlation analysis of a results CSV, or of the published pairs with `table5`.
    Stats {
        source: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-axis principal projection of extracted features.
    Project {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    // Usage errors are contract errors; clap's own code 2 is reserved for I/O.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { root, out } => cmd_validate(&root, out),
        Command::Synth { common, root } => cmd_synth(&common, root),
        Command::Annotate { common, root } => cmd_annotate(&common, root),
        Command::Train { common, container } => cmd_train(&common, container),
        Command::Extract {
            common,
            checkpoint,
            container,
        } => cmd_extract(&common, checkpoint, container),
        Command::Head { common, features } => cmd_head(&common, features),
        Command::Suite { common, container } => cmd_suite(&common, container),
        Command::Stats { source, out } => cmd_stats(&source, out),
        Command::Project { features, out } => cmd_project(&features, out),
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.resolve(common.seed)
}

fn provenance(command: &str, config: &RunConfig) -> serde_json::Value {
    json!({
        "tool": "duet",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config_sha256": config.digest(),
        "seed": config.seed,
    })
}

fn required(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| Failure::contract(format!("no {what} path given (flag or config paths.{what})")))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn load_container(path: &Path) -> Result<AnnotationContainer, Failure> {
    Ok(deserialize_container(&read(path)?)?)
}

fn cmd_validate(root: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let report = validate_dataset_tree(root)?;
    let out = out.unwrap_or_else(|| {
        let mut name = root
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_else(|| "dataset".into());
        name.push(".validation.json");
        root.with_file_name(name)
    });
    write(&out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    for f in &report.errors {
        eprintln!("error {:?} {}: {}", f.rule, f.path.display(), f.message);
    }
    println!(
        "{} errors, {} warnings; report at {}",
        report.errors.len(),
        report.warnings.len(),
        out.display()
    );
    if report.is_conforming() {
        Ok(())
    } else {
        Err(Failure::contract(format!("{} validation errors", report.errors.len())))
    }
}

fn cmd_synth(common: &Common, root: Option<PathBuf>) -> Result<(), Failure> {
    let config = load_config(common)?;
    let root = required(root, &config.paths.root, "root")?;
    let container = generate_dataset(&config.synth, &config.split, &root)?;
    let out = common.out.clone().or(config.paths.container.clone());
    if let Some(out) = &out {
        write(
            out,
            &serialize_container_with(&container, Some(provenance("synth", &config))),
        )?;
    }
    println!(
        "{} samples written under {} ({} train, {} test)",
        container.annotation.len(),
        root.display(),
        container.split.xsub_train.len(),
        container.split.xsub_value.len()
    );
    Ok(())
}

fn cmd_annotate(common: &Common, root: Option<PathBuf>) -> Result<(), Failure> {
    let config = load_config(common)?;
    let root = required(root, &config.paths.root, "root")?;
    let out = required(common.out.clone(), &config.paths.container, "container")?;
    let samples = load_joints_tree(&root)?
        .into_iter()
        .map(|(name, seq)| Ok((name, reduce_joints(&seq)?)))
        .collect::<Result<Vec<_>, duet_core::Error>>()?;
    let container = build_annotation_container(samples, &config.split)?;
    write(
        &out,
        &serialize_container_with(&container, Some(provenance("annotate", &config))),
    )?;
    println!(
        "{} samples annotated into {}",
        container.annotation.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(common: &Common, container: Option<PathBuf>) -> Result<(), Failure> {
    let config = load_config(common)?;
    let path = required(container, &config.paths.container, "container")?;
    let out = required(common.out.clone(), &config.paths.checkpoint, "checkpoint")?;
    let data = load_container(&path)?;
    let graph = build_graph_with(config.backbone.partition);
    let outcome = train(&config.backbone, &graph, &data)?;
    for e in &outcome.curve {
        eprintln!(
            "epoch {:>3}  lr {:.0e}  loss {:.4}  val {:.4}",
            e.epoch, e.lr, e.mean_loss, e.val_accuracy
        );
    }
    let mut prov = provenance("train", &config);
    prov["best_epoch"] = json!(outcome.best_epoch);
    prov["val_accuracy"] = json!(outcome.val_accuracy);
    write(&out, &outcome.model.to_checkpoint(Some(prov)))?;
    println!(
        "validation accuracy {:.4} at epoch {}; checkpoint {}",
        outcome.val_accuracy,
        outcome.best_epoch,
        out.display()
    );
    Ok(())
}

fn cmd_extract(common: &Common, checkpoint: Option<PathBuf>, container: Option<PathBuf>) -> Result<(), Failure> {
    let config = load_config(common)?;
    let checkpoint = required(checkpoint, &config.paths.checkpoint, "checkpoint")?;
    let container = required(container, &config.paths.container, "container")?;
    let out = required(common.out.clone(), &config.paths.features, "features")?;
    let doc = read(&checkpoint)?;
    let partition = serde_json::from_str::<serde_json::Value>(&doc)
        .ok()
        .and_then(|v| serde_json::from_value(v["config"]["partition"].clone()).ok())
        .unwrap_or(config.backbone.partition);
    let model = StgcnModel::from_checkpoint(&doc, build_graph_with(partition))?;
    let data = load_container(&container)?;
    let table = FeatureTable::extract(&model, &data)?;
    write(&out, &table.to_csv())?;
    println!(
        "{} feature rows of width {} written to {}",
        table.names.len(),
        table.width(),
        out.display()
    );
    Ok(())
}

fn cmd_head(common: &Common, features: Option<PathBuf>) -> Result<(), Failure> {
    let config = load_config(common)?;
    let path = required(features, &config.paths.features, "features")?;
    let out = common
        .out
        .clone()
        .ok_or_else(|| Failure::contract("no --out path for the head checkpoint"))?;
    let table = FeatureTable::from_csv(&read(&path)?)?;
    let functions = functions_present(&table.labels);
    let target = |i: usize| {
        functions
            .binary_search(&kinesic_function_of(table.labels[i]))
            .expect("functions cover every label")
    };
    let (train_rows, test_rows): (Vec<usize>, Vec<usize>) = (0..table.names.len()).partition(|&i| !table.test[i]);
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Failure::contract("features need both train and test rows"));
    }
    let x = &table.values;
    let train_x = x.select(ndarray::Axis(0), &train_rows);
    let test_x = x.select(ndarray::Axis(0), &test_rows);
    let train_y: Vec<usize> = train_rows.iter().map(|&i| target(i)).collect();
    let test_y: Vec<usize> = test_rows.iter().map(|&i| target(i)).collect();
    let outcome = head_train(
        &config.head,
        functions,
        train_x.view(),
        &train_y,
        test_x.view(),
        &test_y,
    )?;
    let accuracy = head_evaluate(&outcome.model, test_x.view(), &test_y)?;
    let mut prov = provenance("head", &config);
    prov["best_epoch"] = json!(outcome.best_epoch);
    prov["test_accuracy"] = json!(accuracy);
    write(&out, &outcome.model.to_checkpoint(Some(prov)))?;
    println!(
        "head test accuracy {accuracy:.4} at epoch {}; checkpoint {}",
        outcome.best_epoch,
        out.display()
    );
    Ok(())
}

fn cmd_suite(common: &Common, container: Option<PathBuf>) -> Result<(), Failure> {
    let config = load_config(common)?;
    let out = common
        .out
        .clone()
        .ok_or_else(|| Failure::contract("no --out path for the results CSV"))?;
    let manifest = config.manifest()?;
    let data = match container.or(config.paths.container.clone()) {
        Some(path) => load_container(&path)?,
        None => generate_container(&config.synth, &config.split)?,
    };
    let graph = build_graph_with(config.backbone.partition);
    let outcome = run_suite(&manifest, &data, &graph, &config.stages(), |r| {
        let show = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.1}"));
        eprintln!(
            "experiment {:>3}  backbone {:>5}  head {:>5}",
            r.experiment_id,
            show(r.stgcn_accuracy),
            show(r.cnn_accuracy)
        );
    })?;
    for (id, message) in &outcome.failures {
        eprintln!("experiment {id} failed: {message}");
    }
    write(&out, &results_to_csv(&outcome.results))?;
    println!("{} results written to {}", outcome.results.len(), out.display());
    Ok(())
}

fn cmd_stats(source: &str, out: Option<PathBuf>) -> Result<(), Failure> {
    let (pairs, excluded) = if source == "table5" {
        (table5_fixture(), 0)
    } else {
        let results = results_from_csv(&read(Path::new(source))?)?;
        let excluded = results.iter().filter(|r| r.is_sentinel()).count();
        (duet_core::harness::accuracy_pairs(&results)?, excluded)
    };
    let report = hypothesis_report(&pairs, ALPHA)?;
    println!("{report}");
    if excluded > 0 {
        println!("{excluded} failed experiments excluded");
    }
    if let Some(out) = out {
        write(&out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    Ok(())
}

fn cmd_project(features: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let table = FeatureTable::from_csv(&read(features)?)?;
    let projection = project_features_2d(table.values.view())?;
    if let Some(w) = &projection.warning {
        eprintln!("warning: {w}");
    }
    let csv = projection_csv(&table.names, &table.labels, &projection)?;
    match out {
        Some(path) => write(&path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
