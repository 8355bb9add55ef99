//! `abayes` — run and compare approximate-posterior methods from a config
//! file.
//!
//! Subcommands:
//!
//! * `abayes run <config>` — one model + one method; writes draws, summary,
//!   manifest, and density curves into the output directory.
//! * `abayes compare <config>` — several method blocks on one model; writes
//!   per-block artifacts plus a comparison report with total-variation
//!   distances against a reference block.
//! * `abayes list-models` / `abayes list-methods` — print the built-in
//!   names.
//!
//! Exit codes: 0 success, 2 invalid usage or config, 3 runtime failure.

mod config;
mod persist;
mod report;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use toml::Table;

use config::{CliError, MethodSpec, ModelSpec, METHOD_NAMES, MODEL_NAMES};
use report::{render_table, tv_distance, Curve, ReportRow};
use run::{run_block, Artifacts};

#[derive(Parser)]
#[command(name = "abayes", version, about = "Approximate Bayesian inference experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one model per the config file.
    Run {
        /// Path to the TOML config file.
        config: PathBuf,
        /// Override experiment.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override experiment.out_dir.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run several method blocks on one model and compare them.
    Compare {
        /// Path to the TOML config file.
        config: PathBuf,
        /// Override experiment.seed (block-level seeds still win).
        #[arg(long)]
        seed: Option<u64>,
        /// Override experiment.out_dir.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// List the built-in model names.
    ListModels,
    /// List the built-in method names.
    ListMethods,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, out),
        Command::Compare { config, seed, out } => cmd_compare(&config, seed, out),
        Command::ListModels => {
            for m in MODEL_NAMES {
                println!("{m}");
            }
            Ok(())
        }
        Command::ListMethods => {
            for m in METHOD_NAMES {
                println!("{m}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn cmd_run(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = config::load_run(config_path, seed, out)?;
    let (prep, data_facts) = run::prepare(&cfg.model)?;
    let started = Instant::now();
    let artifacts = run_block(&prep, &cfg.model, &cfg.method, &cfg.method_name, cfg.seed)?;
    let wall = started.elapsed().as_secs_f64();

    let manifest = build_manifest(
        &cfg.model,
        &cfg.method,
        &cfg.method_name,
        cfg.seed,
        &cfg.out_dir,
        &data_facts,
        &artifacts,
        wall,
    );
    write_artifacts(&cfg.out_dir, &cfg.model, &artifacts, &manifest)?;

    print!("{}", run_table(&cfg.model, &cfg.method_name, &artifacts));
    println!("artifacts written to {}", cfg.out_dir.display());
    Ok(())
}

fn cmd_compare(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = config::load_compare(config_path, seed, out)?;
    let (prep, data_facts) = run::prepare(&cfg.model)?;

    let mut results: Vec<(String, Artifacts)> = Vec::with_capacity(cfg.blocks.len());
    for block in &cfg.blocks {
        let started = Instant::now();
        let artifacts = run_block(&prep, &cfg.model, &block.method, &block.method_name, block.seed)?;
        let wall = started.elapsed().as_secs_f64();
        let block_dir = cfg.out_dir.join(&block.label);
        let mut manifest = build_manifest(
            &cfg.model,
            &block.method,
            &block.method_name,
            block.seed,
            &block_dir,
            &data_facts,
            &artifacts,
            wall,
        );
        if let Some(toml::Value::Table(exp)) = manifest.get_mut("experiment") {
            exp.insert("label".into(), block.label.as_str().into());
        }
        write_artifacts(&block_dir, &cfg.model, &artifacts, &manifest)?;
        results.push((block.label.clone(), artifacts));
    }

    let reference_curves: &[Curve] = &results
        .iter()
        .find(|(label, _)| *label == cfg.reference)
        .expect("reference label validated during config loading")
        .1
        .curves;
    let reference_curves = reference_curves.to_vec();

    let param_names = cfg.model.param_names();
    let mut rows = Vec::new();
    for (j, pname) in param_names.iter().enumerate() {
        for (label, artifacts) in &results {
            let ps = &artifacts.summary.params[j];
            rows.push(ReportRow {
                method: label.clone(),
                param: (*pname).to_string(),
                mean: ps.mean,
                sd: ps.sd,
                ci90: ps.intervals[1],
                tv_vs_reference: tv_distance(&reference_curves[j], &artifacts.curves[j]),
            });
        }
    }

    let mut report = Table::new();
    report.insert("model".into(), cfg.model.name().into());
    report.insert("reference".into(), cfg.reference.as_str().into());
    let row_values: Vec<toml::Value> = rows
        .iter()
        .map(|r| {
            let mut t = Table::new();
            t.insert("method".into(), r.method.as_str().into());
            t.insert("param".into(), r.param.as_str().into());
            t.insert("mean".into(), r.mean.into());
            t.insert("sd".into(), r.sd.into());
            t.insert(
                "ci90".into(),
                toml::Value::Array(vec![r.ci90.0.into(), r.ci90.1.into()]),
            );
            t.insert("tv_vs_reference".into(), r.tv_vs_reference.into());
            toml::Value::Table(t)
        })
        .collect();
    report.insert("rows".into(), toml::Value::Array(row_values));
    persist::write_toml(&cfg.out_dir.join("report.toml"), &report)?;

    print!("{}", render_table(&rows, &cfg.reference));
    println!("artifacts written to {}", cfg.out_dir.display());
    Ok(())
}

/// The run-mode stdout table: one line per parameter.
fn run_table(model: &ModelSpec, method_name: &str, artifacts: &Artifacts) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>12} {:>12} {:>26}\n",
        "param", "mean", "sd", "90% interval"
    ));
    for (j, pname) in model.param_names().iter().enumerate() {
        let ps = &artifacts.summary.params[j];
        out.push_str(&format!(
            "{:<10} {:>12.5} {:>12.5} [{:>11.5}, {:>11.5}]\n",
            pname, ps.mean, ps.sd, ps.intervals[1].0, ps.intervals[1].1
        ));
    }
    if !artifacts.summary.flags.is_empty() {
        out.push_str(&format!(
            "flags ({method_name}): {}\n",
            artifacts.summary.flags.join(", ")
        ));
    }
    out
}

/// Assembles the manifest: the experiment header, the model and method
/// sections with every default materialized, the realized data facts, and
/// the realized run facts (tolerances, acceptance rates, traces, timing).
#[allow(clippy::too_many_arguments)]
fn build_manifest(
    model: &ModelSpec,
    method: &MethodSpec,
    method_name: &str,
    seed: u64,
    out_dir: &Path,
    data_facts: &Table,
    artifacts: &Artifacts,
    wall_time_s: f64,
) -> Table {
    let mut exp = Table::new();
    exp.insert("model".into(), model.name().into());
    exp.insert("method".into(), method_name.into());
    exp.insert("seed".into(), (seed as i64).into());
    exp.insert("out_dir".into(), out_dir.display().to_string().into());

    let mut run_section = artifacts.run_extras.clone();
    run_section.insert("wall_time_s".into(), wall_time_s.into());
    run_section.insert("n_draws".into(), (artifacts.draws.len() as i64).into());

    let mut doc = Table::new();
    doc.insert("experiment".into(), toml::Value::Table(exp));
    doc.insert("model".into(), toml::Value::Table(model.manifest()));
    doc.insert("method".into(), toml::Value::Table(method.manifest(method_name)));
    doc.insert("data".into(), toml::Value::Table(data_facts.clone()));
    doc.insert("run".into(), toml::Value::Table(run_section));
    doc
}

/// Writes one block's artifact set into `dir`.
fn write_artifacts(
    dir: &Path,
    model: &ModelSpec,
    artifacts: &Artifacts,
    manifest: &Table,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    persist::write_draws_csv(&dir.join("draws.csv"), &artifacts.draws)?;
    let summary_doc = persist::summary_table(
        &artifacts.summary,
        model.param_names(),
        &artifacts.summary_extras,
    );
    persist::write_toml(&dir.join("summary.toml"), &summary_doc)?;
    persist::write_toml(&dir.join("manifest.toml"), manifest)?;
    for (j, curve) in artifacts.curves.iter().enumerate() {
        let name = model.param_names().get(j).copied().unwrap_or("param");
        persist::write_density(&dir.join(format!("density_{name}.csv")), curve)?;
    }
    for (name, curve) in &artifacts.extra_curves {
        persist::write_density(&dir.join(format!("density_{name}.csv")), curve)?;
    }
    Ok(())
}
