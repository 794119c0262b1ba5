use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use log::info;

use moddisc::graph::{parse, serialize};
use moddisc::io::{
    config_hash, default_components, dump_config, emit_plot_data, export_frontier, import_frontier, load_csv,
    parse_config, synth_multiscale, write_csv, Config, Dataset, FrontierRecord, PlotRow,
};
use moddisc::moead::{run, ParetoFrontier};
use moddisc::tasks::{build_expr_task, build_ml_task, build_pde_task, render_expression, render_pde, render_pipeline, PdeTerm, Task};

#[derive(Parser, Debug)]
#[command(name = "moddisc", version, about = "Multi-objective evolutionary discovery of composite models")]
struct Cli {
    /// TOML configuration file; see the defaults listed below
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV data file with columns t,u (overrides [data].path)
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Random seed (overrides [search].seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of epochs (overrides [search].epochs)
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Output directory for discover-*, output file otherwise
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forecasting pipelines of regressors over lagged embeddings
    DiscoverMl,
    /// Closed-form expressions built from sums of token products
    DiscoverExpr,
    /// Sparse differential equations in time
    DiscoverPde,
    /// Write the synthetic multi-scale series as CSV
    SynthData,
    /// Convert an exported frontier (JSON lines) into plot CSV
    ExportPlot {
        /// Frontier file written by a discover-* command
        #[arg(long)]
        input: PathBuf,
    },
    /// Print the effective configuration
    DumpConfig,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] moddisc::io::ConfigError),
    #[error(transparent)]
    Io(#[from] moddisc::io::IoError),
    #[error(transparent)]
    Task(#[from] moddisc::tasks::TaskError),
    #[error(transparent)]
    Run(#[from] moddisc::moead::RunError),
    #[error("{0}")]
    Usage(String),
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.search.seed = s;
    }
    if let Some(e) = cli.epochs {
        cfg.search.epochs = e;
    }
    if let Some(d) = &cli.data {
        cfg.data.path = Some(d.display().to_string());
    }
    Ok(cfg)
}

fn load_data(cfg: &Config) -> Result<Dataset, CliError> {
    match &cfg.data.path {
        Some(p) => Ok(load_csv(Path::new(p))?),
        None => Ok(synth_multiscale(cfg.search.seed, &default_components(), cfg.data.noise_std, cfg.data.n, cfg.data.dt)?),
    }
}

fn render_record(task: &str, model_text: &str, cfg: &Config) -> String {
    let Ok(model) = parse(model_text) else {
        return model_text.lines().next().unwrap_or_default().to_string();
    };
    match task {
        "expr" => render_expression(&model),
        "pde" => match cfg.pde.target.parse::<PdeTerm>() {
            Ok(t) => render_pde(&model, t),
            Err(_) => render_expression(&model),
        },
        _ => render_pipeline(&model),
    }
}

fn write_outputs(task: &dyn Task, frontier: &ParetoFrontier, cfg: &Config, out: Option<&Path>) -> Result<(), CliError> {
    let hash = config_hash(cfg);
    let records: Vec<FrontierRecord> = frontier
        .members
        .iter()
        .map(|m| FrontierRecord {
            objectives: m.objectives.clone(),
            model_text: serialize(&m.model),
            task: task.name().to_string(),
            seed: cfg.search.seed,
            config_hash: hash.clone(),
        })
        .collect();
    let rows: Vec<PlotRow> = frontier
        .members
        .iter()
        .map(|m| PlotRow { objectives: m.objectives.clone(), label: task.render(&m.model) })
        .collect();
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(moddisc::io::IoError::from)?;
            export_frontier(&records, &dir.join("frontier.jsonl"))?;
            if task.objective_names().len() == 2 {
                emit_plot_data(&rows, &dir.join("plot.csv"))?;
            }
            info!("wrote {} frontier members to {}", records.len(), dir.display());
        }
        None => {
            println!("{}", task.objective_names().join("\t"));
            for r in &rows {
                let obj: Vec<String> = r.objectives.iter().map(|v| format!("{v:.6}")).collect();
                println!("{}\t{}", obj.join("\t"), r.label);
            }
        }
    }
    Ok(())
}

fn discover(task: &dyn Task, cfg: &Config, out: Option<&Path>) -> Result<(), CliError> {
    info!("running {} with seed {} for {} epochs", task.name(), cfg.search.seed, cfg.search.epochs);
    let frontier = run(task, &cfg.search)?;
    write_outputs(task, &frontier, cfg, out)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::DiscoverMl => discover(&build_ml_task(&cfg, load_data(&cfg)?)?, &cfg, out),
        Command::DiscoverExpr => discover(&build_expr_task(&cfg, load_data(&cfg)?)?, &cfg, out),
        Command::DiscoverPde => discover(&build_pde_task(&cfg, &load_data(&cfg)?)?, &cfg, out),
        Command::SynthData => {
            let path = out.ok_or_else(|| CliError::Usage("synth-data needs --out FILE".into()))?;
            let data = synth_multiscale(cfg.search.seed, &default_components(), cfg.data.noise_std, cfg.data.n, cfg.data.dt)?;
            write_csv(&data, path)?;
            Ok(())
        }
        Command::ExportPlot { input } => {
            let path = out.ok_or_else(|| CliError::Usage("export-plot needs --out FILE".into()))?;
            let records = import_frontier(input)?;
            let rows: Vec<PlotRow> = records
                .iter()
                .map(|r| PlotRow { objectives: r.objectives.clone(), label: render_record(&r.task, &r.model_text, &cfg) })
                .collect();
            emit_plot_data(&rows, path)?;
            Ok(())
        }
        Command::DumpConfig => {
            let text = dump_config(&cfg);
            match out {
                Some(p) => fs::write(p, text).map_err(moddisc::io::IoError::from)?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let defaults = format!("Configuration defaults:\n\n{}", dump_config(&Config::default()));
    let matches = Cli::command().after_long_help(defaults).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
