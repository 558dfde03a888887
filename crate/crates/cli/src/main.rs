use std::path::PathBuf;
use std::process::ExitCode;

use bbmx_cli::{emit_plot_data, CliError, ExperimentConfig, PlotKind, Registry, TOOL_VERSION, WORKERS_ENV};
use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};

fn common_args(cmd: Command) -> Command {
    cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("PATH")
            .value_parser(value_parser!(PathBuf))
            .help("flat key=value configuration file"),
    )
    .arg(
        Arg::new("seed")
            .long("seed")
            .value_name("N")
            .value_parser(value_parser!(u64))
            .help("64-bit master seed"),
    )
    .arg(
        Arg::new("replicas")
            .long("replicas")
            .value_name("N")
            .value_parser(value_parser!(usize))
            .help("number of replicas"),
    )
    .arg(
        Arg::new("out")
            .long("out")
            .value_name("DIR")
            .value_parser(value_parser!(PathBuf))
            .help("output directory"),
    )
    .arg(
        Arg::new("workers")
            .long("workers")
            .value_name("N")
            .value_parser(value_parser!(usize))
            .help(format!("worker threads (overrides {WORKERS_ENV}; default 1)")),
    )
    .arg(
        Arg::new("set")
            .long("set")
            .value_name("KEY=VALUE")
            .action(ArgAction::Append)
            .help("override one parameter"),
    )
    .arg(
        Arg::new("plot")
            .long("plot")
            .value_name("KIND:COLUMN[:COLUMN]")
            .action(ArgAction::Append)
            .help("emit plot data (histogram, ecdf, tail, scatter) for summary columns"),
    )
}

fn command(registry: &Registry) -> Command {
    let mut cmd = Command::new("bbmx")
        .version(TOOL_VERSION)
        .about("Monte Carlo experiments on branching Brownian motion and its extremal process")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(Command::new("list").about("list experiments and their parameters"));
    for exp in registry.iter() {
        cmd = cmd.subcommand(common_args(Command::new(exp.name()).about(exp.about())));
    }
    cmd
}

fn build_config(name: &str, m: &ArgMatches) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Input {
                path: path.clone(),
                source,
            })?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::new(name),
    };
    if !cfg.experiment.is_empty() && cfg.experiment != name {
        return Err(CliError::Config(format!(
            "configuration is for `{}` but the subcommand is `{name}`",
            cfg.experiment
        )));
    }
    cfg.experiment = name.to_string();
    for kv in m.get_many::<String>("set").into_iter().flatten() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(&s) = m.get_one::<u64>("seed") {
        cfg.seed = s;
    }
    if let Some(&r) = m.get_one::<usize>("replicas") {
        cfg.replicas = r;
    }
    if let Some(o) = m.get_one::<PathBuf>("out") {
        cfg.out = o.clone();
    }
    if let Some(&w) = m.get_one::<usize>("workers") {
        cfg.workers = Some(w);
    }
    Ok(cfg)
}

fn execute(registry: &Registry, name: &str, m: &ArgMatches) -> Result<bool, CliError> {
    let cfg = build_config(name, m)?;
    let out = cfg.out.clone();
    let record = registry.run(cfg)?;
    for f in &record.files {
        println!("wrote {} (sha256 {})", out.join(&f.file).display(), f.sha256);
    }
    for spec in m.get_many::<String>("plot").into_iter().flatten() {
        let (kind, column) = spec
            .split_once(':')
            .ok_or_else(|| CliError::Plot(format!("--plot expects KIND:COLUMN, got `{spec}`")))?;
        let path = emit_plot_data(&record, kind.parse::<PlotKind>()?, column, &out)?;
        println!("wrote {}", path.display());
    }
    for note in &record.diagnostics.notes {
        println!("note: {note}");
    }
    for r in &record.reports {
        println!("{}", r.line());
    }
    Ok(record.all_pass())
}

fn main() -> ExitCode {
    let registry = Registry::standard();
    let matches = command(&registry).get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    if name == "list" {
        for exp in registry.iter() {
            println!("{}: {}", exp.name(), exp.about());
            for (k, v) in exp.defaults() {
                println!("    {k} = {v}");
            }
        }
        return ExitCode::SUCCESS;
    }
    match execute(&registry, name, sub) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("bbmx: some criteria failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("bbmx: {e}");
            ExitCode::from(2)
        }
    }
}
