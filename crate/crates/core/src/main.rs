use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bugport::pipeline::{format_metric, ConfigError, Pipeline, PipelineConfig, PipelineError};
use bugport::runner::{serve_stdio, MockScript, ServeOutcome, PROTOCOL_VERSION};

#[derive(Parser)]
#[command(name = "bugport", version, about = "Port confirmed API bug cases to analogous APIs")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Flags {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Corpus files (comma separated or repeated).
    #[arg(long, global = true, value_delimiter = ',')]
    corpus: Vec<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Context threshold for every framework.
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    alpha_io: Option<f64>,
    #[arg(long, global = true)]
    alpha_call: Option<f64>,
    /// External runner command; the in-process mock is used otherwise.
    #[arg(long, global = true)]
    runner_cmd: Option<String>,
    /// Script for the in-process mock runner.
    #[arg(long, global = true)]
    mock_script: Option<PathBuf>,
    #[arg(long, global = true)]
    timeout_s: Option<f64>,
    /// Overrides performance oracle margins.
    #[arg(long, global = true)]
    margin: Option<f64>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    suppress_list: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    Ingest,
    Sample,
    Analyze,
    Match,
    Generate,
    Evaluate,
    Report,
    SweepBeta,
    /// All stages from ingest to report.
    Run,
    /// Serve the wire protocol on stdin/stdout from a mock script.
    MockRunner {
        #[arg(long)]
        script: Option<PathBuf>,
        /// Protocol version to advertise.
        #[arg(long, default_value_t = PROTOCOL_VERSION)]
        protocol: u32,
    },
}

fn build_config(flags: &Flags) -> Result<PipelineConfig, ConfigError> {
    let mut config = PipelineConfig::default();
    if let Some(path) = &flags.config {
        config.apply_file(path)?;
    }
    config.apply_env(std::env::vars())?;
    if !flags.corpus.is_empty() {
        config.corpus = flags.corpus.clone();
    }
    if let Some(out) = &flags.out {
        config.out_dir = out.clone();
    }
    if let Some(b) = flags.beta {
        config.thresholds.beta.fixed = Some(b);
    }
    if let Some(a) = flags.alpha_io {
        config.thresholds.alpha_io = a;
    }
    if let Some(a) = flags.alpha_call {
        config.thresholds.alpha_call = a;
    }
    if let Some(cmd) = &flags.runner_cmd {
        config.runner_cmd = Some(cmd.clone());
    }
    if let Some(p) = &flags.mock_script {
        config.mock_script = Some(p.clone());
    }
    if let Some(t) = flags.timeout_s {
        config.timeout_s = t;
    }
    if let Some(m) = flags.margin {
        config.margin = Some(m);
    }
    if let Some(j) = flags.jobs {
        config.jobs = j;
    }
    if let Some(p) = &flags.suppress_list {
        config.suppress_list = Some(p.clone());
    }
    Ok(config)
}

fn mock_runner(script: Option<PathBuf>, protocol: u32) -> ExitCode {
    let script = match script.map(|p| MockScript::load(&p)).transpose() {
        Ok(s) => s.unwrap_or_default(),
        Err(e) => {
            eprintln!("mock-runner: {e}");
            return ExitCode::from(2);
        }
    };
    let stdin = io::stdin();
    match serve_stdio(&script, protocol, BufReader::new(stdin.lock()), io::stdout().lock()) {
        Ok(ServeOutcome::Closed) => ExitCode::SUCCESS,
        // Scripted crash: die without answering, like an aborting process.
        Ok(ServeOutcome::Crash) => std::process::abort(),
        Err(e) => {
            eprintln!("mock-runner: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command, config: PipelineConfig) -> Result<(), PipelineError> {
    let pipeline = Pipeline::new(config)?;
    let text = match command {
        Command::Ingest => pipeline.ingest()?,
        Command::Sample => pipeline.sample()?,
        Command::Analyze => pipeline.analyze()?,
        Command::Match => pipeline.match_stage()?,
        Command::Generate => pipeline.generate()?,
        Command::Evaluate => pipeline.evaluate()?,
        Command::Report | Command::Run => {
            let built = if matches!(command, Command::Run) {
                pipeline.run_all()?
            } else {
                pipeline.report()?
            };
            let metrics = bugport::pipeline::compute_metrics(&built.report);
            let mut text = bugport::pipeline::render_text(&built);
            text.push_str(&format!(
                "\ndetection time s {}\navg time to bug min {}\n",
                format_metric(built.report.detection_wall_time_s),
                format_metric(metrics.avg_time_to_bug_min)
            ));
            text
        }
        Command::SweepBeta => {
            pipeline.sweep_beta()?;
            std::fs::read_to_string(pipeline.config.out_dir.join("sweep.txt")).unwrap_or_default()
        }
        Command::MockRunner { .. } => unreachable!("handled before config"),
    };
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Command::MockRunner { script, protocol } = cli.command {
        return mock_runner(script, protocol);
    }
    let result = build_config(&cli.flags)
        .map_err(PipelineError::from)
        .and_then(|config| run(cli.command, config));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bugport: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
