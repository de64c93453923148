use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssk::spatial_features::{Condition, FeatureSelection};
use ssk_cli::{
    cmd_evaluate, cmd_features, cmd_perturb, cmd_separate, cmd_simulate, CliError, Method,
    RunConfig,
};

#[derive(Parser)]
#[command(
    name = "ssk",
    version,
    about = "Multichannel target-speaker separation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate reverberant multichannel scenes and write a manifest
    Simulate(Opts),
    /// Write TSNF1 feature files for every utterance and target
    Features(Opts),
    /// Separate every target with an oracle mask, the heuristic or DAS
    Separate(Opts),
    /// Score estimates and write binned JSON/CSV reports
    Evaluate(Opts),
    /// Sweep target direction errors for the heuristic af / af+dpr variants
    Perturb(Opts),
}

#[derive(Args, Clone)]
struct Opts {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    num_scenes: usize,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    num_speakers: u8,
    #[arg(long, default_value_t = 0.07)]
    array_diameter: f64,
    #[arg(long)]
    fft_size: Option<usize>,
    #[arg(long)]
    win_len: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    grid_step: f64,
    /// Comma-separated subset of lps,cosipd,sinipd,af,dpr
    #[arg(long, default_value = "lps,cosipd,af,dpr")]
    features: String,
    #[arg(long, default_value = "tgt", value_parser = ["tgt", "tgt+intf"])]
    cond: String,
    /// ibm, irm, ipsm, heuristic or das
    #[arg(long, default_value = "ipsm")]
    method: String,
    #[arg(long, default_value_t = 0.0)]
    direction_error_deg: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Estimate directory for evaluate (default: <out>/<method>)
    #[arg(long)]
    estimates: Option<PathBuf>,
    /// Mono WAV directory for simulate; synthetic sources when absent
    #[arg(long)]
    source_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    duration_secs: f64,
    #[arg(long)]
    jobs: Option<usize>,
}

impl Opts {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let condition: Condition = self
            .cond
            .parse()
            .map_err(|e: ssk::Error| CliError::Usage(e.to_string()))?;
        let features = FeatureSelection::parse(&self.features, condition)
            .map_err(|e| CliError::Usage(format!("--features: {e}")))?;
        let method: Method = self.method.parse()?;
        Ok(RunConfig {
            seed: self.seed,
            num_scenes: self.num_scenes,
            num_speakers: usize::from(self.num_speakers),
            array_diameter: self.array_diameter,
            fft_size: self.fft_size,
            win_len: self.win_len,
            hop: self.hop,
            grid_step: self.grid_step,
            features,
            method,
            direction_error_deg: self.direction_error_deg,
            out: self.out,
            manifest: self.manifest,
            estimates: self.estimates,
            source_dir: self.source_dir,
            duration_secs: self.duration_secs,
            jobs: self.jobs,
            ..RunConfig::default()
        })
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate(o) => println!("{}", cmd_simulate(&o.into_config()?)?),
        Command::Features(o) => {
            let files = cmd_features(&o.into_config()?)?;
            println!("wrote {} feature files", files.len());
        }
        Command::Separate(o) => {
            let files = cmd_separate(&o.into_config()?)?;
            println!("wrote {} estimates", files.len());
        }
        Command::Evaluate(o) => print!("{}", cmd_evaluate(&o.into_config()?)?.to_csv()),
        Command::Perturb(o) => print!("{}", cmd_perturb(&o.into_config()?)?.to_csv()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SSK_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if matches!(e.downcast_ref::<CliError>(), Some(CliError::Usage(_))) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
