use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use beamflex::channel::build_channel;
use beamflex::harness::{run_campaign, stream_rng, validate_config, write_outputs, CampaignConfig};
use beamflex::traffic::generate_scenario;

#[derive(Parser)]
#[command(name = "beamflex", version, about = "Flexible multibeam satellite resource allocation campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo campaign.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        realizations: Option<usize>,
        /// Output directory (overrides `[output] dir`).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print one realization's users as TSV.
    Scenario {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        realization: usize,
    },
    /// Check a configuration file.
    Validate { config: PathBuf },
}

fn load(path: Option<&PathBuf>) -> Result<CampaignConfig, String> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => String::new(),
    };
    let name = path.map_or("<defaults>".into(), |p| p.display().to_string());
    validate_config(&text).map_err(|e| format!("{name}: {e}"))
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Validate { config } => {
            let c = load(Some(&config))?;
            for w in &c.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "ok: {} beams, preset {}, {} realizations, strategies {}",
                c.payload.beams(),
                c.scenario.preset.name(),
                c.realizations,
                c.strategies.iter().map(|s| s.label()).collect::<Vec<_>>().join(",")
            );
        }
        Command::Scenario { common, realization } => {
            let mut c = load(common.config.as_ref())?;
            c.seed = common.seed.unwrap_or(c.seed);
            let mut rng = stream_rng(c.seed, realization as u64);
            let sc = generate_scenario(&c.scenario, &c.payload.layout, &mut rng).map_err(|e| e.to_string())?;
            let ch = build_channel(&c.payload, &sc.positions()).map_err(|e| e.to_string())?;
            println!("user\tx\ty\tcell\tdemand_bps\tdominant\teligible");
            for (n, u) in sc.users.iter().enumerate() {
                let el: Vec<String> = ch.eligible(n).iter().map(|b| b.to_string()).collect();
                println!("{n}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}", u.pos[0], u.pos[1], u.cell, u.demand, ch.dominant(n), el.join(","));
            }
            eprintln!("counts {:?}, demand_std {:.4e} bps", sc.counts(), sc.demand_std());
        }
        Command::Run { common, realizations, output } => {
            let mut c = load(common.config.as_ref())?;
            c.seed = common.seed.unwrap_or(c.seed);
            c.realizations = realizations.unwrap_or(c.realizations).max(1);
            if output.is_some() {
                c.output.dir = output;
            }
            let outcome = run_campaign(&c);
            eprintln!(
                "effective SNR {:.2} dB, capacity {:.3} Gbps",
                outcome.snr.db(),
                outcome.metrics.capacity / 1e9
            );
            let dir = c.output.dir.clone().unwrap_or_else(|| PathBuf::from("results"));
            let files = write_outputs(&outcome, &dir, c.output.cdf, c.output.ga_trace).map_err(|e| e.to_string())?;
            print!("{}", beamflex::harness::output::summary_table(&outcome));
            eprintln!("wrote {} files to {}", files.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
