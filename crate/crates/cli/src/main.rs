//! Command-line front end: runs scenarios, convergence studies and property
//! campaigns, writing CSV, SVG and summary files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crowdflow::harness::{convergence_study, property_campaign};
use crowdflow::scenario::{run_scenario, Overrides, ScenarioConfig};

#[derive(Parser, Debug)]
#[command(name = "crowdflow", version, about = "Congested crowd flows by minimising movements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a flow and write trajectory, snapshots and an invariant summary.
    Run(ScenarioArgs),
    /// Convergence study of the front against the continuous solution.
    Study(ScenarioArgs),
    /// Randomised property checks.
    Campaign(CampaignArgs),
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Built-in scenario: fig3, fig4 or saturated.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Time step; a comma-separated halving list for studies.
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    /// Final time.
    #[arg(long = "T")]
    t_final: Option<f64>,
    /// Snapshot times, comma separated.
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
    /// Validate the configuration and stop.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct CampaignArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Randomised cases per property.
    #[arg(long, default_value_t = 200)]
    cases: usize,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    dry_run: bool,
}

type CliResult = Result<bool, String>;

fn load(args: &ScenarioArgs) -> Result<ScenarioConfig, String> {
    let cfg = match (&args.preset, &args.config) {
        (Some(p), None) => ScenarioConfig::preset(p),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            ScenarioConfig::from_toml(&text)
        }
        _ => return Err("give exactly one of --preset or --config".into()),
    };
    cfg.map_err(|e| e.to_string())
}

fn overrides(args: &ScenarioArgs) -> Overrides {
    Overrides {
        taus: args.tau.clone(),
        t_final: args.t_final,
        snapshots: args.snapshots.clone(),
        out: args.out.clone(),
    }
}

fn run(args: &ScenarioArgs) -> CliResult {
    let cfg = load(args)?.for_run(&overrides(args)).map_err(|e| e.to_string())?;
    if args.dry_run {
        println!("config ok: {} steps", cfg.build().map_err(|e| e.to_string())?.steps);
        return Ok(true);
    }
    let out = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let dir = PathBuf::from(cfg.out_dir());
    out.write_to(&dir).map_err(|e| e.to_string())?;
    print!("{}", out.summary.to_text());
    Ok(out.summary.passed())
}

fn study(args: &ScenarioArgs) -> CliResult {
    let cfg = load(args)?.for_study(&overrides(args)).map_err(|e| e.to_string())?;
    if args.dry_run {
        println!("config ok: {} step sizes", cfg.study_taus().len());
        return Ok(true);
    }
    let c = cfg.corridor().map_err(|e| e.to_string())?;
    let report = convergence_study(&c, &cfg.study_taus(), cfg.run.t_final, cfg.study.method).map_err(|e| e.to_string())?;
    let dir = PathBuf::from(cfg.out_dir());
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("study.csv"), report.to_csv()).map_err(|e| e.to_string())?;
    println!("{}", report.summary_line());
    Ok(true)
}

fn campaign(args: &CampaignArgs) -> CliResult {
    if args.dry_run {
        println!("config ok: seed {} with {} cases", args.seed, args.cases);
        return Ok(true);
    }
    let report = property_campaign(args.seed, args.cases);
    if let Some(out) = &args.out {
        let dir = PathBuf::from(out);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        std::fs::write(dir.join("campaign.csv"), report.to_csv()).map_err(|e| e.to_string())?;
    }
    print!("{}", report.to_text());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Study(a) => study(a),
        Command::Campaign(a) => campaign(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
