use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rieszlab::experiment::{
    apply_override, exit_code_for, parse_grid, run_scenario, verify_bundle, RunSummary, ScenarioConfig, Stage,
    EXIT_CHECKS_FAILED, EXIT_OK,
};
use rieszlab::{LabError, Result};

#[derive(Parser)]
#[command(name = "rieszlab", version, about = "Spectral enclosures and Riesz projections for subordinated perturbations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, env = "RIESZLAB_THREADS", default_value_t = 0)]
    threads: usize,
    /// Derive every seed in the config from this one.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build T and B and audit the subordination bound.
    Gen(Common),
    /// Locate cuts and check where the spectrum of A lies.
    Enclosure(Common),
    /// Compute and validate the Riesz projection family.
    Project(Common),
    /// Certify the family of projections as a basis of subspaces.
    Certify(Common),
    /// Move in-gap eigenvalues out of their gaps and pick clear lines.
    Surgery(Common),
    /// Run the stages listed in the config.
    Run(Common),
    /// Run the config once per value of a field.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `path.to.field=v1,v2,...`
        #[arg(long)]
        grid: String,
    },
    /// Re-hash the files of a finished bundle.
    Verify {
        /// Bundle directory.
        dir: PathBuf,
    },
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let cfg = ScenarioConfig::load(&common.config)?;
    Ok(match common.seed_override {
        Some(seed) => cfg.with_seed_override(seed),
        None => cfg,
    })
}

fn out_dir(common: &Common, cfg: &ScenarioConfig) -> PathBuf {
    common.out.clone().unwrap_or_else(|| cfg.output_dir.clone())
}

fn report(summary: &RunSummary, dir: &Path) {
    for c in &summary.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        println!("{mark} [{}] {}: {:.3e} (limit {:.3e})", c.stage.name(), c.name, c.value, c.limit);
    }
    match &summary.failure {
        Some(f) => eprintln!("failed at stage '{}': {}", f.stage.name(), f.message),
        None => println!("bundle written to {}", dir.display()),
    }
}

fn run_one(cfg: &ScenarioConfig, stages: &[Stage], dir: &Path) -> Result<i32> {
    let summary = run_scenario(cfg, stages, dir)?;
    report(&summary, dir);
    Ok(summary.exit_code)
}

fn sweep(common: &Common, grid: &str) -> Result<i32> {
    let (path, values) = parse_grid(grid)?;
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| LabError::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let base: serde_json::Value = serde_json::from_str(&text).map_err(|e| LabError::Config(e.to_string()))?;
    let base_cfg = ScenarioConfig::from_json(&text)?;
    let root = out_dir(common, &base_cfg);
    let mut worst = EXIT_OK;
    for value in values {
        let mut doc = base.clone();
        apply_override(&mut doc, &path, &value)?;
        let mut cfg = ScenarioConfig::from_json(&doc.to_string())?;
        if let Some(seed) = common.seed_override {
            cfg = cfg.with_seed_override(seed);
        }
        let dir = root.join(format!("{path}={value}"));
        println!("== {path} = {value}");
        let code = run_one(&cfg, &cfg.pipeline.clone(), &dir)?;
        worst = worst.max(code);
    }
    Ok(worst)
}

fn execute(command: Command) -> Result<i32> {
    let (common, stages): (Common, Vec<Stage>) = match command {
        Command::Verify { dir } => {
            let problems = verify_bundle(&dir)?;
            for p in &problems {
                eprintln!("{}: {}", p.path, p.problem);
            }
            if problems.is_empty() {
                println!("bundle intact");
                return Ok(EXIT_OK);
            }
            return Ok(EXIT_CHECKS_FAILED);
        }
        Command::Sweep { common, grid } => {
            init_threads(common.threads)?;
            return sweep(&common, &grid);
        }
        Command::Gen(c) => (c, vec![Stage::Generate, Stage::Subordination]),
        Command::Enclosure(c) => (c, vec![Stage::Enclosure]),
        Command::Project(c) => (c, vec![Stage::Validation]),
        Command::Certify(c) => (c, vec![Stage::Basis]),
        Command::Surgery(c) => (c, vec![Stage::Surgery]),
        Command::Run(c) => (c, vec![]),
    };
    init_threads(common.threads)?;
    let cfg = load(&common)?;
    let stages = if stages.is_empty() { cfg.pipeline.clone() } else { stages };
    run_one(&cfg, &stages, &out_dir(&common, &cfg))
}

fn init_threads(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match execute(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    };
    ExitCode::from(code as u8)
}
