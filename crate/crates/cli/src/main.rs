use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rhtp_core::experiment::{run_experiment, RunConfig};
use rhtp_core::planner::plan_from_ptrm;
use rhtp_core::{build_ptrm, load_scene, report, Error};

#[derive(Parser)]
#[command(name = "rhtp", version, about = "Minimum expected energy base-stop planning for mobile manipulation")]
struct Cli {
    /// JSON file with run settings; fields not given keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config file.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for experiments (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one scene and write the plan JSON.
    Plan { scene: PathBuf },
    /// Run both algorithms over the configured scenes and truth draws.
    Experiment,
    /// Dump PTRM fields, the region label map and P for one scene.
    Inspect { scene: PathBuf },
}

enum Failure {
    Input(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        None => RunConfig::default(),
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "scene".to_string(), |s| s.to_string_lossy().into_owned())
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))
}

fn plan(cfg: &RunConfig, scene_path: &Path) -> Result<(), Failure> {
    let scene = load_scene(scene_path)?;
    let planner = cfg.planner(cfg.seed);
    let started = Instant::now();
    let ptrm = build_ptrm(&scene, &cfg.arm, planner.cell_size, planner.mc_samples, planner.seed)?;
    let outcome = plan_from_ptrm(ptrm, scene.start(), scene.goal(), &planner)?;
    let elapsed = started.elapsed();
    create_out(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("{}.plan.json", stem(scene_path)));
    report::write_atomic(&path, outcome.plan.to_json().as_bytes())?;
    println!(
        "kappa={} cost={:.6} planning_time={:.3}s regions={} nodes={} plan={}",
        outcome.plan.kappa,
        outcome.plan.cost,
        elapsed.as_secs_f64(),
        outcome.set.partition.len(),
        outcome.selection.stats.nodes,
        path.display()
    );
    Ok(())
}

fn experiment(cfg: &RunConfig, jobs: usize) -> Result<(), Failure> {
    let started = Instant::now();
    let results = run_experiment(cfg, jobs)?;
    for (scene, cause) in &results.scene_errors {
        eprintln!("warning: scene {scene} failed: {cause}");
    }
    let written = report::write_experiment(&cfg.out_dir, &results, cfg.charts)?;
    print!("{}", report::summary_table(&results.per_setting(results.sweep_axis())));
    println!("{} episodes in {:.1}s", results.rows.len(), started.elapsed().as_secs_f64());
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn inspect(cfg: &RunConfig, scene_path: &Path) -> Result<(), Failure> {
    let scene = load_scene(scene_path)?;
    let planner = cfg.planner(cfg.seed);
    let ptrm = build_ptrm(&scene, &cfg.arm, planner.cell_size, planner.mc_samples, planner.seed)?;
    let set = rhtp_core::PartitionSet::build(&ptrm, scene.start(), scene.goal())?;
    let dir = cfg.out_dir.join(format!("{}_inspect", stem(scene_path)));
    let written = report::write_inspection(&dir, &ptrm, &set)?;
    println!(
        "targets={} regions={} grid={}x{} files={} dir={}",
        ptrm.len(),
        set.partition.len(),
        ptrm.grid().nx,
        ptrm.grid().ny,
        written.len(),
        dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli).and_then(|cfg| match &cli.command {
        Command::Plan { scene } => plan(&cfg, scene),
        Command::Experiment => experiment(&cfg, cli.jobs),
        Command::Inspect { scene } => inspect(&cfg, scene),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
