use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mi_placement::config::{ExperimentConfig, Profile};
use mi_placement::dispersion::ScenarioParams;
use mi_placement::enkf::{assimilate_run, RunOptions};
use mi_placement::harness::{
    bo_config, compare_placements, random_placements, run_grid_placement, PlacementFile,
};
use mi_placement::placement::{build_ensemble, grid_surface, greedy_place, write_surface_csv, StepTrace, SurfacePoint};
use mi_placement::{par, rng, Error, Result};

#[derive(Parser)]
#[command(name = "mi-placement", version, about = "Sensor placement by projected mutual information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// desk or full; overrides ensemble sizes, step counts and evaluation sizes.
    #[arg(long)]
    profile: Option<Profile>,
    /// Replaces every seed in the config with streams derived from this value.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = self.profile {
            cfg.apply_profile(p);
        }
        let cfg = cfg.with_seed(self.seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Method {
    Bo,
    Grid,
}

#[derive(Subcommand)]
enum Command {
    /// Write the effective config as JSON.
    DefaultConfig {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy sensor placement; writes placement JSON plus per-step traces.
    Place {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "bo")]
        method: Method,
    },
    /// Step-1 objective on every grid node.
    GridSurface {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assimilate every (placement, initial condition) pair and rank placements.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Placement JSON files written by `place` (repeatable).
        #[arg(long, required = true)]
        placements: Vec<PathBuf>,
        /// Number of random placements added to the comparison.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long)]
        conditions: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One filter run against a known truth.
    Assimilate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        placements: PathBuf,
        /// Truth release position along the pipeline (km).
        #[arg(long, default_value_t = -1.2917, allow_hyphen_values = true)]
        truth_y_km: f64,
        /// Truth wind direction (degrees).
        #[arg(long, default_value_t = -1.4897, allow_hyphen_values = true)]
        truth_wind_deg: f64,
        /// Posterior trace CSV.
        #[arg(long)]
        out: PathBuf,
        /// Summary CSV; defaults to `<out stem>.summary.csv`.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_placement(path: &Path) -> Result<PlacementFile> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn place(cfg: &ExperimentConfig, out: &Path, method: Method) -> Result<()> {
    let (name, result) = match method {
        Method::Bo => {
            let scenario = cfg.to_scenario()?;
            let ens = build_ensemble(&scenario, cfg.ensemble.placement_members, cfg.seeds.ensemble)?;
            ("bo", greedy_place(&ens, cfg.placement.n_sensors, &bo_config(cfg)?, cfg.min_sep_m())?)
        }
        Method::Grid => ("grid", run_grid_placement(cfg, cfg.placement.n_sensors)?),
    };
    for (i, trace) in result.traces.iter().enumerate() {
        match trace {
            StepTrace::Bo(t) => t.write_csv(create(&sibling(out, &format!(".step{}.csv", i + 1)))?)?,
            StepTrace::Grid(s) => write_surface_csv(create(&sibling(out, &format!(".step{}.csv", i + 1)))?, s)?,
        }
    }
    write_json(out, &PlacementFile::new(name, &result, cfg.seeds.bo, cfg)?)
}

fn surface(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let scenario = cfg.to_scenario()?;
    let ens = build_ensemble(&scenario, cfg.ensemble.placement_members, cfg.seeds.ensemble)?;
    let points: Vec<SurfacePoint> = grid_surface(&ens, &[], &cfg.grid())?
        .into_iter()
        .map(|(p, mi)| SurfacePoint { x: p[0], y: p[1], step: 1, mi })
        .collect();
    write_surface_csv(create(out)?, &points)
}

fn compare(
    cfg: &ExperimentConfig,
    files: &[PathBuf],
    random: Option<usize>,
    conditions: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut placements = Vec::new();
    for f in files {
        let name = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        placements.push((name, read_placement(f)?.locations_m));
    }
    let n_random = random.unwrap_or(cfg.evaluation.random_placements);
    let randoms = random_placements(
        cfg,
        n_random,
        cfg.placement.n_sensors,
        rng::derive_seed(cfg.seeds.evaluation, &[4]),
    )?;
    for (i, locs) in randoms.into_iter().enumerate() {
        placements.push((format!("random_{i:02}"), locs));
    }
    let report = compare_placements(
        cfg,
        &placements,
        conditions.unwrap_or(cfg.evaluation.conditions),
        cfg.seeds.evaluation,
    )?;
    report.write_traces_csv(create(&sibling(out, ".traces.csv"))?)?;
    report.write_conditional_csv(create(&sibling(out, ".conditional.csv"))?)?;
    write_json(out, &report)
}

fn assimilate(
    cfg: &ExperimentConfig,
    file: &Path,
    truth: ScenarioParams,
    out: &Path,
    summary: Option<&Path>,
) -> Result<()> {
    let scenario = cfg.to_scenario()?;
    let sensors = read_placement(file)?.locations_m;
    let opts = RunOptions {
        members: cfg.ensemble.enkf_members,
        inflation: cfg.ensemble.inflation,
        seed: cfg.seeds.assimilation,
    };
    let trace = assimilate_run(&scenario, &sensors, &truth, &opts)?;
    trace.write_csv(create(out)?)?;
    let summary = summary.map(Path::to_path_buf).unwrap_or_else(|| sibling(out, ".summary.csv"));
    trace.write_summary_csv(create(&summary)?, &scenario.knn)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DefaultConfig { common, out } => write_json(&out, &common.load()?),
        Command::Place { common, out, method } => place(&common.load()?, &out, method),
        Command::GridSurface { common, out } => surface(&common.load()?, &out),
        Command::Compare { common, placements, random, conditions, out } => {
            compare(&common.load()?, &placements, random, conditions, &out)
        }
        Command::Assimilate { common, placements, truth_y_km, truth_wind_deg, out, summary } => {
            let truth = ScenarioParams { release_y: truth_y_km * 1000.0, wind_dir: truth_wind_deg.to_radians() };
            assimilate(&common.load()?, &placements, truth, &out, summary.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = par::init_from_env() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
