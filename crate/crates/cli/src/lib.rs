//! Subcommands of the `rankmap` pipeline.
//!
//! Every command computes all of its artifacts in memory first and only
//! then writes them, so a failing command leaves no partial output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rankmap::channel::{rss_mimo, rss_siso, Beamforming};
use rankmap::correlation::{fit_correlation_model, write_bins_csv, CorrelationModel, ModelFile, ZPolicy, RURAL_COEFFICIENTS};
use rankmap::covermap::{
    blockage_fraction, compute_coverage_with, compute_rank_grid_with, joint_coverage, rss_cdf, write_cdf_csv,
    write_grid_csv, write_pgm, CoverageGrid, Mode, RankGrid, SweepOptions,
};
use rankmap::eval::{
    calibrate_offset, loo_evaluate_methods, loo_predictions, rank_histogram, read_trace_csv, LooOptions, Method,
    Trace, TraceSample,
};
use rankmap::kriging::KrigingConfig;
use rankmap::raytrace::{Tracer, DEFAULT_MAX_REFLECTIONS};
use rankmap::scene::{load_scene_file, Grid, Scene};
use rankmap::synth::{generate, FieldSampler, SynthConfig};
use rankmap::{Error, Exec, DEFAULT_THRESHOLDS};

#[derive(Debug, Parser)]
#[command(name = "rankmap", version, about = "Ray-traced coverage, MIMO channel rank and Kriging rank interpolation")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Global {
    /// Scene document (JSON).
    #[arg(long, global = true)]
    pub scene: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Receiver altitudes in meters, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub altitudes: Option<Vec<f64>>,
    /// Singular-value threshold ratios K, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Mimo)]
    pub mode: ModeArg,
    /// Kriging neighbour count.
    #[arg(long, global = true, default_value_t = 20)]
    pub m: usize,
    /// Kriging sampling radius, meters.
    #[arg(long, global = true, default_value_t = 150.0)]
    pub r0: f64,
    /// Correlation pair cutoff, meters.
    #[arg(long = "max-dist", global = true, default_value_t = 500.0)]
    pub max_dist: f64,
    /// Round interpolated ranks to integers before scoring.
    #[arg(long, global = true)]
    pub round: bool,
    #[arg(long = "z-policy", global = true, value_enum, default_value_t = ZPolicyArg::Exclude)]
    pub z_policy: ZPolicyArg,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Run sweeps on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Siso,
    Mimo,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Siso => Mode::Siso,
            ModeArg::Mimo => Mode::Mimo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZPolicyArg {
    Exclude,
    Rank0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Kriging,
    Spline,
    Makima,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// RSS grids and CDFs per tower and altitude.
    Coverage(CoverageArgs),
    /// Channel-rank grids and rank histograms.
    Rank(RankArgs),
    /// Fit the correlation-vs-distance model to a rank grid.
    Fit(FitArgs),
    /// Leave-one-out MAE of Kriging and the index baselines.
    Interpolate(InterpolateArgs),
    /// Offset between measured and simulated traces.
    Calibrate(CalibrateArgs),
    /// Seeded synthetic rank grid with the given correlation model.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Also write the nearest-tower joint grid.
    #[arg(long)]
    pub joint: bool,
    /// Restrict to these tower ids.
    #[arg(long, value_delimiter = ',')]
    pub towers: Option<Vec<u32>>,
    #[arg(long, default_value_t = DEFAULT_MAX_REFLECTIONS)]
    pub max_reflections: usize,
    #[arg(long, default_value_t = -120.0, allow_hyphen_values = true)]
    pub pgm_min: f64,
    #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
    pub pgm_max: f64,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long, default_value_t = DEFAULT_MAX_REFLECTIONS)]
    pub max_reflections: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Rank grid; defaults to `<out>/rank_grid.json`.
    #[arg(long)]
    pub rank_grid: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub rank_grid: Option<PathBuf>,
    /// Correlation model; defaults to `<out>/model.json`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::All)]
    pub method: MethodArg,
    /// Also write the leave-one-out estimate grids.
    #[arg(long)]
    pub export_estimates: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Measured trace CSV.
    #[arg(long)]
    pub measured: PathBuf,
    /// Simulated trace CSV; without it the trace is simulated from `--scene`.
    #[arg(long)]
    pub simulated: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Grid columns; defaults to the scene grid, else 36.
    #[arg(long)]
    pub nx: Option<usize>,
    /// Grid rows; defaults to the scene grid, else 71.
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long, default_value_t = 30.0)]
    pub spacing: f64,
    /// Correlation coefficients c1,c2,c3,c4.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub coefficients: Option<Vec<f64>>,
}

/// Input problems exit with 2, numerical failures with 3.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

/// Files produced by a command, written together at the end.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn add_with(&mut self, name: impl Into<String>, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) {
        let mut buf = Vec::new();
        f(&mut buf).expect("writing to memory cannot fail");
        self.add(name, buf);
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

pub fn run(cli: &Cli) -> Result<Artifacts> {
    let g = &cli.global;
    let artifacts = match &cli.command {
        Command::Coverage(a) => cmd_coverage(g, a)?,
        Command::Rank(a) => cmd_rank(g, a)?,
        Command::Fit(a) => cmd_fit(g, a)?,
        Command::Interpolate(a) => cmd_interpolate(g, a)?,
        Command::Calibrate(a) => cmd_calibrate(g, a)?,
        Command::Synth(a) => cmd_synth(g, a)?,
    };
    artifacts.write(&g.out)?;
    Ok(artifacts)
}

fn exec(g: &Global) -> Exec {
    if g.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    }
}

fn scene(g: &Global) -> Result<Scene> {
    let Some(path) = &g.scene else {
        bail!(Error::Invalid {
            field: "scene".into(),
            message: "--scene is required".into()
        });
    };
    Ok(load_scene_file(path)?)
}

fn thresholds(g: &Global) -> Result<Vec<f64>> {
    let ks = g.thresholds.clone().unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
    if ks.is_empty() || ks.iter().any(|k| !(*k > 1.0) || !k.is_finite()) {
        bail!(Error::Invalid {
            field: "thresholds".into(),
            message: "every threshold must exceed 1".into()
        });
    }
    Ok(ks)
}

fn altitudes(g: &Global, default: &[f64]) -> Result<Vec<f64>> {
    let hs = g.altitudes.clone().unwrap_or_else(|| default.to_vec());
    if hs.is_empty() || hs.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        bail!(Error::Invalid {
            field: "altitudes".into(),
            message: "altitudes must be positive".into()
        });
    }
    if hs.windows(2).any(|w| !(w[1] > w[0])) {
        bail!(Error::Invalid {
            field: "altitudes".into(),
            message: "altitudes must be strictly increasing".into()
        });
    }
    Ok(hs)
}

fn kriging(g: &Global) -> Result<KrigingConfig> {
    let cfg = KrigingConfig { m: g.m, r0: g.r0 };
    cfg.validate()?;
    Ok(cfg)
}

fn z_policy(g: &Global) -> ZPolicy {
    match g.z_policy {
        ZPolicyArg::Exclude => ZPolicy::Exclude,
        ZPolicyArg::Rank0 => ZPolicy::RankZero,
    }
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

fn load_rank_grid(g: &Global, path: &Option<PathBuf>) -> Result<RankGrid> {
    let path = path.clone().unwrap_or_else(|| g.out.join("rank_grid.json"));
    let text = read(&path)?;
    RankGrid::from_json(&text).with_context(|| format!("reading {}", path.display()))
}

fn load_model(g: &Global, path: &Option<PathBuf>) -> Result<CorrelationModel> {
    let path = path.clone().unwrap_or_else(|| g.out.join("model.json"));
    let text = read(&path)?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(file.into())
}

/// Compact number formatting for file names: `30`, `2.5`, `1000`.
fn tag(v: f64) -> String {
    format!("{v}")
}

fn coverage_files(out: &mut Artifacts, name: &str, grid: &CoverageGrid, a: &CoverageArgs) {
    out.add_with(format!("{name}.csv"), |w| write_grid_csv(&grid.grid, &grid.values, w));
    out.add_with(format!("{name}.pgm"), |w| write_pgm(&grid.grid, &grid.values, a.pgm_min, a.pgm_max, w));
    let cdf = rss_cdf(grid);
    out.add_with(format!("cdf_{name}.csv"), |w| write_cdf_csv(&cdf, w));
}

pub fn cmd_coverage(g: &Global, a: &CoverageArgs) -> Result<Artifacts> {
    let scene = scene(g)?;
    let hs = altitudes(g, &[30.0, 70.0, 110.0])?;
    if !(a.pgm_max > a.pgm_min) {
        bail!(Error::Invalid {
            field: "pgm_max".into(),
            message: "must exceed --pgm-min".into()
        });
    }
    let towers: Vec<_> = match &a.towers {
        None => scene.towers.iter().collect(),
        Some(ids) => ids
            .iter()
            .map(|id| {
                scene.tower(*id).ok_or_else(|| Error::Invalid {
                    field: "towers".into(),
                    message: format!("tower {id} not in scene"),
                })
            })
            .collect::<std::result::Result<_, _>>()?,
    };
    let mode: Mode = g.mode.into();
    let opts = SweepOptions {
        max_reflections: a.max_reflections,
        beam: Beamforming::Uniform,
        exec: exec(g),
    };

    let mut out = Artifacts::default();
    let mut summary = String::from("tower,altitude_m,blockage_fraction\n");
    for &h in &hs {
        let mut grids = Vec::new();
        for t in &towers {
            let cov = compute_coverage_with(&scene, t, h, mode, opts)?;
            coverage_files(&mut out, &format!("rss_{}_t{}_h{}", mode.as_str(), t.id, tag(h)), &cov, a);
            summary.push_str(&format!("{},{},{}\n", t.id, tag(h), cov.blockage_fraction()));
            grids.push(cov);
        }
        if a.joint {
            let (joint, serving) = joint_coverage(&scene, &grids)?;
            coverage_files(&mut out, &format!("rss_{}_joint_h{}", mode.as_str(), tag(h)), &joint, a);
            summary.push_str(&format!("joint,{},{}\n", tag(h), joint.blockage_fraction()));
            if h == hs[0] {
                let ids: Vec<Option<u32>> = serving.into_iter().map(Some).collect();
                out.add_with("serving_towers.csv", |w| write_grid_csv(&joint.grid, &ids, w));
            }
        }
    }
    out.add("coverage_summary.csv", summary.into_bytes());
    Ok(out)
}

fn rank_files(out: &mut Artifacts, rg: &RankGrid) {
    out.add("rank_grid.json", rg.to_json().into_bytes());
    let mut summary = String::from("altitude_m,K,blockage_fraction\n");
    for (ai, &h) in rg.altitudes.iter().enumerate() {
        for (ki, &k) in rg.thresholds.iter().enumerate() {
            let slice = rg.slice(ai, ki);
            out.add_with(format!("rank_h{}_K{}.csv", tag(h), tag(k)), |w| write_grid_csv(&rg.grid, slice, w));
            let hist = rank_histogram(rg, ai, ki);
            out.add_with(format!("hist_h{}_K{}.csv", tag(h), tag(k)), |w| hist.write_csv(w));
            summary.push_str(&format!("{},{},{}\n", tag(h), tag(k), blockage_fraction(slice)));
        }
    }
    out.add("rank_summary.csv", summary.into_bytes());
}

pub fn cmd_rank(g: &Global, a: &RankArgs) -> Result<Artifacts> {
    let scene = scene(g)?;
    let hs = altitudes(g, &scene.altitudes)?;
    let ks = thresholds(g)?;
    let opts = SweepOptions {
        max_reflections: a.max_reflections,
        beam: Beamforming::Uniform,
        exec: exec(g),
    };
    let rg = compute_rank_grid_with(&scene, &hs, &ks, opts)?;
    let mut out = Artifacts::default();
    rank_files(&mut out, &rg);
    if !rg.serving.is_empty() {
        let ids: Vec<Option<u32>> = rg.serving.iter().copied().map(Some).collect();
        out.add_with("serving_towers.csv", |w| write_grid_csv(&rg.grid, &ids, w));
    }
    Ok(out)
}

pub fn cmd_fit(g: &Global, a: &FitArgs) -> Result<Artifacts> {
    let rg = load_rank_grid(g, &a.rank_grid)?;
    if !(g.max_dist > 0.0) {
        bail!(Error::Invalid {
            field: "max-dist".into(),
            message: "must be positive".into()
        });
    }
    let model = fit_correlation_model(&rg, z_policy(g), g.max_dist, exec(g))?;
    let mut out = Artifacts::default();
    out.add_with("correlation_bins.csv", |w| write_bins_csv(&model.bins, w));
    let json = serde_json::to_string_pretty(&model.to_file()).expect("model serializes");
    out.add("model.json", json.into_bytes());
    Ok(out)
}

pub fn cmd_interpolate(g: &Global, a: &InterpolateArgs) -> Result<Artifacts> {
    let rg = load_rank_grid(g, &a.rank_grid)?;
    let model = load_model(g, &a.model)?;
    let opts = LooOptions {
        kriging: kriging(g)?,
        round: g.round,
        exec: exec(g),
    };
    let methods: Vec<Method> = match a.method {
        MethodArg::All => Method::ALL.to_vec(),
        MethodArg::Kriging => vec![Method::Kriging],
        MethodArg::Spline => vec![Method::Spline],
        MethodArg::Makima => vec![Method::Makima],
    };
    let report = loo_evaluate_methods(&rg, &methods, &model, &opts);
    let mut out = Artifacts::default();
    out.add_with("mae_report.csv", |w| report.write_csv(w));
    if a.export_estimates {
        for &m in &methods {
            for (ai, &h) in rg.altitudes.iter().enumerate() {
                for (ki, &k) in rg.thresholds.iter().enumerate() {
                    let est = loo_predictions(&rg, ai, ki, m, &model, &opts);
                    let name = format!("est_{}_h{}_K{}.csv", m.as_str(), tag(h), tag(k));
                    out.add_with(name, |w| write_grid_csv(&rg.grid, &est, w));
                }
            }
        }
    }
    Ok(out)
}

/// RSS along the measured trajectory, from each sample's tower or else the
/// nearest tower.
fn simulate_trace(scene: &Scene, measured: &Trace, mode: Mode) -> Result<Trace> {
    let tracer = Tracer::new(scene);
    let samples = measured
        .samples
        .iter()
        .filter_map(|s| {
            let tower = match s.tower {
                Some(id) => scene.tower(id)?,
                None => &scene.towers[scene.nearest_tower([s.position[0], s.position[1]])?],
            };
            let paths = tracer.trace(tower.location(), s.position, DEFAULT_MAX_REFLECTIONS);
            let rss = match mode {
                Mode::Siso => rss_siso(&paths, scene.tx_power_w),
                Mode::Mimo => rss_mimo(
                    &paths,
                    &tower.array,
                    &scene.rx_array,
                    scene.tx_power_w,
                    scene.wavelength(),
                    Beamforming::Uniform,
                ),
            }
            .ok()?;
            Some(TraceSample { value: rss, ..*s })
        })
        .collect();
    Ok(Trace::new(measured.quantity, samples)?)
}

pub fn cmd_calibrate(g: &Global, a: &CalibrateArgs) -> Result<Artifacts> {
    let measured = read_trace_csv(&read(&a.measured)?).with_context(|| format!("reading {}", a.measured.display()))?;
    let simulated = match &a.simulated {
        Some(p) => read_trace_csv(&read(p)?).with_context(|| format!("reading {}", p.display()))?,
        None => simulate_trace(&scene(g)?, &measured, g.mode.into())?,
    };
    if measured.quantity != simulated.quantity {
        bail!(Error::Mismatch("measured and simulated traces carry different quantities".into()));
    }
    let sim_has_towers = simulated.samples.iter().any(|s| s.tower.is_some());
    let mut table = String::from("tower_id,offset_db,rmse_before_db,rmse_after_db,pairs\n");
    for tower in measured.towers() {
        let m = measured.for_tower(tower);
        let s = if sim_has_towers { simulated.for_tower(tower) } else { simulated.clone() };
        let cal = calibrate_offset(&m, &s)?;
        let id = tower.map(|t| t.to_string()).unwrap_or_else(|| "all".into());
        table.push_str(&format!(
            "{id},{:.1},{},{},{}\n",
            cal.offset_db, cal.rmse_before_db, cal.rmse_db, cal.pairs
        ));
    }
    let mut out = Artifacts::default();
    out.add("calibration.csv", table.into_bytes());
    Ok(out)
}

pub fn cmd_synth(g: &Global, a: &SynthArgs) -> Result<Artifacts> {
    let from_scene = match &g.scene {
        Some(_) => Some(scene(g)?.grid()?),
        None => None,
    };
    let grid = match (a.nx, a.ny, from_scene) {
        (None, None, Some(grid)) => grid,
        (nx, ny, _) => Grid {
            nx: nx.unwrap_or(36),
            ny: ny.unwrap_or(71),
            spacing: a.spacing,
        },
    };
    if grid.nx == 0 || grid.ny == 0 || !(grid.spacing > 0.0) {
        bail!(Error::Invalid {
            field: "grid".into(),
            message: "grid must be non-empty with positive spacing".into()
        });
    }
    let coefficients: [f64; 4] = match &a.coefficients {
        None => RURAL_COEFFICIENTS,
        Some(c) => c.as_slice().try_into().map_err(|_| Error::Invalid {
            field: "coefficients".into(),
            message: "expected four values c1,c2,c3,c4".into(),
        })?,
    };
    let hs = altitudes(g, &Scene::default_altitudes())?;
    let ks = thresholds(g)?;
    let sampler = FieldSampler::new(grid, coefficients)?;
    let rg = generate(&sampler, &SynthConfig::new(hs, ks), g.seed)?;
    let mut out = Artifacts::default();
    rank_files(&mut out, &rg);
    Ok(out)
}
