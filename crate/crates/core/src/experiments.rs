//! Run configuration, initial-data presets, orchestration and artifacts.
use crate::diagnostics::{csv_error, fit_decay, write_csv, DecayFit, DecayModel, Recorder, DEFAULT_TIER};
use crate::equilibrium::{FlowState, Snapshot};
use crate::error::{Error, Result};
use crate::geometry::Params;
use crate::spectral::dump::{write_surface, write_volume};
use crate::spectral::ops::{l2_surface, l2_volume};
use crate::spectral::{Grid, SurfaceField, VectorField, VolumeField};
use crate::stepper::{project_initial_data, run, ProjectionReport, StepConfig, Termination};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// Environment variable naming the directory relative output paths resolve against.
pub const OUTPUT_ROOT_VAR: &str = "SHEARFLOW_OUTPUT_ROOT";

/// Recorded in every summary so presets can be regenerated elsewhere.
pub const GENERATOR: &str = "ChaCha20Rng::seed_from_u64 (rand_chacha 0.9)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    #[serde(default)]
    pub max_order: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub sigma: f64,
    pub gamma: f64,
    pub b: f64,
    pub l1: f64,
    pub l2: f64,
    #[serde(default)]
    pub kinematic_speed: Option<f64>,
}

/// Named initial-data presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// Zero perturbation.
    Equilibrium,
    /// `eta = eps cos(2 pi (k1 x1 / L1 + k2 x2 / L2))`, `u = 0`.
    SingleMode { k: [i64; 2], eps: f64 },
    /// Random surface and velocity built from integer wave numbers with
    /// `max(|k1|, |k2|) <= k_max`, each scaled so its largest nodal value is `eps`.
    RandomBand { seed: u64, k_max: usize, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverConfig {
    /// Steps between diagnostics reports.
    #[serde(default = "default_every")]
    pub every: usize,
    #[serde(default = "default_tier")]
    pub tier: usize,
    /// `N` for the vanishing-surface-tension functional, if wanted.
    #[serde(default)]
    pub g_big_n: Option<usize>,
    /// Decay fits ignore reports before this time.
    #[serde(default = "default_fit_start")]
    pub fit_start: f64,
}

fn default_every() -> usize {
    10
}

fn default_tier() -> usize {
    DEFAULT_TIER
}

fn default_fit_start() -> f64 {
    1.0
}

impl Default for ObserverConfig {
    fn default() -> Self {
        ObserverConfig {
            every: default_every(),
            tier: default_tier(),
            g_big_n: None,
            fit_start: default_fit_start(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Single,
    SigmaSweep,
    GammaSweep,
    Convergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub kind: ExperimentKind,
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub initial: InitialData,
    pub step: StepConfig,
    #[serde(default)]
    pub observer: ObserverConfig,
    /// Relative paths resolve against the output root.
    pub output_dir: PathBuf,
    /// Write binary field dumps at every checkpoint.
    #[serde(default)]
    pub write_fields: bool,
    /// Values for the sweep kinds, and time steps for `convergence`.
    #[serde(default)]
    pub sigmas: Vec<f64>,
    #[serde(default)]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub dts: Vec<f64>,
}

impl RunConfig {
    /// Parse JSON text; errors carry `line:column`.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn build_grid(&self) -> Result<Grid> {
        let g = &self.grid;
        let p = &self.physics;
        let grid = match g.max_order {
            Some(m) => Grid::with_max_order(p.l1, p.l2, p.b, g.n1, g.n2, g.n3, m),
            None => crate::spectral::make_grid(p.l1, p.l2, p.b, g.n1, g.n2, g.n3),
        };
        grid.map_err(|e| Error::Config(e.to_string()))
    }

    pub fn params(&self) -> Params {
        let p = &self.physics;
        let mut out = Params::new(p.sigma, p.gamma, p.b, p.l1, p.l2);
        out.kinematic_speed = p.kinematic_speed;
        out
    }

    /// Every check that can fail before anything is written.
    pub fn validate(&self) -> Result<Grid> {
        let grid = self.build_grid()?;
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.params().validate().map_err(cfg_err)?;
        self.step.validate().map_err(cfg_err)?;
        if self.observer.every == 0 {
            return Err(Error::Config("observer.every must be >= 1".into()));
        }
        if self.observer.tier < 2 {
            return Err(Error::Config("observer.tier must be >= 2".into()));
        }
        match self.initial {
            InitialData::Equilibrium => {}
            InitialData::SingleMode { eps, .. } | InitialData::RandomBand { eps, .. } => {
                if !eps.is_finite() {
                    return Err(Error::Config("initial eps must be finite".into()));
                }
            }
        }
        if let InitialData::RandomBand { k_max, .. } = self.initial {
            if k_max == 0 {
                return Err(Error::Config("random-band k_max must be >= 1".into()));
            }
        }
        match self.kind {
            ExperimentKind::Single => {}
            ExperimentKind::SigmaSweep => check_sweep(&self.sigmas)?,
            ExperimentKind::GammaSweep => {
                if self.gammas.is_empty() || self.gammas.iter().any(|g| !(*g >= 0.0)) {
                    return Err(Error::Config("gamma_sweep needs a nonempty list of gammas >= 0".into()));
                }
            }
            ExperimentKind::Convergence => {
                if self.dts.len() < 2 || self.dts.iter().any(|d| !(*d > 0.0)) {
                    return Err(Error::Config("convergence needs at least two positive dts".into()));
                }
            }
        }
        Ok(grid)
    }

    fn with_sigma(&self, sigma: f64) -> Self {
        let mut c = self.clone();
        c.kind = ExperimentKind::Single;
        c.physics.sigma = sigma;
        c
    }
}

fn check_sweep(sigmas: &[f64]) -> Result<()> {
    if sigmas.last() != Some(&0.0) {
        return Err(Error::Config("sigma list must end with 0".into()));
    }
    if sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Config("sigmas must be >= 0".into()));
    }
    if sigmas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Config("sigmas must be strictly descending".into()));
    }
    Ok(())
}

fn wave(grid: &Grid, k: [i64; 2]) -> (f64, f64) {
    (2.0 * PI * k[0] as f64 / grid.l1, 2.0 * PI * k[1] as f64 / grid.l2)
}

fn normalize(f: &mut ndarray::ArrayViewMutD<f64>, eps: f64) {
    let m = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        f.mapv_inplace(|v| v * eps / m);
    }
}

/// Raw `(u0, eta0)` for a preset, before projection.
pub fn initial_data(grid: &Grid, data: &InitialData) -> Result<(VectorField, SurfaceField)> {
    match *data {
        InitialData::Equilibrium => Ok((VectorField::zeros(grid), SurfaceField::zeros(grid))),
        InitialData::SingleMode { k, eps } => {
            let (w1, w2) = wave(grid, k);
            let eta = SurfaceField::from_fn(grid, |x, y| eps * (w1 * x + w2 * y).cos());
            Ok((VectorField::zeros(grid), eta))
        }
        InitialData::RandomBand { seed, k_max, eps } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let km = k_max as i64;
            let mut modes = Vec::new();
            for k1 in -km..=km {
                for k2 in 0..=km {
                    if k2 == 0 && k1 <= 0 {
                        continue;
                    }
                    modes.push([k1, k2]);
                }
            }
            let mut coef = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
            let band = |c: &[f64], x: f64, y: f64| -> f64 {
                modes
                    .iter()
                    .enumerate()
                    .map(|(i, k)| {
                        let (w1, w2) = wave(grid, *k);
                        let ph = w1 * x + w2 * y;
                        c[2 * i] * ph.cos() + c[2 * i + 1] * ph.sin()
                    })
                    .sum()
            };
            let ce = coef(2 * modes.len());
            let mut eta = SurfaceField::from_fn(grid, |x, y| band(&ce, x, y));
            normalize(&mut eta.v.view_mut().into_dyn(), eps);
            let b = grid.b;
            let comps: Vec<VolumeField> = (0..3)
                .map(|_| {
                    let c = coef(2 * modes.len());
                    // vanishes with its slope at the bottom
                    let mut f = VolumeField::from_fn(grid, |x, y, z| band(&c, x, y) * ((z + b) / b).powi(2));
                    normalize(&mut f.v.view_mut().into_dyn(), eps);
                    f
                })
                .collect();
            let [c1, c2, c3]: [VolumeField; 3] = comps.try_into().expect("three components");
            Ok((VectorField::new(c1, c2, c3), eta))
        }
    }
}

/// Projected initial state for a config.
pub fn initial_state(cfg: &RunConfig, grid: &Grid) -> Result<(FlowState, ProjectionReport)> {
    let (u0, eta0) = initial_data(grid, &cfg.initial)?;
    project_initial_data(&u0, &eta0, &cfg.params(), grid, &cfg.step)
}

/// Resolve `output_dir` against the output root (the environment variable,
/// or the working directory).
pub fn resolve_output(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) => PathBuf::from(root).join(dir),
        None => dir.to_path_buf(),
    }
}

fn prepare_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let nonempty = std::fs::read_dir(dir)?.next().is_some();
        if nonempty && !overwrite {
            return Err(Error::Config(format!(
                "output directory {} is not empty; pass the overwrite flag or choose a fresh directory",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Result of one simulation.
#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub recorder: Recorder,
    pub checkpoints: Vec<Snapshot>,
    pub termination: Termination,
    pub projection: ProjectionReport,
    pub fits: Vec<DecayFit>,
    pub initial_mass: f64,
}

impl RunOutcome {
    pub fn succeeded(&self) -> bool {
        self.termination.completed()
    }

    /// Largest `|int eta(t) - int eta(0)|` over the checkpoints and reports.
    pub fn mass_drift(&self, grid: &Grid) -> f64 {
        let area = grid.area();
        let cp = self.checkpoints.iter().map(|s| s.eta.mean() * area);
        let rp = self.recorder.reports.iter().map(|r| r.mean_eta * area);
        cp.chain(rp).map(|m| (m - self.initial_mass).abs()).fold(0.0, f64::max)
    }
}

/// Simulate one configuration without touching the filesystem.
pub fn simulate(cfg: &RunConfig, grid: &Grid) -> Result<RunOutcome> {
    let params = cfg.params();
    let (state0, projection) = initial_state(cfg, grid)?;
    let initial_mass = state0.eta.mean() * grid.area();
    let mut recorder = Recorder::new(grid, &params, cfg.observer.tier, cfg.observer.every)?;
    if let Some(n) = cfg.observer.g_big_n {
        recorder = recorder.with_g(n)?;
    }
    let mut step = cfg.step;
    step.checkpoint_every.get_or_insert(cfg.observer.every);
    let traj = run(state0, &step, &params, grid, &mut [&mut recorder])?;
    let series = recorder.energy_series();
    let fits = [DecayModel::Exponential, DecayModel::Algebraic]
        .into_iter()
        .filter_map(|m| fit_decay(&series, m, cfg.observer.fit_start).ok())
        .collect();
    Ok(RunOutcome {
        dir: PathBuf::new(),
        recorder,
        checkpoints: traj.checkpoints,
        termination: traj.termination,
        projection,
        fits,
        initial_mass,
    })
}

fn termination_json(t: &Termination) -> serde_json::Value {
    json!({
        "completed": t.completed(),
        "steps": t.steps,
        "t_final": t.t_final,
        "last_good_time": t.last_good_time,
        "error": t.error.as_ref().map(|e| e.to_string()),
    })
}

/// One dump per field per snapshot, plus `manifest.json` listing them.
fn write_fields(dir: &Path, grid: &Grid, snaps: &[Snapshot]) -> Result<()> {
    let mut entries = Vec::with_capacity(snaps.len());
    for (i, s) in snaps.iter().enumerate() {
        let mut files = serde_json::Map::new();
        let mut dump = |name: &str, write: &dyn Fn(&mut std::io::BufWriter<std::fs::File>) -> Result<()>| -> Result<()> {
            let file = format!("{name}_{i:05}.bin");
            let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(&file))?);
            write(&mut w)?;
            files.insert(name.to_string(), json!(file));
            Ok(())
        };
        for (k, c) in s.u.c.iter().enumerate() {
            dump(&format!("u{}", k + 1), &|w| write_volume(w, grid, c))?;
        }
        dump("p", &|w| write_volume(w, grid, &s.p))?;
        dump("eta", &|w| write_surface(w, grid, &s.eta))?;
        entries.push(json!({"index": i, "t": s.t, "files": files}));
    }
    let manifest = json!({"format": "SFLB", "snapshots": entries});
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn summary_json(cfg: &RunConfig, grid: &Grid, out: &RunOutcome) -> serde_json::Value {
    let max_energy = out.recorder.reports.iter().map(|r| r.energy.full).fold(0.0, f64::max);
    let max_budget = out.recorder.reports.iter().map(|r| r.budget_flattened.abs()).fold(0.0, f64::max);
    let k_ratio = out
        .recorder
        .reports
        .iter()
        .filter(|r| r.energy.full > 0.0)
        .map(|r| r.k / r.energy.full)
        .fold(0.0, f64::max);
    json!({
        "config": cfg,
        "code_version": env!("CARGO_PKG_VERSION"),
        "generator": GENERATOR,
        "termination": termination_json(&out.termination),
        "projection": {
            "displacement": out.projection.displacement,
            "iterations": out.projection.iterations,
            "divergence": out.projection.divergence,
            "bottom_slip": out.projection.bottom_slip,
            "removed_mean": out.projection.removed_mean,
        },
        "reports": out.recorder.reports.len(),
        "skipped_reports": out.recorder.skipped,
        "max_energy": max_energy,
        "max_budget_residual_flattened": max_budget,
        "max_k_over_energy": k_ratio,
        "mass_drift": out.mass_drift(grid),
        "fits": out.fits,
        "final_g": out.recorder.reports.last().and_then(|r| r.g),
        "c2_norm_note": "K uses the largest collocation value, a lower bound of the sup norm",
    })
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

/// Run a single configuration and write `diagnostics.csv` and `summary.json`
/// (and field dumps if asked) into `dir`.
fn run_single(cfg: &RunConfig, grid: &Grid, dir: &Path, overwrite: bool) -> Result<RunOutcome> {
    let mut out = simulate(cfg, grid)?;
    prepare_dir(dir, overwrite)?;
    write_csv(&out.recorder.reports, &dir.join("diagnostics.csv"))?;
    if cfg.write_fields {
        write_fields(dir, grid, &out.checkpoints)?;
    }
    write_json(&dir.join("summary.json"), &summary_json(cfg, grid, &out))?;
    out.dir = dir.to_path_buf();
    info!("wrote {}", dir.display());
    Ok(out)
}

/// One row of a sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub delta: f64,
}

/// `delta_m` per sigma plus whether the values decrease strictly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub strictly_decreasing: bool,
    /// Set when a member run failed; rows hold the members before it.
    pub aborted: Option<String>,
}

/// `sup_t (||u_a - u_b|| + ||eta_a - eta_b||)` over checkpoints present in both.
pub fn trajectory_distance(grid: &Grid, a: &[Snapshot], b: &[Snapshot]) -> f64 {
    let mut sup = 0.0f64;
    for sa in a {
        if let Some(sb) = b.iter().find(|s| (s.t - sa.t).abs() <= 1e-9 * (1.0 + sa.t.abs())) {
            let mut du = 0.0;
            for c in 0..3 {
                let d = &sa.u.c[c] - &sb.u.c[c];
                du += l2_volume(grid, &d).powi(2);
            }
            let de = l2_surface(grid, &(&sa.eta - &sb.eta));
            sup = sup.max(du.sqrt() + de);
        }
    }
    sup
}

/// Runs every member, then measures each against the last (`sigma = 0`).
/// Members must share the grid and initial data.
pub fn sweep_members(members: &[RunConfig], dir: Option<&Path>, overwrite: bool) -> Result<SweepTable> {
    let first = members.first().ok_or_else(|| Error::Config("empty sweep".into()))?;
    let grid = first.validate()?;
    let sigmas: Vec<f64> = members.iter().map(|m| m.physics.sigma).collect();
    check_sweep(&sigmas)?;
    for m in &members[1..] {
        m.validate()?;
        if m.grid != first.grid
            || (m.physics.b, m.physics.l1, m.physics.l2) != (first.physics.b, first.physics.l1, first.physics.l2)
        {
            return Err(Error::Config("sweep members use different grids".into()));
        }
        if m.initial != first.initial {
            return Err(Error::Config("sweep members use different initial data".into()));
        }
    }
    if let Some(d) = dir {
        prepare_dir(d, overwrite)?;
    }
    let mut runs: Vec<(f64, RunOutcome)> = Vec::new();
    let mut aborted = None;
    for m in members {
        let res = match dir {
            Some(d) => run_single(m, &grid, &d.join(format!("sigma_{}", m.physics.sigma)), overwrite),
            None => simulate(m, &grid),
        };
        match res {
            Ok(out) if out.succeeded() => runs.push((m.physics.sigma, out)),
            Ok(out) => {
                aborted = Some(format!(
                    "sigma = {}: {}",
                    m.physics.sigma,
                    out.termination.error.map(|e| e.to_string()).unwrap_or_default()
                ));
                break;
            }
            Err(e) => {
                aborted = Some(format!("sigma = {}: {e}", m.physics.sigma));
                break;
            }
        }
    }
    let rows: Vec<SweepRow> = match runs.last() {
        Some((s0, reference)) if *s0 == 0.0 => runs
            .iter()
            .map(|(s, o)| SweepRow {
                sigma: *s,
                delta: trajectory_distance(&grid, &o.checkpoints, &reference.checkpoints),
            })
            .collect(),
        // without the reference only the sigmas that ran can be listed
        _ => runs.iter().map(|(s, _)| SweepRow { sigma: *s, delta: f64::NAN }).collect(),
    };
    let deltas: Vec<f64> = rows.iter().filter(|r| r.sigma > 0.0).map(|r| r.delta).collect();
    let table = SweepTable {
        strictly_decreasing: aborted.is_none() && deltas.windows(2).all(|w| w[1] < w[0]),
        rows,
        aborted,
    };
    if let Some(d) = dir {
        write_sweep_csv(&table, &d.join("sweep.csv"))?;
        write_json(&d.join("sweep.json"), &json!(table))?;
    }
    Ok(table)
}

/// The sigma sweep for a base configuration.
pub fn sweep_sigma(base: &RunConfig, sigmas: &[f64], dir: Option<&Path>, overwrite: bool) -> Result<SweepTable> {
    check_sweep(sigmas)?;
    let members: Vec<RunConfig> = sigmas.iter().map(|s| base.with_sigma(*s)).collect();
    sweep_members(&members, dir, overwrite)
}

pub fn write_sweep_csv(table: &SweepTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["sigma", "delta"]).map_err(csv_error)?;
    for r in &table.rows {
        w.write_record([format!("{:e}", r.sigma), format!("{:e}", r.delta)])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// What a config run produced.
#[derive(Debug)]
pub enum Artifacts {
    Single(RunOutcome),
    Sweep(SweepTable),
    /// `(value, outcome)` per member of a gamma sweep or convergence study.
    Series(Vec<(f64, RunOutcome)>),
}

impl Artifacts {
    /// False when any member stopped early.
    pub fn succeeded(&self) -> bool {
        match self {
            Artifacts::Single(o) => o.succeeded(),
            Artifacts::Sweep(t) => t.aborted.is_none(),
            Artifacts::Series(v) => v.iter().all(|(_, o)| o.succeeded()),
        }
    }
}

/// Validate, then run the configured experiment under its output directory.
/// Nothing is created when validation fails.
pub fn run_experiment(cfg: &RunConfig, overwrite: bool) -> Result<Artifacts> {
    let grid = cfg.validate()?;
    let dir = resolve_output(&cfg.output_dir);
    if dir.exists() && std::fs::read_dir(&dir)?.next().is_some() && !overwrite {
        return Err(Error::Config(format!(
            "output directory {} is not empty; pass the overwrite flag or choose a fresh directory",
            dir.display()
        )));
    }
    match cfg.kind {
        ExperimentKind::Single => Ok(Artifacts::Single(run_single(cfg, &grid, &dir, overwrite)?)),
        ExperimentKind::SigmaSweep => Ok(Artifacts::Sweep(sweep_sigma(cfg, &cfg.sigmas, Some(&dir), overwrite)?)),
        ExperimentKind::GammaSweep | ExperimentKind::Convergence => {
            let (label, values) = match cfg.kind {
                ExperimentKind::GammaSweep => ("gamma", &cfg.gammas),
                _ => ("dt", &cfg.dts),
            };
            prepare_dir(&dir, overwrite)?;
            let mut members = Vec::new();
            let mut w = csv::Writer::from_path(dir.join(format!("{label}_table.csv"))).map_err(csv_error)?;
            w.write_record([label, "lambda_exp", "r2_exp", "final_energy", "final_budget_flattened", "completed"])
                .map_err(csv_error)?;
            for &v in values {
                let mut m = cfg.clone();
                m.kind = ExperimentKind::Single;
                if label == "gamma" {
                    m.physics.gamma = v;
                } else {
                    m.step.dt = v;
                    m.observer.every = ((cfg.observer.every as f64) * cfg.step.dt / v).round().max(1.0) as usize;
                }
                let out = run_single(&m, &grid, &dir.join(format!("{label}_{v}")), overwrite)?;
                let exp = out.fits.iter().find(|f| f.model == DecayModel::Exponential);
                let last = out.recorder.reports.last();
                w.write_record([
                    format!("{v:e}"),
                    exp.map(|f| format!("{:e}", f.rate)).unwrap_or_default(),
                    exp.map(|f| format!("{:e}", f.r_squared)).unwrap_or_default(),
                    last.map(|r| format!("{:e}", r.energy.full)).unwrap_or_default(),
                    last.map(|r| format!("{:e}", r.budget_flattened)).unwrap_or_default(),
                    out.succeeded().to_string(),
                ])
                .map_err(csv_error)?;
                let stop = !out.succeeded();
                members.push((v, out));
                if stop {
                    break;
                }
            }
            w.flush()?;
            Ok(Artifacts::Series(members))
        }
    }
}

/// One invariant check of the `verify` suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value.is_finite() && value <= tolerance,
        }
    }
}

/// Fast invariant checks on small grids: equilibrium residual, the Piola
/// identity, modewise capillary inversion, a short equilibrium run and
/// mean conservation on a short perturbed run.
pub fn verify_suite() -> Result<Vec<Check>> {
    use crate::elliptic::solve_capillary;
    use crate::equilibrium::equilibrium_residual;
    use crate::geometry::{build_geometry, piola_defect};
    use crate::spectral::make_grid;
    use crate::spectral::ops::surface_laplacian;

    let mut checks = Vec::new();
    let grid = make_grid(2.0 * PI, 2.0 * PI, 1.0, 16, 16, 17)?;
    let params = Params::for_grid(&grid, 1.0, 0.5);
    checks.push(Check::new("equilibrium residual", equilibrium_residual(&params, &grid)?.max(), 1e-10));

    let fine = make_grid(2.0 * PI, 2.0 * PI, 1.0, 8, 8, 33)?;
    let eta = SurfaceField::from_fn(&fine, |x, y| 0.05 * (x.cos() + (2.0 * y).sin()));
    let cache = build_geometry(&eta, None, &fine, &Params::for_grid(&fine, 1.0, 0.5))?;
    let piola = piola_defect(&fine, &cache).iter().map(|d| d.max_abs()).fold(0.0, f64::max);
    checks.push(Check::new("piola identity", piola, 1e-8));

    let f = SurfaceField::from_fn(&grid, |x, y| (x + y).sin() + 0.5 * (3.0 * x).cos());
    let (sigma, g) = (0.7, 1.0);
    let psi = solve_capillary(&grid, &f, sigma, g)?;
    let back = &(&psi * g) - &(&surface_laplacian(&grid, &psi) * sigma);
    checks.push(Check::new("capillary inversion", (&back - &f).max_abs() / f.max_abs(), 1e-12));

    let small = |initial: InitialData, t_end: f64| -> RunConfig {
        RunConfig {
            name: None,
            kind: ExperimentKind::Single,
            grid: GridConfig {
                n1: 8,
                n2: 8,
                n3: 9,
                max_order: None,
            },
            physics: PhysicsConfig {
                sigma: 1.0,
                gamma: 0.5,
                b: 1.0,
                l1: 2.0 * PI,
                l2: 2.0 * PI,
                kinematic_speed: None,
            },
            initial,
            step: StepConfig::new(1e-2, t_end),
            observer: ObserverConfig {
                every: 1,
                ..Default::default()
            },
            output_dir: PathBuf::new(),
            write_fields: false,
            sigmas: vec![],
            gammas: vec![],
            dts: vec![],
        }
    };
    let eq = small(InitialData::Equilibrium, 0.1);
    let g8 = eq.validate()?;
    let out = simulate(&eq, &g8)?;
    let e_max = out.recorder.reports.iter().map(|r| r.energy.full).fold(0.0, f64::max);
    checks.push(Check::new("equilibrium stays fixed", if out.succeeded() { e_max } else { f64::NAN }, 1e-16));

    let pert = small(
        InitialData::RandomBand {
            seed: 1,
            k_max: 2,
            eps: 1e-3,
        },
        0.2,
    );
    let out = simulate(&pert, &g8)?;
    let drift = if out.succeeded() { out.mass_drift(&g8) } else { f64::NAN };
    checks.push(Check::new("surface mean conserved", drift, 1e-10));
    Ok(checks)
}
