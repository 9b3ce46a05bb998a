//! Experiment dispatch, report files and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use plrds_core::analysis::{
    absorbing_bound, absorbing_check, energy_audit, estimate_attractor, initial_ball, periodicity_check, tail_check,
    usc_sweep, RadiusOptions,
};
use plrds_core::integrator::record_trajectory;
use plrds_core::problem::{alpha_zero, check_growth_condition, validate_structure, SampleRanges};
use plrds_core::{Error as CoreError, Field, NoiseCase, NoiseSource, Stepper};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, FieldDump, RunConfig};
use crate::formats::{write_field_binary, write_field_csv, write_json, Cell, FormatError, Table};
use crate::pool::RayonPool;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskStatus {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl TaskStatus {
    fn new(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            status: if ok { Status::Ok } else { Status::Failed },
            detail: detail.into(),
        }
    }

    fn error(name: &str, e: CoreError) -> Self {
        Self::new(name, false, e.to_string())
    }
}

/// Written to `manifest.json` before a run starts and rewritten when it ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub version: String,
    pub status: Status,
    pub config: BTreeMap<String, BTreeMap<String, String>>,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub wall_clock_seconds: Option<f64>,
    pub tasks: Vec<TaskStatus>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn succeeded(&self) -> bool {
        self.status == Status::Ok
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

struct Outputs<'a> {
    dir: PathBuf,
    cfg: &'a RunConfig,
    files: Vec<String>,
    tables: serde_json::Map<String, Value>,
}

impl Outputs<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn table(&mut self, t: &Table) -> Result<(), FormatError> {
        if self.cfg.output.csv {
            let p = self.path(&format!("{}.csv", t.name));
            t.write_csv(&p)?;
        }
        self.tables.insert(t.name.clone(), t.to_json());
        Ok(())
    }

    fn field(&mut self, name: &str, f: &Field) -> Result<(), FormatError> {
        match self.cfg.output.field_dump {
            FieldDump::None => Ok(()),
            FieldDump::Csv => {
                let p = self.path(&format!("{name}.csv"));
                write_field_csv(&p, f)
            }
            FieldDump::Binary => {
                let p = self.path(&format!("{name}.bin"));
                write_field_binary(&p, f)
            }
        }
    }
}

/// Runs one experiment, writing its reports and manifest into
/// `<output.directory>/<experiment>/`.
///
/// Numerical failures and failed checks are recorded as failed tasks; only
/// file-system problems are returned as errors.
pub fn run_experiment(cfg: &RunConfig, experiment: Experiment, pool: &RayonPool) -> Result<RunManifest, FormatError> {
    let dir = cfg.output.directory.join(experiment.name());
    fs::create_dir_all(&dir).map_err(|source| FormatError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let clock = Instant::now();
    let mut manifest = RunManifest {
        experiment: experiment.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        status: Status::Running,
        config: cfg.resolved(),
        seeds: cfg.seeds(),
        workers: pool.workers(),
        started_unix: unix_now(),
        finished_unix: None,
        wall_clock_seconds: None,
        tasks: Vec::new(),
        warnings: warnings(cfg),
        files: Vec::new(),
    };
    let manifest_path = dir.join("manifest.json");
    write_manifest(&manifest_path, &manifest)?;

    let mut out = Outputs {
        dir: dir.clone(),
        cfg,
        files: Vec::new(),
        tables: serde_json::Map::new(),
    };
    fs::write(out.path("config.ini"), cfg.to_ini()).map_err(|source| FormatError::Io {
        path: dir.join("config.ini").display().to_string(),
        source,
    })?;
    let (tasks, summary) = match experiment {
        Experiment::Validate => validate(cfg, &mut out)?,
        Experiment::Simulate => simulate(cfg, &mut out)?,
        Experiment::CocycleTest => cocycle_test(cfg, &mut out)?,
        Experiment::EnergyAudit => energy(cfg, &mut out)?,
        Experiment::AbsorbCheck => absorb(cfg, pool, &mut out)?,
        Experiment::TailCheck => tail(cfg, pool, &mut out)?,
        Experiment::EstimateAttractor => attractor(cfg, pool, &mut out)?,
        Experiment::UscSweep => usc(cfg, pool, &mut out)?,
        Experiment::PeriodicityCheck => periodicity(cfg, pool, &mut out)?,
    };
    if cfg.output.json {
        let mut echo = cfg.resolved();
        if let Some(o) = echo.get_mut("output") {
            o.remove("directory");
        }
        let report = json!({
            "experiment": experiment.name(),
            "config": echo,
            "seeds": cfg.seeds(),
            "summary": summary,
            "tables": Value::Object(std::mem::take(&mut out.tables)),
        });
        let p = out.path("report.json");
        write_json(&p, &report)?;
    }

    manifest.status = if tasks.iter().all(|t| t.status == Status::Ok) {
        Status::Ok
    } else {
        Status::Failed
    };
    manifest.tasks = tasks;
    manifest.files = out.files;
    manifest.finished_unix = Some(unix_now());
    manifest.wall_clock_seconds = Some(clock.elapsed().as_secs_f64());
    write_manifest(&manifest_path, &manifest)?;
    Ok(manifest)
}

fn write_manifest(path: &Path, m: &RunManifest) -> Result<(), FormatError> {
    write_json(path, &serde_json::to_value(m).expect("manifest serializes"))
}

fn warnings(cfg: &RunConfig) -> Vec<String> {
    let p = &cfg.problem;
    let mut w = Vec::new();
    if p.noise_case == NoiseCase::Additive {
        let a0 = alpha_zero(p.lambda, p.eta.mean());
        if p.alpha > a0 {
            w.push(format!(
                "alpha = {} exceeds alpha_0 = {a0}; absorbing bounds are not guaranteed",
                p.alpha
            ));
        }
    }
    w
}

type Outcome = Result<(Vec<TaskStatus>, Value), FormatError>;

fn radius_options(cfg: &RunConfig) -> RadiusOptions {
    RadiusOptions {
        c: cfg.experiment.calibration_c,
        quad_tol: cfg.experiment.quad_tol,
        quad_dt: cfg.experiment.quad_dt,
    }
}

fn initials(cfg: &RunConfig, count: usize) -> Vec<Field> {
    initial_ball(&cfg.grid, cfg.experiment.initial_radius, count, cfg.noise.seed)
}

fn last_horizon(cfg: &RunConfig) -> f64 {
    *cfg.experiment.horizons.last().expect("validated horizons")
}

fn validate(cfg: &RunConfig, out: &mut Outputs) -> Outcome {
    let e = &cfg.experiment;
    let ranges = SampleRanges {
        t: (e.tau - 2.0, e.tau + 2.0),
        x_half_width: cfg.grid.half_width(),
        dim: cfg.grid.dim(),
        seed: cfg.noise.seed,
        ..SampleRanges::default()
    };
    let rep = validate_structure(&cfg.problem, e.sample_count, &ranges);
    let mut t = Table::new("validation", &["condition", "t", "x", "y", "s", "excess"]);
    for v in &rep.violations {
        t.push(vec![
            Cell::S(format!("{:?}", v.condition)),
            v.t.into(),
            v.x[0].into(),
            v.x[1].into(),
            v.s.into(),
            v.excess.into(),
        ]);
    }
    out.table(&t)?;
    let growth = check_growth_condition(&cfg.problem, &cfg.grid, e.tau, e.quad_dt);
    let tasks = vec![
        TaskStatus::new(
            "structure",
            rep.violations.is_empty(),
            format!("{} violations in {} samples", rep.violations.len(), rep.samples),
        ),
        TaskStatus::new(
            "growth",
            growth.finite,
            format!(
                "forcing growth integral {:.6e} (finite: {})",
                growth.value, growth.finite
            ),
        ),
    ];
    let summary = json!({
        "samples": rep.samples,
        "violations": rep.violations.len(),
        "growth_integral": growth.value,
        "growth_finite": growth.finite,
        "alpha_zero": alpha_zero(cfg.problem.lambda, cfg.problem.eta.mean()),
    });
    Ok((tasks, summary))
}

fn simulate(cfg: &RunConfig, out: &mut Outputs) -> Outcome {
    let e = &cfg.experiment;
    let u0 = initials(cfg, 1).remove(0);
    let omega = cfg.noise.path(cfg.noise.seed);
    let every = (e.snapshot_every > 0).then_some(e.snapshot_every);
    let run = Stepper::new(&cfg.problem, &cfg.grid, &cfg.stepper)
        .and_then(|mut st| record_trajectory(&mut st, &omega, e.tau, e.duration, &u0, every));
    let (end, rec) = match run {
        Ok(r) => r,
        Err(err) => return Ok((vec![TaskStatus::error("simulate", err)], Value::Null)),
    };
    let mut t = Table::new("trajectory", &["t", "l2_sq", "grad_p_norm", "q_norm", "z_t", "eta_t"]);
    for i in 0..rec.times.len() {
        t.push(vec![
            rec.times[i].into(),
            rec.l2_sq[i].into(),
            rec.grad_p[i].into(),
            rec.q_pow[i].into(),
            rec.z[i].into(),
            rec.eta[i].into(),
        ]);
    }
    out.table(&t)?;
    out.field("initial", &u0)?;
    out.field("final", &end)?;
    for (k, (_, snap)) in rec.snapshots.iter().enumerate() {
        out.field(&format!("snapshot_{k:05}"), snap)?;
    }
    let detail = format!("{} steps, final |u|^2 = {:.6e}", rec.times.len(), end.l2_sq());
    Ok((
        vec![TaskStatus::new("simulate", true, detail)],
        json!({"steps": rec.times.len(), "final_l2_sq": end.l2_sq()}),
    ))
}

fn max_abs_diff(a: &Field, b: &Field) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn cocycle_test(cfg: &RunConfig, out: &mut Outputs) -> Outcome {
    let tau = cfg.experiment.tau;
    let mut st = match Stepper::new(&cfg.problem, &cfg.grid, &cfg.stepper) {
        Ok(s) => s,
        Err(e) => return Ok((vec![TaskStatus::error("cocycle", e)], Value::Null)),
    };
    let mut identity: f64 = 0.0;
    let mut composition: f64 = 0.0;
    let mut pairs = 0;
    for seed in cfg.seeds() {
        let omega = cfg.noise.path(seed);
        let u = initial_ball(&cfg.grid, cfg.experiment.initial_radius, 1, seed).remove(0);
        let mut check = || -> Result<(), CoreError> {
            identity = identity.max(max_abs_diff(&st.run(&omega, tau, 0.0, &u)?, &u));
            for (s, t) in [(1.0, 1.0), (2.0, 3.0)] {
                let whole = st.run(&omega, tau, s + t, &u)?;
                let first = st.run(&omega, tau, s, &u)?;
                let second = st.run(&omega.shift(s), tau + s, t, &first)?;
                composition = composition.max(max_abs_diff(&whole, &second));
                pairs += 1;
            }
            Ok(())
        };
        if let Err(e) = check() {
            return Ok((vec![TaskStatus::error("cocycle", e)], Value::Null));
        }
    }
    let mut t = Table::new("cocycle", &["identity_residual", "max_composition_residual"]);
    t.push(vec![identity.into(), composition.into()]);
    out.table(&t)?;
    let ok = identity == 0.0 && composition == 0.0;
    let detail = format!("identity residual {identity:e}, composition residual {composition:e} over {pairs} pairs");
    Ok((
        vec![TaskStatus::new("cocycle", ok, detail)],
        json!({"identity_residual": identity, "max_composition_residual": composition, "pairs": pairs}),
    ))
}

fn energy(cfg: &RunConfig, out: &mut Outputs) -> Outcome {
    let e = &cfg.experiment;
    let u0 = initials(cfg, 1).remove(0);
    let omega = cfg.noise.path(cfg.noise.seed);
    let audit = match Stepper::new(&cfg.problem, &cfg.grid, &cfg.stepper)
        .and_then(|mut st| energy_audit(&mut st, &omega, e.tau, e.duration, &u0))
    {
        Ok(a) => a,
        Err(err) => return Ok((vec![TaskStatus::error("energy", err)], Value::Null)),
    };
    let mut t = Table::new("energy", &["t", "l2_sq", "grad_p", "q_norm", "z", "eta", "residual"]);
    for r in &audit.rows {
        t.push(vec![
            r.t.into(),
            r.l2_sq.into(),
            r.grad_p.into(),
            r.q_norm.into(),
            r.z.into(),
            r.eta.into(),
            r.residual.into(),
        ]);
    }
    out.table(&t)?;
    let inequality = cfg.problem.noise_case == NoiseCase::Multiplicative;
    let detail = if inequality {
        format!(
            "{} inequality violations, largest excess {:.3e}",
            audit.violations, audit.max_residual
        )
    } else {
        format!("largest identity residual {:.3e}", audit.max_residual)
    };
    Ok((
        vec![TaskStatus::new("energy", audit.violations == 0, detail)],
        json!({"max_residual": audit.max_residual, "violations": audit.violations, "steps": audit.rows.len()}),
    ))
}

fn absorb(cfg: &RunConfig, pool: &RayonPool, out: &mut Outputs) -> Outcome {
    let e = &cfg.experiment;
    let rep = match absorbing_check(
        pool,
        &cfg.problem,
        &cfg.grid,
        &cfg.stepper,
        &cfg.noise.path(cfg.noise.seed),
        &cfg.seeds(),
        e.tau,
        &e.horizons,
        &initials(cfg, e.n_initials),
        &radius_options(cfg),
    ) {
        Ok(r) => r,
        Err(err) => return Ok((vec![TaskStatus::error("absorbing", err)], Value::Null)),
    };
    let mut t = Table::new(
        "absorbing",
        &["seed", "horizon", "endpoint_l2_sq", "bound", "satisfied"],
    );
    for r in &rep.rows {
        t.push(vec![
            r.seed.into(),
            r.horizon.into(),
            r.endpoint_l2_sq.into(),
            r.bound.into(),
            r.satisfied.into(),
        ]);
    }
    out.table(&t)?;
    let held = rep.per_path.iter().filter(|v| v.satisfied).count();
    let detail = match rep.entry_time {
        Some(h) => format!(
            "{held}/{} paths inside the bound, entry by horizon {h}",
            rep.per_path.len()
        ),
        None => format!(
            "{held}/{} paths inside the bound at the largest horizon",
            rep.per_path.len()
        ),
    };
    Ok((
        vec![TaskStatus::new("absorbing", held == rep.per_path.len(), detail)],
        json!({
            "radius_sq": rep.radius_sq,
            "entry_time": rep.entry_time,
            "per_path": rep.per_path.iter().map(|v| json!({"seed": v.seed, "satisfied": v.satisfied, "margin": v.margin})).collect::<Vec<_>>(),
        }),
    ))
}

fn tail(cfg: &RunConfig, pool: &RayonPool, out: &mut Outputs) -> Outcome {
    let e = &cfg.experiment;
    let rep = match tail_check(
        pool,
        &cfg.problem,
        &cfg.grid,
        &cfg.stepper,
        &cfg.noise.path(cfg.noise.seed),
        &cfg.seeds(),
        e.tau,
        last_horizon(cfg),
        &e.k_list,
        e.sigma_count,
        &initials(cfg, 1)[0],
    ) {
        Ok(r) => r,
        Err(err) => return Ok((vec![TaskStatus::error("tail", err)], Value::Null)),
    };
    let mut t = Table::new("tail", &["seed", "k", "sigma", "tail_mass"]);
    for r in &rep.rows {
        t.push(vec![r.seed.into(), r.k.into(), r.sigma.into(), r.tail_mass.into()]);
    }
    out.table(&t)?;
    let detail = format!(
        "tail mass nonincreasing in k: {}, largest ratio at the outermost k {:.3e}",
        rep.monotone,
        rep.max_ratio.last().copied().unwrap_or(0.0)
    );
    Ok((
        vec![TaskStatus::new("tail", rep.monotone, detail)],
        json!({"k": e.k_list, "max_ratio": rep.max_ratio, "monotone": rep.monotone}),
    ))
}

fn attractor(cfg: &RunConfig, pool: &RayonPool, out: &mut Outputs) -> Outcome {
    let e = &cfg.experiment;
    let omega = cfg.noise.path(cfg.noise.seed);
    let run = absorbing_bound(&cfg.problem, &cfg.grid, &omega, e.tau, &radius_options(cfg)).and_then(|bound| {
        let tol = e.cluster_tol_factor * bound.sqrt();
        estimate_attractor(
            pool,
            &cfg.problem,
            &cfg.grid,
            &cfg.stepper,
            &omega,
            e.tau,
            last_horizon(cfg),
            &initials(cfg, e.n_initials),
            tol,
        )
        .map(|est| (est, tol))
    });
    let (est, tol) = match run {
        Ok(r) => r,
        Err(err) => return Ok((vec![TaskStatus::error("attractor", err)], Value::Null)),
    };
    let mut t = Table::new("attractor", &["member", "l2_sq"]);
    for (i, m) in est.ensemble.members().iter().enumerate() {
        t.push(vec![i.into(), m.l2_sq().into()]);
        out.field(&format!("member_{i:04}"), m)?;
    }
    out.table(&t)?;
    let detail = format!(
        "{} distinct members at tolerance {tol:.3e}, spread {:.3e} (half horizon {:.3e})",
        est.ensemble.members().len(),
        est.spread,
        est.half_spread
    );
    Ok((
        vec![TaskStatus::new("attractor", true, detail)],
        json!({
            "members": est.ensemble.members().len(),
            "cluster_tol": tol,
            "spread": est.spread,
            "half_spread": est.half_spread,
            "contracting": est.contracting(),
        }),
    ))
}

fn usc(cfg: &RunConfig, pool: &RayonPool, out: &mut Outputs) -> Outcome {
    let e = &cfg.experiment;
    let rep = match usc_sweep(
        pool,
        &cfg.problem,
        &cfg.grid,
        &cfg.stepper,
        &cfg.noise.path(cfg.noise.seed),
        &e.alphas,
        &cfg.seeds(),
        e.tau,
        last_horizon(cfg),
        &initials(cfg, e.n_initials),
    ) {
        Ok(r) => r,
        Err(err) => return Ok((vec![TaskStatus::error("usc", err)], Value::Null)),
    };
    let mut t = Table::new("usc", &["alpha", "seed", "distance"]);
    for r in &rep.rows {
        t.push(vec![r.alpha.into(), r.seed.into(), r.distance.into()]);
    }
    out.table(&t)?;
    let mut m = Table::new("usc_medians", &["alpha", "median_distance"]);
    for (a, d) in rep.alphas.iter().zip(&rep.medians) {
        m.push(vec![(*a).into(), (*d).into()]);
    }
    out.table(&m)?;
    let decreasing = rep.medians.windows(2).all(|w| w[1] <= w[0]);
    let detail = format!("medians {:?}, decreasing with alpha: {decreasing}", rep.medians);
    Ok((
        vec![TaskStatus::new("usc", true, detail)],
        json!({"alphas": rep.alphas, "medians": rep.medians, "decreasing": decreasing}),
    ))
}

fn periodicity(cfg: &RunConfig, pool: &RayonPool, out: &mut Outputs) -> Outcome {
    let e = &cfg.experiment;
    let rows = match periodicity_check(
        pool,
        &cfg.problem,
        &cfg.grid,
        &cfg.stepper,
        &cfg.noise.path(cfg.noise.seed),
        &cfg.seeds(),
        e.tau,
        last_horizon(cfg),
        &initials(cfg, e.n_initials),
        e.cluster_tol_factor,
        &radius_options(cfg),
    ) {
        Ok(r) => r,
        Err(err) => return Ok((vec![TaskStatus::error("periodicity", err)], Value::Null)),
    };
    let mut t = Table::new("periodicity", &["seed", "distance", "cluster_tol", "within"]);
    for r in &rows {
        t.push(vec![
            r.seed.into(),
            r.distance.into(),
            r.cluster_tol.into(),
            r.within().into(),
        ]);
    }
    out.table(&t)?;
    let within = rows.iter().filter(|r| r.within()).count();
    let detail = format!("{within}/{} seeds within tolerance", rows.len());
    Ok((
        vec![TaskStatus::new("periodicity", within == rows.len(), detail)],
        json!({"within": within, "seeds": rows.len()}),
    ))
}
