//! The sectioned `key = value` run-configuration format.
//!
//! ```text
//! # comment
//! [problem]
//! p = 3
//! q = 4
//! [experiment]
//! horizons = 8, 16, 32
//! ```
//!
//! Every key has a default, so an empty file is a valid configuration. Unknown
//! sections or keys, duplicate keys, unparsable values and violated
//! constraints are all collected and reported together with line numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use plrds_core::expr::Expr;
use plrds_core::noise::{EtaKind, EtaProcess, EtaSource};
use plrds_core::problem::{alpha_zero, CustomEnvelopes, TimeProfile};
use plrds_core::{
    Error as CoreError, Grid, NoiseCase, NoisePath, Nonlinearity, ProblemSpec, Scheme, SpaceTimeFn, StepperConfig,
};

const SCHEMA: &[(&str, &[&str])] = &[
    (
        "problem",
        &[
            "lambda",
            "gamma",
            "p",
            "q",
            "alpha",
            "epsilon",
            "noise_case",
            "period",
            "g_amplitude",
            "g_width",
            "g_time",
            "g_rate",
            "g_expr",
            "h_amplitude",
            "h_width",
            "h_expr",
            "phi_amplitude",
            "phi_width",
            "phi_time",
            "phi_rate",
            "phi_expr",
            "f_expr",
            "f_gamma",
            "psi1_expr",
            "psi2",
            "psi3_expr",
            "psi4",
            "psi5",
            "eta",
            "eta_rate",
            "eta_value",
            "eta_mean",
            "eta_source",
            "eta_seed",
        ],
    ),
    ("grid", &["dim", "L", "n"]),
    (
        "stepper",
        &["dt", "scheme", "substep_limit", "energy_tol", "stability_c", "delta"],
    ),
    ("noise", &["seed", "dt", "block_length"]),
    (
        "experiment",
        &[
            "name",
            "tau",
            "duration",
            "horizons",
            "k_list",
            "alphas",
            "n_seeds",
            "n_initials",
            "initial_radius",
            "calibration_c",
            "quad_tol",
            "quad_dt",
            "cluster_tol_factor",
            "sample_count",
            "sigma_count",
            "snapshot_every",
        ],
    ),
    ("output", &["directory", "formats", "field_dump"]),
];

/// One problem found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl ConfigErrors {
    pub fn single(message: impl Into<String>) -> Self {
        Self(vec![ConfigError {
            line: None,
            message: message.into(),
        }])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    Validate,
    Simulate,
    CocycleTest,
    EnergyAudit,
    AbsorbCheck,
    TailCheck,
    EstimateAttractor,
    UscSweep,
    PeriodicityCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Validate,
        Experiment::Simulate,
        Experiment::CocycleTest,
        Experiment::EnergyAudit,
        Experiment::AbsorbCheck,
        Experiment::TailCheck,
        Experiment::EstimateAttractor,
        Experiment::UscSweep,
        Experiment::PeriodicityCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Simulate => "simulate",
            Experiment::CocycleTest => "cocycle-test",
            Experiment::EnergyAudit => "energy-audit",
            Experiment::AbsorbCheck => "absorb-check",
            Experiment::TailCheck => "tail-check",
            Experiment::EstimateAttractor => "estimate-attractor",
            Experiment::UscSweep => "usc-sweep",
            Experiment::PeriodicityCheck => "periodicity-check",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSettings {
    pub seed: u64,
    pub dt: f64,
    pub block_length: f64,
}

impl NoiseSettings {
    pub fn path(&self, seed: u64) -> NoisePath {
        NoisePath::new(seed, self.dt, self.block_length).expect("validated noise settings")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub name: Option<Experiment>,
    pub tau: f64,
    pub duration: f64,
    pub horizons: Vec<f64>,
    pub k_list: Vec<f64>,
    pub alphas: Vec<f64>,
    pub n_seeds: usize,
    pub n_initials: usize,
    pub initial_radius: f64,
    pub calibration_c: f64,
    pub quad_tol: f64,
    pub quad_dt: f64,
    pub cluster_tol_factor: f64,
    pub sample_count: usize,
    pub sigma_count: usize,
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldDump {
    None,
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub directory: PathBuf,
    pub csv: bool,
    pub json: bool,
    pub field_dump: FieldDump,
}

/// A fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub grid: Grid,
    pub stepper: StepperConfig,
    pub noise: NoiseSettings,
    pub experiment: ExperimentSettings,
    pub output: OutputSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

impl RunConfig {
    /// Seeds of the sweep: `seed, seed + 1, …`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.experiment.n_seeds as u64)
            .map(|k| self.noise.seed.wrapping_add(k))
            .collect()
    }

    /// Every setting with its resolved value, by section.
    pub fn resolved(&self) -> BTreeMap<String, BTreeMap<String, String>> {
        let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut put = |sec: &str, key: &str, val: String| {
            out.entry(sec.to_string()).or_default().insert(key.to_string(), val);
        };
        let p = &self.problem;
        put("problem", "lambda", num(p.lambda));
        put("problem", "gamma", num(p.gamma));
        put("problem", "p", num(p.p));
        put("problem", "q", num(p.q));
        put("problem", "alpha", num(p.alpha));
        put("problem", "epsilon", num(p.epsilon));
        put(
            "problem",
            "noise_case",
            match p.noise_case {
                NoiseCase::Additive => "additive",
                NoiseCase::Multiplicative => "multiplicative",
                NoiseCase::Deterministic => "deterministic",
            }
            .into(),
        );
        put("problem", "period", p.period.map(num).unwrap_or_else(|| "none".into()));
        for (prefix, f) in [("g", &p.g), ("h", &p.h)] {
            echo_fn(&mut put, prefix, f);
        }
        match &p.nonlinearity {
            Nonlinearity::PowerPlusForcing { phi } => echo_fn(&mut put, "phi", phi),
            Nonlinearity::Custom { f, envelopes } => {
                put("problem", "f_expr", f.source().into());
                put("problem", "f_gamma", num(envelopes.gamma));
                if let SpaceTimeFn::Expr(e) = &envelopes.psi1 {
                    put("problem", "psi1_expr", e.source().into());
                }
                put("problem", "psi2", num(envelopes.psi2));
                if let SpaceTimeFn::Expr(e) = &envelopes.psi3 {
                    put("problem", "psi3_expr", e.source().into());
                }
                put("problem", "psi4", num(envelopes.psi4));
                put("problem", "psi5", num(envelopes.psi5));
            }
        }
        match p.eta.kind {
            EtaKind::Constant(v) => {
                put("problem", "eta", "constant".into());
                put("problem", "eta_value", num(v));
            }
            EtaKind::Ou { rate } => {
                put("problem", "eta", "ou".into());
                put("problem", "eta_rate", num(rate));
            }
            EtaKind::ShiftedOu { rate, mean } => {
                put("problem", "eta", "shifted-ou".into());
                put("problem", "eta_rate", num(rate));
                put("problem", "eta_mean", num(mean));
            }
        }
        match p.eta.source {
            EtaSource::SamePath => put("problem", "eta_source", "same".into()),
            EtaSource::Independent { seed } => {
                put("problem", "eta_source", "independent".into());
                put("problem", "eta_seed", seed.to_string());
            }
        }
        put("grid", "dim", self.grid.dim().to_string());
        put("grid", "L", num(self.grid.half_width()));
        put("grid", "n", self.grid.n_per_axis().to_string());
        let s = &self.stepper;
        put("stepper", "dt", num(s.dt));
        put(
            "stepper",
            "scheme",
            match s.scheme {
                Scheme::Imex => "imex",
                Scheme::Explicit => "explicit",
            }
            .into(),
        );
        put("stepper", "substep_limit", s.substep_limit.to_string());
        put("stepper", "energy_tol", num(s.energy_tol));
        put("stepper", "stability_c", num(s.stability_c));
        put("stepper", "delta", num(s.delta));
        put("noise", "seed", self.noise.seed.to_string());
        put("noise", "dt", num(self.noise.dt));
        put("noise", "block_length", num(self.noise.block_length));
        let e = &self.experiment;
        if let Some(n) = e.name {
            put("experiment", "name", n.name().into());
        }
        put("experiment", "tau", num(e.tau));
        put("experiment", "duration", num(e.duration));
        put("experiment", "horizons", list(&e.horizons));
        put("experiment", "k_list", list(&e.k_list));
        put("experiment", "alphas", list(&e.alphas));
        put("experiment", "n_seeds", e.n_seeds.to_string());
        put("experiment", "n_initials", e.n_initials.to_string());
        put("experiment", "initial_radius", num(e.initial_radius));
        put("experiment", "calibration_c", num(e.calibration_c));
        put("experiment", "quad_tol", num(e.quad_tol));
        put("experiment", "quad_dt", num(e.quad_dt));
        put("experiment", "cluster_tol_factor", num(e.cluster_tol_factor));
        put("experiment", "sample_count", e.sample_count.to_string());
        put("experiment", "sigma_count", e.sigma_count.to_string());
        put("experiment", "snapshot_every", e.snapshot_every.to_string());
        let o = &self.output;
        put("output", "directory", o.directory.display().to_string());
        let mut formats = Vec::new();
        if o.csv {
            formats.push("csv");
        }
        if o.json {
            formats.push("json");
        }
        put("output", "formats", formats.join(", "));
        put(
            "output",
            "field_dump",
            match o.field_dump {
                FieldDump::None => "none",
                FieldDump::Csv => "csv",
                FieldDump::Binary => "binary",
            }
            .into(),
        );
        out
    }

    /// The resolved configuration in the input format; parsing it gives back
    /// an equal configuration.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        for (sec, keys) in self.resolved() {
            s += &format!("[{sec}]\n");
            for (k, v) in keys {
                s += &format!("{k} = {v}\n");
            }
        }
        s
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn list(xs: &[f64]) -> String {
    xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ")
}

fn echo_fn(put: &mut impl FnMut(&str, &str, String), prefix: &str, f: &SpaceTimeFn) {
    let key = |k: &str| format!("{prefix}_{k}");
    match f {
        SpaceTimeFn::Zero => put("problem", &key("amplitude"), num(0.0)),
        SpaceTimeFn::Gaussian { amplitude, width, time } => {
            put("problem", &key("amplitude"), num(*amplitude));
            put("problem", &key("width"), num(*width));
            if prefix != "h" {
                let (name, rate) = match time {
                    TimeProfile::Constant => ("constant", None),
                    TimeProfile::Cos { .. } => ("cos", None),
                    TimeProfile::Sin { .. } => ("sin", None),
                    TimeProfile::Exp { rate } => ("exp", Some(*rate)),
                };
                put("problem", &key("time"), name.into());
                if let Some(r) = rate {
                    put("problem", &key("rate"), num(r));
                }
            }
        }
        SpaceTimeFn::Expr(e) => put("problem", &key("expr"), e.source().into()),
    }
}

struct Entry {
    value: String,
    line: usize,
}

struct Reader {
    entries: BTreeMap<(String, String), Entry>,
    errors: Vec<ConfigError>,
}

impl Reader {
    fn raw(&self, sec: &str, key: &str) -> Option<(&str, usize)> {
        self.entries
            .get(&(sec.to_string(), key.to_string()))
            .map(|e| (e.value.as_str(), e.line))
    }

    fn line(&self, sec: &str, key: &str) -> Option<usize> {
        self.raw(sec, key).map(|(_, l)| l)
    }

    fn has(&self, sec: &str, key: &str) -> bool {
        self.raw(sec, key).is_some()
    }

    fn error(&mut self, line: Option<usize>, message: impl Into<String>) {
        self.errors.push(ConfigError {
            line,
            message: message.into(),
        });
    }

    fn get<T: FromStr>(&mut self, sec: &str, key: &str, default: T) -> T {
        let Some((v, line)) = self.raw(sec, key) else {
            return default;
        };
        match v.parse::<T>() {
            Ok(x) => x,
            Err(_) => {
                let msg = format!("[{sec}] {key}: cannot parse `{v}`");
                self.error(Some(line), msg);
                default
            }
        }
    }

    fn text(&mut self, sec: &str, key: &str, default: &str) -> String {
        self.raw(sec, key)
            .map(|(v, _)| v.to_string())
            .unwrap_or_else(|| default.to_string())
    }

    fn list(&mut self, sec: &str, key: &str, default: Vec<f64>) -> Vec<f64> {
        let Some((v, line)) = self.raw(sec, key) else {
            return default;
        };
        let inner = v.trim().trim_start_matches('[').trim_end_matches(']');
        let parsed: Result<Vec<f64>, _> = inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse::<f64>)
            .collect();
        match parsed {
            Ok(xs) if !xs.is_empty() => xs,
            _ => {
                let msg = format!("[{sec}] {key}: expected a comma-separated list of numbers, got `{v}`");
                self.error(Some(line), msg);
                default
            }
        }
    }

    fn expr(&mut self, sec: &str, key: &str) -> Option<Expr> {
        let (v, line) = self.raw(sec, key)?;
        match Expr::parse(v) {
            Ok(e) => Some(e),
            Err(CoreError::Expression { column, message }) => {
                let msg = format!("[{sec}] {key}: {message} at column {column}");
                self.error(Some(line), msg);
                None
            }
            Err(e) => {
                self.error(Some(line), e.to_string());
                None
            }
        }
    }

    fn space_time(&mut self, prefix: &str, default: &SpaceTimeFn, period: f64) -> SpaceTimeFn {
        let key = |k: &str| format!("{prefix}_{k}");
        if self.has("problem", &key("expr")) {
            return self
                .expr("problem", &key("expr"))
                .map(SpaceTimeFn::Expr)
                .unwrap_or_else(|| default.clone());
        }
        let (a0, w0, t0) = match default {
            SpaceTimeFn::Gaussian { amplitude, width, time } => (*amplitude, *width, *time),
            _ => (0.0, 1.0, TimeProfile::Constant),
        };
        let amplitude = self.get("problem", &key("amplitude"), a0);
        let width = self.get("problem", &key("width"), w0);
        if !(width > 0.0) {
            let line = self.line("problem", &key("width"));
            self.error(line, format!("{} must be positive", key("width")));
        }
        let default_time = match t0 {
            TimeProfile::Constant => "constant",
            TimeProfile::Cos { .. } => "cos",
            TimeProfile::Sin { .. } => "sin",
            TimeProfile::Exp { .. } => "exp",
        };
        let time_name = if prefix == "h" {
            "constant".to_string()
        } else {
            self.text("problem", &key("time"), default_time)
        };
        let time = match time_name.as_str() {
            "constant" => TimeProfile::Constant,
            "cos" => TimeProfile::Cos { period },
            "sin" => TimeProfile::Sin { period },
            "exp" => TimeProfile::Exp {
                rate: self.get("problem", &key("rate"), 0.0),
            },
            other => {
                let line = self.line("problem", &key("time"));
                self.error(
                    line,
                    format!("{}: expected constant, cos, sin or exp, got `{other}`", key("time")),
                );
                TimeProfile::Constant
            }
        };
        if amplitude == 0.0 {
            SpaceTimeFn::Zero
        } else {
            SpaceTimeFn::gaussian(amplitude, width, time)
        }
    }
}

/// Splits the text into entries, reporting syntax errors, unknown sections
/// and keys, and duplicates.
fn tokenize(text: &str) -> Reader {
    let mut r = Reader {
        entries: BTreeMap::new(),
        errors: Vec::new(),
    };
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
            let name = name.trim();
            if SCHEMA.iter().any(|(s, _)| *s == name) {
                section = Some(name.to_string());
            } else {
                r.error(Some(line), format!("unknown section [{name}]"));
                section = None;
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            r.error(Some(line), format!("expected `key = value`, got `{content}`"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = section.clone() else {
            if !r.errors.iter().any(|e| e.line == Some(line)) {
                r.error(Some(line), format!("key `{key}` outside of a known section"));
            }
            continue;
        };
        let known = SCHEMA
            .iter()
            .find(|(s, _)| *s == sec)
            .is_some_and(|(_, keys)| keys.contains(&key));
        if !known {
            r.error(Some(line), format!("unknown key `{key}` in [{sec}]"));
            continue;
        }
        if value.is_empty() {
            r.error(Some(line), format!("missing value for key `{key}` in [{sec}]"));
            continue;
        }
        let k = (sec.clone(), key.to_string());
        if let Some(prev) = r.entries.get(&k) {
            let msg = format!("duplicate key `{key}` in [{sec}] (lines {} and {line})", prev.line);
            r.error(Some(line), msg);
            continue;
        }
        r.entries.insert(
            k,
            Entry {
                value: value.to_string(),
                line,
            },
        );
    }
    r
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let mut r = tokenize(text);

    let case_name = r.text("problem", "noise_case", "additive");
    let noise_case = match case_name.as_str() {
        "additive" => NoiseCase::Additive,
        "multiplicative" => NoiseCase::Multiplicative,
        "deterministic" => NoiseCase::Deterministic,
        other => {
            let line = r.line("problem", "noise_case");
            r.error(
                line,
                format!("noise_case: expected additive, multiplicative or deterministic, got `{other}`"),
            );
            NoiseCase::Additive
        }
    };
    let base = match noise_case {
        NoiseCase::Additive => ProblemSpec::default_additive(),
        NoiseCase::Multiplicative => ProblemSpec::default_multiplicative(),
        NoiseCase::Deterministic => ProblemSpec::deterministic(),
    };
    let lambda = r.get("problem", "lambda", base.lambda);
    let gamma = r.get("problem", "gamma", base.gamma);
    let p = r.get("problem", "p", base.p);
    let q = r.get("problem", "q", base.q);
    let period = match r.raw("problem", "period").map(|(v, _)| v.to_string()) {
        Some(v) if v == "none" => None,
        _ => Some(r.get("problem", "period", base.period.unwrap_or(1.0))),
    };
    let t_period = period.unwrap_or(1.0);
    let g = r.space_time("g", &base.g, t_period);
    let h = r.space_time("h", &base.h, t_period);
    let nonlinearity = if r.has("problem", "f_expr") {
        let f = r.expr("problem", "f_expr");
        let psi = |r: &mut Reader, key: &str| {
            r.expr("problem", key)
                .map(SpaceTimeFn::Expr)
                .unwrap_or(SpaceTimeFn::Zero)
        };
        let envelopes = CustomEnvelopes {
            gamma: r.get("problem", "f_gamma", gamma),
            psi1: psi(&mut r, "psi1_expr"),
            psi2: r.get("problem", "psi2", gamma + 1.0),
            psi3: psi(&mut r, "psi3_expr"),
            psi4: r.get("problem", "psi4", 0.0),
            psi5: r.get("problem", "psi5", gamma * (q - 1.0) + 1.0),
        };
        match f {
            Some(f) => Nonlinearity::Custom { f, envelopes },
            None => base.nonlinearity.clone(),
        }
    } else {
        let default_phi = match &base.nonlinearity {
            Nonlinearity::PowerPlusForcing { phi } => phi.clone(),
            Nonlinearity::Custom { .. } => SpaceTimeFn::Zero,
        };
        Nonlinearity::PowerPlusForcing {
            phi: r.space_time("phi", &default_phi, t_period),
        }
    };
    let eta_kind = match r.text("problem", "eta", "ou").as_str() {
        "ou" => EtaKind::Ou {
            rate: r.get("problem", "eta_rate", 1.0),
        },
        "constant" => EtaKind::Constant(r.get("problem", "eta_value", 0.0)),
        "shifted-ou" => EtaKind::ShiftedOu {
            rate: r.get("problem", "eta_rate", 1.0),
            mean: r.get("problem", "eta_mean", 0.0),
        },
        other => {
            let line = r.line("problem", "eta");
            r.error(line, format!("eta: expected ou, constant or shifted-ou, got `{other}`"));
            EtaKind::Ou { rate: 1.0 }
        }
    };
    if let EtaKind::Ou { rate } | EtaKind::ShiftedOu { rate, .. } = eta_kind {
        if !(rate > 0.0) {
            let line = r.line("problem", "eta_rate");
            r.error(line, "eta_rate must be positive");
        }
    }
    let eta_source = match r.text("problem", "eta_source", "same").as_str() {
        "same" => EtaSource::SamePath,
        "independent" => EtaSource::Independent {
            seed: r.get("problem", "eta_seed", 0x5eed_u64),
        },
        other => {
            let line = r.line("problem", "eta_source");
            r.error(line, format!("eta_source: expected same or independent, got `{other}`"));
            EtaSource::SamePath
        }
    };
    let eta = EtaProcess {
        kind: eta_kind,
        source: eta_source,
    };
    let default_alpha = match noise_case {
        NoiseCase::Additive => 0.5 * alpha_zero(lambda, eta.mean()),
        _ => base.alpha,
    };
    let problem = ProblemSpec {
        lambda,
        gamma,
        p,
        q,
        alpha: r.get("problem", "alpha", default_alpha),
        epsilon: r.get("problem", "epsilon", base.epsilon),
        noise_case,
        g,
        h,
        nonlinearity,
        eta,
        period,
    };
    if let Err(e) = problem.validate() {
        push_core(&mut r, "problem", e);
    }

    let dim = r.get("grid", "dim", 1usize);
    let half_width = r.get("grid", "L", 8.0);
    let n = r.get("grid", "n", if dim == 2 { 65usize } else { 257 });
    let grid = match Grid::new(dim, half_width, n) {
        Ok(g) => g,
        Err(e) => {
            push_core(&mut r, "grid", e);
            Grid::new(1, 8.0, 257).unwrap()
        }
    };

    let scheme = match r.text("stepper", "scheme", "imex").as_str() {
        "imex" => Scheme::Imex,
        "explicit" => Scheme::Explicit,
        other => {
            let line = r.line("stepper", "scheme");
            r.error(line, format!("scheme: expected imex or explicit, got `{other}`"));
            Scheme::Imex
        }
    };
    let d = StepperConfig::default();
    let stepper = StepperConfig {
        dt: r.get("stepper", "dt", d.dt),
        scheme,
        substep_limit: r.get("stepper", "substep_limit", d.substep_limit),
        energy_tol: r.get("stepper", "energy_tol", d.energy_tol),
        stability_c: r.get("stepper", "stability_c", d.stability_c),
        delta: r.get("stepper", "delta", d.delta),
    };
    if let Err(e) = stepper.validate() {
        push_core(&mut r, "stepper", e);
    }

    let noise = NoiseSettings {
        seed: r.get("noise", "seed", 1u64),
        dt: r.get("noise", "dt", stepper.dt),
        block_length: r.get("noise", "block_length", 64.0),
    };
    match NoisePath::new(noise.seed, noise.dt, noise.block_length) {
        Err(e) => push_core(&mut r, "noise", e),
        Ok(_) => {
            if plrds_core::math::to_ticks(stepper.dt, noise.dt).is_none_or(|k| k < 1) {
                let line = r.line("noise", "dt").or(r.line("stepper", "dt"));
                r.error(line, "stepper dt must be a positive integer multiple of the noise dt");
            }
        }
    }

    let name = match r.raw("experiment", "name").map(|(v, l)| (v.to_string(), l)) {
        Some((v, line)) => match v.parse::<Experiment>() {
            Ok(e) => Some(e),
            Err(msg) => {
                r.error(Some(line), msg);
                None
            }
        },
        None => None,
    };
    let l = grid.half_width();
    let experiment = ExperimentSettings {
        name,
        tau: r.get("experiment", "tau", 0.0),
        duration: r.get("experiment", "duration", 10.0),
        horizons: r.list("experiment", "horizons", vec![8.0, 16.0, 32.0]),
        k_list: r.list("experiment", "k_list", vec![l / 4.0, 3.0 * l / 8.0, l / 2.0]),
        alphas: r.list("experiment", "alphas", vec![0.4, 0.2, 0.1, 0.05]),
        n_seeds: r.get("experiment", "n_seeds", 4usize),
        n_initials: r.get("experiment", "n_initials", 2usize),
        initial_radius: r.get("experiment", "initial_radius", 3.0),
        calibration_c: r.get("experiment", "calibration_c", 4.0),
        quad_tol: r.get("experiment", "quad_tol", 1e-12),
        quad_dt: r.get("experiment", "quad_dt", 0.01),
        cluster_tol_factor: r.get("experiment", "cluster_tol_factor", 1e-4),
        sample_count: r.get("experiment", "sample_count", 10_000usize),
        sigma_count: r.get("experiment", "sigma_count", 8usize),
        snapshot_every: r.get("experiment", "snapshot_every", 0usize),
    };
    check_experiment(&mut r, &experiment, &grid, &stepper, &noise);

    let formats = r.text("output", "formats", "csv, json");
    let mut output = OutputSettings {
        directory: PathBuf::from(r.text("output", "directory", "plrds-out")),
        csv: false,
        json: false,
        field_dump: FieldDump::None,
    };
    for f in formats.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match f {
            "csv" => output.csv = true,
            "json" => output.json = true,
            other => {
                let line = r.line("output", "formats");
                r.error(line, format!("formats: unknown format `{other}` (expected csv, json)"));
            }
        }
    }
    output.field_dump = match r.text("output", "field_dump", "none").as_str() {
        "none" => FieldDump::None,
        "csv" => FieldDump::Csv,
        "binary" => FieldDump::Binary,
        other => {
            let line = r.line("output", "field_dump");
            r.error(line, format!("field_dump: expected none, csv or binary, got `{other}`"));
            FieldDump::None
        }
    };

    if r.errors.is_empty() {
        Ok(RunConfig {
            problem,
            grid,
            stepper,
            noise,
            experiment,
            output,
        })
    } else {
        r.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        Err(ConfigErrors(r.errors))
    }
}

fn push_core(r: &mut Reader, sec: &str, e: CoreError) {
    match e {
        CoreError::InvalidParameter { name, reason } => {
            let key = match name {
                "half_width" => "L",
                "n_per_axis" => "n",
                other => other,
            };
            let line = r.line(sec, key);
            let msg = if reason.contains(key) {
                reason
            } else {
                format!("{key}: {reason}")
            };
            r.error(line, msg);
        }
        other => r.error(None, other.to_string()),
    }
}

fn check_experiment(
    r: &mut Reader,
    e: &ExperimentSettings,
    grid: &Grid,
    stepper: &StepperConfig,
    noise: &NoiseSettings,
) {
    let fail = |r: &mut Reader, key: &str, msg: &str| {
        let line = r.line("experiment", key);
        r.error(line, format!("{key}: {msg}"));
    };
    let on_grid = |x: f64, dt: f64| plrds_core::math::to_ticks(x, dt).is_some();
    if !on_grid(e.tau, stepper.dt) {
        fail(r, "tau", "must be a multiple of the stepper dt");
    }
    if !(e.duration >= 0.0) || !on_grid(e.duration, stepper.dt) {
        fail(r, "duration", "must be a nonnegative multiple of the stepper dt");
    }
    if e.horizons
        .iter()
        .any(|h| !(*h > 0.0) || !on_grid(*h, stepper.dt) || !on_grid(*h, noise.dt))
    {
        fail(r, "horizons", "must be positive multiples of the stepper dt");
    }
    if e.horizons.windows(2).any(|w| !(w[0] < w[1])) {
        fail(r, "horizons", "must be strictly ascending");
    }
    if e.k_list.iter().any(|k| !(*k > 0.0 && *k < grid.half_width())) {
        fail(r, "k_list", "every radius must lie in (0, L)");
    }
    if e.k_list.windows(2).any(|w| !(w[0] < w[1])) {
        fail(r, "k_list", "must be strictly ascending");
    }
    if e.alphas.iter().any(|a| !(*a >= 0.0)) || e.alphas.windows(2).any(|w| w[1] > w[0]) {
        fail(r, "alphas", "must be nonnegative and nonincreasing");
    }
    if e.n_seeds == 0 {
        fail(r, "n_seeds", "must be at least 1");
    }
    if e.n_initials == 0 {
        fail(r, "n_initials", "must be at least 1");
    }
    if !(e.initial_radius >= 0.0) {
        fail(r, "initial_radius", "must be nonnegative");
    }
    if !(e.calibration_c > 0.0) {
        fail(r, "calibration_c", "must be positive");
    }
    if !(e.quad_tol > 0.0 && e.quad_tol < 1.0) {
        fail(r, "quad_tol", "must lie in (0, 1)");
    }
    if !(e.quad_dt > 0.0) || plrds_core::math::to_ticks(e.quad_dt, noise.dt).is_none_or(|k| k < 1) {
        fail(r, "quad_dt", "must be a positive multiple of the noise dt");
    }
    if !(e.cluster_tol_factor >= 0.0) {
        fail(r, "cluster_tol_factor", "must be nonnegative");
    }
    if e.sample_count == 0 {
        fail(r, "sample_count", "must be at least 1");
    }
    if e.sigma_count == 0 {
        fail(r, "sigma_count", "must be at least 1");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_has_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!((c.problem.p, c.problem.q), (3.0, 4.0));
        assert_eq!(c.problem.alpha, 0.0625);
        assert_eq!(c.grid.n_per_axis(), 257);
        assert_eq!(c.experiment.horizons, vec![8.0, 16.0, 32.0]);
        assert!(c.output.csv && c.output.json);
    }

    #[test]
    fn q_below_p_is_rejected_with_line() {
        let e = parse_config("[problem]\np = 3\nq = 2\n").unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!(e.0[0].line, Some(3));
        assert!(e.0[0].message.contains("q must be ≥ p"), "{}", e.0[0].message);
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let e = parse_config("[grid]\nn = 65\n\nn = 129\n").unwrap_err();
        assert!(e.0[0].message.contains("duplicate key `n`"));
        assert!(e.0[0].message.contains("lines 2 and 4"));
        assert_eq!(e.0[0].line, Some(4));
    }

    #[test]
    fn unknown_keys_and_sections() {
        let e = parse_config("[grid]\nwidth = 3\n[plot]\nx = 1\n").unwrap_err();
        let msgs: Vec<_> = e.0.iter().map(|e| e.to_string()).collect();
        assert!(msgs[0].contains("unknown key `width`"));
        assert!(msgs[1].contains("unknown section [plot]"));
        assert!(msgs[2].contains("outside of a known section"));
    }

    #[test]
    fn collects_all_errors() {
        let e = parse_config("[problem]\nlambda = -1\n[stepper]\ndt = zero\n").unwrap_err();
        assert_eq!(e.0.len(), 2);
    }

    #[test]
    fn lists_and_expressions() {
        let c =
            parse_config("[experiment]\nhorizons = [2, 4, 8]\n[problem]\ng_expr = exp(-x^2)*cos(2*pi*t)\n").unwrap();
        assert_eq!(c.experiment.horizons, vec![2.0, 4.0, 8.0]);
        assert!(matches!(c.problem.g, SpaceTimeFn::Expr(_)));
        let e = parse_config("[problem]\nf_expr = s + * 2\n").unwrap_err();
        assert!(e.0[0].message.contains("column"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = "[problem]\nnoise_case = multiplicative\nalpha = 0.2\nf_expr = -abs(s)^2*s\n[grid]\nn = 129\n";
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.to_ini()).unwrap();
        assert_eq!(c, again);
        let d = RunConfig::default();
        assert_eq!(parse_config(&d.to_ini()).unwrap(), d);
    }

    #[test]
    fn experiment_names() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("plot".parse::<Experiment>().is_err());
    }
}
