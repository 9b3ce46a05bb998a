//! Time stepping of the transformed (pathwise) equations, the `u ↔ v`
//! transforms, the cocycle `Φ` and pullback runs.
//!
//! The state carried between steps is always `u`. Each step transforms to
//! `v` with the noise value at its left end, advances `v`, and transforms back
//! with the value at its right end. Runs over adjacent intervals therefore
//! execute exactly the same floating-point operations as one run over their
//! union, which makes the cocycle laws hold bit for bit.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::field::{apply_p_laplace, face_sums, EndpointEnsemble, EnsembleTag, Field, Grid};
use crate::math;
use crate::noise::{ou_canonical, NoisePath, NoiseSource};
use crate::pool::TaskPool;
use crate::problem::{NoiseCase, Nonlinearity, ProblemSpec, SpaceTimeFn, TimeProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Exact integrating factor for the linear damping, everything else explicit.
    #[default]
    Imex,
    /// Forward Euler for every term.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub scheme: Scheme,
    /// A step may be split into at most `2^substep_limit` substeps.
    pub substep_limit: u32,
    /// Slack allowed by directional energy checks.
    pub energy_tol: f64,
    /// Bound on `ds·(4·dim·a_max/dx² + |∂f/∂s|_max)` for an explicit substep.
    pub stability_c: f64,
    /// Face regularization of the p-Laplacian.
    pub delta: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            scheme: Scheme::Imex,
            substep_limit: 8,
            energy_tol: 1e-6,
            stability_c: 1.6,
            delta: 0.0,
        }
    }
}

impl StepperConfig {
    pub fn with_dt(self, dt: f64) -> Self {
        Self { dt, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", "must be positive"));
        }
        if self.substep_limit < 1 || self.substep_limit > 30 {
            return Err(invalid("substep_limit", "must lie in 1..=30"));
        }
        if !(self.stability_c > 0.0) {
            return Err(invalid("stability_c", "must be positive"));
        }
        if !(self.delta >= 0.0) {
            return Err(invalid("delta", "must be nonnegative"));
        }
        if !(self.energy_tol >= 0.0) {
            return Err(invalid("energy_tol", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Coefficients of one step of
/// `v' = −κv + D·div(a(w)∇w) + ℓv + o·f(t, x, i·w) + c_g·g + c_h·h`,
/// `w = v + s·h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    /// `κ`, handled by the integrating factor.
    pub kappa: f64,
    /// `D`
    pub diffusion: f64,
    /// `ℓ`
    pub linear: f64,
    /// `i`
    pub inner: f64,
    /// `o`
    pub outer: f64,
    /// `c_g`
    pub forcing: f64,
    /// `s`
    pub shift: f64,
    /// `c_h`
    pub source: f64,
}

impl StepCoefficients {
    pub fn deterministic(spec: &ProblemSpec) -> Self {
        Self {
            kappa: spec.lambda,
            diffusion: 1.0,
            linear: 0.0,
            inner: 1.0,
            outer: 1.0,
            forcing: 1.0,
            shift: 0.0,
            source: 0.0,
        }
    }

    pub fn additive(spec: &ProblemSpec, z: f64, eta: f64) -> Self {
        let (a, e) = (spec.alpha, spec.epsilon);
        Self {
            kappa: spec.lambda - a * eta,
            shift: e * z,
            source: a * e * eta * z,
            ..Self::deterministic(spec)
        }
    }

    pub fn multiplicative(spec: &ProblemSpec, z: f64) -> Self {
        let a = spec.alpha;
        Self {
            kappa: spec.lambda,
            diffusion: math::exp(a * (spec.p - 2.0) * z),
            linear: a * z,
            inner: math::exp(a * z),
            outer: math::exp(-a * z),
            forcing: math::exp(-a * z),
            shift: 0.0,
            source: 0.0,
        }
    }

    pub fn for_case(spec: &ProblemSpec, z: f64, eta: f64) -> Self {
        match spec.noise_case {
            NoiseCase::Additive => Self::additive(spec, z, eta),
            NoiseCase::Multiplicative => Self::multiplicative(spec, z),
            NoiseCase::Deterministic => Self::deterministic(spec),
        }
    }
}

/// A space-time function tabulated on a grid.
#[derive(Debug, Clone)]
enum Profile {
    Zero,
    Separable {
        amplitude: f64,
        time: TimeProfile,
        shape: Vec<f64>,
    },
    General(SpaceTimeFn),
}

impl Profile {
    fn new(f: &SpaceTimeFn, grid: &Grid) -> Self {
        if f.is_zero() {
            return Profile::Zero;
        }
        match f.separable() {
            Some((amplitude, time, width)) => Profile::Separable {
                amplitude,
                time,
                shape: Field::from_fn(*grid, |[x, y]| math::exp(-(x * x + y * y) / (width * width))).into_values(),
            },
            None => Profile::General(f.clone()),
        }
    }

    /// Writes the profile at time `t` into `out`; false when identically zero.
    fn fill(&self, t: f64, grid: &Grid, out: &mut [f64]) -> bool {
        match self {
            Profile::Zero => false,
            Profile::Separable { amplitude, time, shape } => {
                let c = amplitude * time.at(t);
                for (o, s) in out.iter_mut().zip(shape) {
                    *o = c * s;
                }
                true
            }
            Profile::General(f) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = if grid.is_boundary(i) {
                        0.0
                    } else {
                        f.eval(t, grid.coords(i))
                    };
                }
                true
            }
        }
    }
}

/// Quantities entering the energy balance of `v` at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyTerms {
    /// `‖v‖²`
    pub l2_sq: f64,
    /// `‖∇w‖_pᵖ`
    pub grad_w: f64,
    /// `∫ |∇w|^{p−2} ∇w · ∇h`
    pub flux_h: f64,
    /// `∫ f(t, x, i·w) v`
    pub reaction: f64,
    /// `(g, v)`
    pub g_dot: f64,
    /// `(h, v)`
    pub h_dot: f64,
    /// `‖v‖_q^q`
    pub q_pow: f64,
    /// `d/dt ‖v‖²` implied by the equation.
    pub rate: f64,
}

/// One advanced step, as seen by an observer.
#[derive(Debug)]
pub struct StepInfo<'a> {
    pub index: usize,
    /// Absolute time at the left end of the step.
    pub t: f64,
    /// Argument at which time-dependent data was evaluated.
    pub forcing_t: f64,
    pub z: f64,
    pub eta: f64,
    pub z_next: f64,
    pub coefficients: StepCoefficients,
    pub substeps: u32,
    pub energy: Option<EnergyTerms>,
    pub v: &'a [f64],
    pub v_next: &'a [f64],
    pub u_next: &'a [f64],
}

/// Reusable integrator for one problem on one grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    spec: ProblemSpec,
    grid: Grid,
    cfg: StepperConfig,
    h: Vec<f64>,
    g: Profile,
    phi: Profile,
    w: Vec<f64>,
    lap: Vec<f64>,
    flux: Vec<f64>,
    rhs: Vec<f64>,
    gbuf: Vec<f64>,
    phibuf: Vec<f64>,
    start: Vec<f64>,
}

impl Stepper {
    pub fn new(spec: &ProblemSpec, grid: &Grid, cfg: &StepperConfig) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        let n = grid.len();
        let h = Field::from_fn(*grid, |x| spec.h.eval(0.0, x)).into_values();
        let phi = match &spec.nonlinearity {
            Nonlinearity::PowerPlusForcing { phi } => Profile::new(phi, grid),
            Nonlinearity::Custom { .. } => Profile::Zero,
        };
        Ok(Self {
            spec: spec.clone(),
            grid: *grid,
            cfg: *cfg,
            h,
            g: Profile::new(&spec.g, grid),
            phi,
            w: vec![0.0; n],
            lap: vec![0.0; n],
            flux: Vec::new(),
            rhs: vec![0.0; n],
            gbuf: vec![0.0; n],
            phibuf: vec![0.0; n],
            start: vec![0.0; n],
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    /// `h` tabulated on the grid.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Rate of the OU process `z` for the active noise case.
    pub fn ou_rate(&self) -> f64 {
        match self.spec.noise_case {
            NoiseCase::Additive => self.spec.lambda,
            _ => 1.0,
        }
    }

    /// `v` from `u` given the noise value `z`.
    pub fn to_v(&self, u: &[f64], z: f64, out: &mut [f64]) {
        match self.spec.noise_case {
            NoiseCase::Additive => {
                let s = self.spec.epsilon * z;
                if s == 0.0 {
                    out.copy_from_slice(u);
                } else {
                    for ((o, a), b) in out.iter_mut().zip(u).zip(&self.h) {
                        *o = a - s * b;
                    }
                }
            }
            NoiseCase::Multiplicative => {
                let e = math::exp(-self.spec.alpha * z);
                for (o, a) in out.iter_mut().zip(u) {
                    *o = e * a;
                }
            }
            NoiseCase::Deterministic => out.copy_from_slice(u),
        }
    }

    /// `u` from `v` given the noise value `z`.
    pub fn to_u(&self, v: &[f64], z: f64, out: &mut [f64]) {
        match self.spec.noise_case {
            NoiseCase::Additive => {
                let s = self.spec.epsilon * z;
                if s == 0.0 {
                    out.copy_from_slice(v);
                } else {
                    for ((o, a), b) in out.iter_mut().zip(v).zip(&self.h) {
                        *o = a + s * b;
                    }
                }
            }
            NoiseCase::Multiplicative => {
                let e = math::exp(self.spec.alpha * z);
                for (o, a) in out.iter_mut().zip(v) {
                    *o = e * a;
                }
            }
            NoiseCase::Deterministic => out.copy_from_slice(v),
        }
    }

    fn form_w(&mut self, v: &[f64], c: &StepCoefficients) {
        if c.shift != 0.0 {
            for ((w, a), b) in self.w.iter_mut().zip(v).zip(&self.h) {
                *w = a + c.shift * b;
            }
        } else {
            self.w.copy_from_slice(v);
        }
    }

    #[inline]
    fn reaction_at(&self, t: f64, i: usize, s: f64, has_phi: bool) -> f64 {
        match &self.spec.nonlinearity {
            Nonlinearity::PowerPlusForcing { .. } => {
                let r = -self.spec.gamma * math::abs_pow(s, self.spec.q - 2.0) * s;
                if has_phi {
                    r + self.phibuf[i]
                } else {
                    r
                }
            }
            Nonlinearity::Custom { .. } => self.spec.f(t, self.grid.coords(i), s),
        }
    }

    /// Fills `self.rhs` with the explicit right-hand side at `v`; returns the
    /// stability number per unit time.
    fn explicit_rhs(&mut self, v: &[f64], t: f64, c: &StepCoefficients, has_g: bool, has_phi: bool) -> f64 {
        self.form_w(v, c);
        let (_, amax) = apply_p_laplace(
            &self.grid,
            &self.w,
            self.spec.p,
            self.cfg.delta,
            &mut self.lap,
            &mut self.flux,
        );
        let custom = matches!(self.spec.nonlinearity, Nonlinearity::Custom { .. });
        let mut smax = 0.0f64;
        let mut dmax = 0.0f64;
        for i in 0..v.len() {
            if self.grid.is_boundary(i) {
                self.rhs[i] = 0.0;
                continue;
            }
            let s = c.inner * self.w[i];
            let mut r = c.diffusion * self.lap[i] + c.outer * self.reaction_at(t, i, s, has_phi);
            if c.linear != 0.0 {
                r += c.linear * v[i];
            }
            if has_g {
                r += c.forcing * self.gbuf[i];
            }
            if c.source != 0.0 {
                r += c.source * self.h[i];
            }
            self.rhs[i] = r;
            if custom {
                dmax = dmax.max(self.spec.dfds(t, self.grid.coords(i), s).abs());
            } else {
                smax = smax.max(s.abs());
            }
        }
        if !custom {
            dmax = self.spec.gamma * (self.spec.q - 1.0) * math::abs_pow(smax, self.spec.q - 2.0);
        }
        let dx = self.grid.dx();
        4.0 * self.grid.dim() as f64 * c.diffusion * amax / (dx * dx)
            + (c.outer * c.inner).abs() * dmax
            + c.linear.abs()
    }

    fn advance(&mut self, v: &mut [f64], t: f64, c: &StepCoefficients) -> core::result::Result<u32, (String, u32)> {
        let has_g = self.g.fill(t, &self.grid, &mut self.gbuf);
        let has_phi = self.phi.fill(t, &self.grid, &mut self.phibuf);
        self.start.copy_from_slice(v);
        let dt = self.cfg.dt;
        let mut level = 0u32;
        loop {
            let m = 1u32 << level;
            let ds = dt / m as f64;
            let (decay, gain) = match self.cfg.scheme {
                Scheme::Imex => (math::exp(-c.kappa * ds), ds * math::phi1(c.kappa * ds)),
                Scheme::Explicit => (1.0 - c.kappa * ds, ds),
            };
            v.copy_from_slice(&self.start);
            let mut failure = None;
            for _ in 0..m {
                let stiff = self.explicit_rhs(v, t, c, has_g, has_phi);
                if !(ds * stiff <= self.cfg.stability_c) {
                    failure = Some(format!("stability number {:.3e} exceeds bound", ds * stiff));
                    break;
                }
                let before = l2_sq(&self.grid, v);
                for (x, r) in v.iter_mut().zip(&self.rhs) {
                    *x = decay * *x + gain * r;
                }
                let after = l2_sq(&self.grid, v);
                if !after.is_finite() {
                    failure = Some(String::from("non-finite state"));
                    break;
                }
                if after > 100.0 * before.max(1e-16) {
                    failure = Some(String::from("norm grew more than tenfold in one substep"));
                    break;
                }
            }
            match failure {
                None => return Ok(m),
                Some(reason) => {
                    level += 1;
                    if level > self.cfg.substep_limit {
                        v.copy_from_slice(&self.start);
                        return Err((reason, level - 1));
                    }
                }
            }
        }
    }

    /// Advances `v` (in place) by one step of length `dt`, with data
    /// evaluated at `t`. Returns the number of substeps used.
    pub fn step(&mut self, v: &mut [f64], t: f64, c: &StepCoefficients) -> Result<u32> {
        self.advance(v, t, c).map_err(|(reason, attempts)| Error::Stiffness {
            time: t,
            reason,
            attempts,
        })
    }

    pub fn step_field(&mut self, v: &Field, t: f64, c: &StepCoefficients) -> Result<Field> {
        if v.grid() != &self.grid {
            return Err(Error::GridMismatch(String::from("field and stepper grids differ")));
        }
        let mut out = v.values().to_vec();
        self.step(&mut out, t, c)?;
        Ok(Field::from_raw(self.grid, out))
    }

    /// Energy balance terms of `v` at data time `t`.
    pub fn energy_terms(&mut self, v: &[f64], t: f64, c: &StepCoefficients) -> EnergyTerms {
        let has_g = self.g.fill(t, &self.grid, &mut self.gbuf);
        let has_phi = self.phi.fill(t, &self.grid, &mut self.phibuf);
        self.form_w(v, c);
        let (grad_w, flux_h) = face_sums(&self.grid, &self.w, &self.h, self.spec.p, self.cfg.delta);
        let q = self.spec.q;
        let mut e = EnergyTerms {
            grad_w,
            flux_h,
            ..EnergyTerms::default()
        };
        for (i, &vi) in v.iter().enumerate() {
            if self.grid.is_boundary(i) {
                continue;
            }
            let wt = self.grid.weight(i);
            e.l2_sq += wt * vi * vi;
            e.q_pow += wt * math::abs_pow(vi, q);
            e.reaction += wt * self.reaction_at(t, i, c.inner * self.w[i], has_phi) * vi;
            if has_g {
                e.g_dot += wt * self.gbuf[i] * vi;
            }
            e.h_dot += wt * self.h[i] * vi;
        }
        let grad_wv = grad_w - c.shift * flux_h;
        e.rate = 2.0
            * ((c.linear - c.kappa) * e.l2_sq - c.diffusion * grad_wv
                + c.outer * e.reaction
                + c.forcing * e.g_dot
                + c.source * e.h_dot);
        e
    }

    /// `z` and `η` at the left ends of `steps` steps and at the final time,
    /// read from `noise` starting at its origin.
    pub fn noise_series<S: NoiseSource>(&self, noise: &S, steps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.spec.noise_case == NoiseCase::Deterministic {
            return Ok((vec![0.0; steps + 1], vec![0.0; steps + 1]));
        }
        let base = noise.base();
        let stride = match math::to_ticks(self.cfg.dt, base.dt()) {
            Some(k) if k >= 1 => k as usize,
            _ => return Err(invalid("dt", "stepper dt must be a multiple of the noise dt")),
        };
        let z = ou_canonical(base, self.ou_rate(), stride, noise.offset_ticks(), steps + 1);
        let eta = if self.spec.noise_case == NoiseCase::Additive && steps > 0 {
            self.spec
                .eta
                .sample(noise, 0.0, steps as f64 * self.cfg.dt, self.cfg.dt)?
        } else {
            vec![0.0; steps + 1]
        };
        Ok((z, eta))
    }

    /// `Φ(duration, tau, noise, u0)`.
    pub fn run<S: NoiseSource>(&mut self, noise: &S, tau: f64, duration: f64, u0: &Field) -> Result<Field> {
        self.run_observed(noise, tau, duration, u0, false, &mut |_| {})
    }

    /// As [`Self::run`], calling `observer` after every step. With `energy`
    /// set, each [`StepInfo`] carries the energy terms of `v` at the left end.
    pub fn run_observed<S: NoiseSource>(
        &mut self,
        noise: &S,
        tau: f64,
        duration: f64,
        u0: &Field,
        energy: bool,
        observer: &mut dyn FnMut(&StepInfo),
    ) -> Result<Field> {
        if u0.grid() != &self.grid {
            return Err(Error::GridMismatch(String::from(
                "initial field and stepper grids differ",
            )));
        }
        if !(duration >= 0.0) {
            return Err(invalid("duration", "must be nonnegative"));
        }
        let dt = self.cfg.dt;
        let steps =
            math::to_ticks(duration, dt).ok_or_else(|| invalid("duration", "must be a multiple of dt"))? as usize;
        if steps == 0 {
            return Ok(u0.clone());
        }
        let tau_tick = math::to_ticks(tau, dt).ok_or_else(|| invalid("tau", "must lie on the step grid"))?;
        let (z, eta) = self.noise_series(noise, steps)?;
        let n = self.grid.len();
        let mut u = u0.values().to_vec();
        let mut v = vec![0.0; n];
        let mut v0 = vec![0.0; n];
        for k in 0..steps {
            let tick = tau_tick + k as i64;
            let ft = self.spec.forcing_time(tick, dt);
            let c = StepCoefficients::for_case(&self.spec, z[k], eta[k]);
            self.to_v(&u, z[k], &mut v);
            let terms = if energy {
                Some(self.energy_terms(&v, ft, &c))
            } else {
                None
            };
            v0.copy_from_slice(&v);
            let substeps = self
                .advance(&mut v, ft, &c)
                .map_err(|(reason, attempts)| Error::Stiffness {
                    time: tick as f64 * dt,
                    reason,
                    attempts,
                })?;
            self.to_u(&v, z[k + 1], &mut u);
            observer(&StepInfo {
                index: k,
                t: tick as f64 * dt,
                forcing_t: ft,
                z: z[k],
                eta: eta[k],
                z_next: z[k + 1],
                coefficients: c,
                substeps,
                energy: terms,
                v: &v0,
                v_next: &v,
                u_next: &u,
            });
        }
        Ok(Field::from_raw(self.grid, u))
    }

    /// `Φ(horizon, τ − horizon, θ_{−horizon} ω, u0)`: the state at `τ` of the
    /// run started at `τ − horizon` against the frozen path `ω`.
    pub fn pullback<S: NoiseSource>(&mut self, omega: &S, tau: f64, horizon: f64, u0: &Field) -> Result<Field> {
        let back =
            math::to_ticks(horizon, omega.dt()).ok_or_else(|| invalid("horizon", "must lie on the noise grid"))?;
        self.run(&omega.shift_ticks(-back), tau - horizon, horizon, u0)
    }
}

fn l2_sq(grid: &Grid, v: &[f64]) -> f64 {
    v.iter().enumerate().map(|(i, x)| grid.weight(i) * x * x).sum()
}

pub fn step_additive(v: &Field, t: f64, z: f64, eta: f64, spec: &ProblemSpec, cfg: &StepperConfig) -> Result<Field> {
    if spec.noise_case != NoiseCase::Additive {
        return Err(invalid("noise_case", "additive stepper needs the additive case"));
    }
    Stepper::new(spec, v.grid(), cfg)?.step_field(v, t, &StepCoefficients::additive(spec, z, eta))
}

pub fn step_multiplicative(v: &Field, t: f64, z: f64, spec: &ProblemSpec, cfg: &StepperConfig) -> Result<Field> {
    if spec.noise_case == NoiseCase::Additive {
        return Err(invalid(
            "noise_case",
            "multiplicative stepper cannot run the additive case",
        ));
    }
    Stepper::new(spec, v.grid(), cfg)?.step_field(v, t, &StepCoefficients::multiplicative(spec, z))
}

pub fn step_deterministic(v: &Field, t: f64, spec: &ProblemSpec, cfg: &StepperConfig) -> Result<Field> {
    Stepper::new(spec, v.grid(), cfg)?.step_field(v, t, &StepCoefficients::deterministic(spec))
}

pub fn transform_u_to_v(u: &Field, z: f64, spec: &ProblemSpec) -> Result<Field> {
    let s = Stepper::new(spec, u.grid(), &StepperConfig::default())?;
    let mut out = vec![0.0; u.grid().len()];
    s.to_v(u.values(), z, &mut out);
    Ok(Field::from_raw(*u.grid(), out))
}

pub fn transform_v_to_u(v: &Field, z: f64, spec: &ProblemSpec) -> Result<Field> {
    let s = Stepper::new(spec, v.grid(), &StepperConfig::default())?;
    let mut out = vec![0.0; v.grid().len()];
    s.to_u(v.values(), z, &mut out);
    Ok(Field::from_raw(*v.grid(), out))
}

/// `Φ(t, τ, ω, u_τ)`.
pub fn cocycle_apply<S: NoiseSource>(
    t: f64,
    tau: f64,
    noise: &S,
    u_tau: &Field,
    spec: &ProblemSpec,
    cfg: &StepperConfig,
) -> Result<Field> {
    Stepper::new(spec, u_tau.grid(), cfg)?.run(noise, tau, t, u_tau)
}

/// Per-step series of a trajectory of `v`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub l2_sq: Vec<f64>,
    /// `‖∇w‖_pᵖ`
    pub grad_p: Vec<f64>,
    /// `‖v‖_q^q`
    pub q_pow: Vec<f64>,
    pub z: Vec<f64>,
    pub eta: Vec<f64>,
    /// `(t, v(t))` every `snapshot_every` steps, if requested.
    pub snapshots: Vec<(f64, Field)>,
}

/// Runs `Φ(duration, tau, noise, u0)` and records the energy series.
pub fn record_trajectory<S: NoiseSource>(
    stepper: &mut Stepper,
    noise: &S,
    tau: f64,
    duration: f64,
    u0: &Field,
    snapshot_every: Option<usize>,
) -> Result<(Field, TrajectoryRecord)> {
    let mut rec = TrajectoryRecord::default();
    let grid = *stepper.grid();
    let end = stepper.run_observed(noise, tau, duration, u0, true, &mut |info| {
        let e = info.energy.unwrap_or_default();
        rec.times.push(info.t);
        rec.l2_sq.push(e.l2_sq);
        rec.grad_p.push(e.grad_w);
        rec.q_pow.push(e.q_pow);
        rec.z.push(info.z);
        rec.eta.push(info.eta);
        if let Some(every) = snapshot_every {
            if every > 0 && info.index % every == 0 {
                rec.snapshots.push((info.t, Field::from_raw(grid, info.v.to_vec())));
            }
        }
    })?;
    Ok((end, rec))
}

/// A pullback run that did not complete.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub horizon: f64,
    pub initial: usize,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PullbackResult {
    /// One ensemble per horizon (in input order) that has at least one member.
    pub ensembles: Vec<EndpointEnsemble>,
    pub failures: Vec<RunFailure>,
}

/// Pullback endpoints at `τ` for every horizon and initial field, fanned out
/// over `pool`.
#[allow(clippy::too_many_arguments)]
pub fn pullback_run<P: TaskPool>(
    pool: &P,
    spec: &ProblemSpec,
    grid: &Grid,
    cfg: &StepperConfig,
    path: &NoisePath,
    tau: f64,
    horizons: &[f64],
    initials: &[Field],
) -> Result<PullbackResult> {
    if initials.is_empty() {
        return Err(invalid("initials", "need at least one initial field"));
    }
    if horizons.iter().any(|h| !(*h > 0.0)) {
        return Err(invalid("horizons", "must be positive"));
    }
    let proto = Stepper::new(spec, grid, cfg)?;
    let tasks: Vec<(usize, usize)> = (0..horizons.len())
        .flat_map(|h| (0..initials.len()).map(move |i| (h, i)))
        .collect();
    let results = pool.map(&tasks, |&(h, i)| {
        let mut s = proto.clone();
        s.pullback(path, tau, horizons[h], &initials[i])
    });
    let mut out = PullbackResult::default();
    let mut buckets: Vec<Vec<Field>> = vec![Vec::new(); horizons.len()];
    for (&(h, i), r) in tasks.iter().zip(results) {
        match r {
            Ok(f) => buckets[h].push(f),
            Err(error) => out.failures.push(RunFailure {
                horizon: horizons[h],
                initial: i,
                error,
            }),
        }
    }
    for (h, members) in buckets.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        out.ensembles.push(EndpointEnsemble::new(
            members,
            EnsembleTag {
                tau,
                seed: path.seed(),
                alpha: spec.alpha,
                horizon: horizons[h],
            },
        )?);
    }
    Ok(out)
}
