//! Coefficients and structural functions of the stochastic p-Laplace
//! equations, the built-in nonlinearity family, and sampled checks of the
//! structural inequalities on `f`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{invalid, Result};
use crate::expr::{Expr, Vars};
use crate::field::Grid;
use crate::math;
use crate::noise::EtaProcess;

/// Time dependence of a separable forcing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    Constant,
    Cos {
        period: f64,
    },
    Sin {
        period: f64,
    },
    /// `e^{rate·t}`
    Exp {
        rate: f64,
    },
}

impl TimeProfile {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Cos { period } => math::cos(2.0 * math::PI * t / period),
            TimeProfile::Sin { period } => math::sin(2.0 * math::PI * t / period),
            TimeProfile::Exp { rate } => math::exp(rate * t),
        }
    }
}

/// A scalar function of `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceTimeFn {
    Zero,
    /// `amplitude · time(t) · exp(−|x|²/width²)`
    Gaussian {
        amplitude: f64,
        width: f64,
        time: TimeProfile,
    },
    Expr(Expr),
}

impl SpaceTimeFn {
    pub fn gaussian(amplitude: f64, width: f64, time: TimeProfile) -> Self {
        SpaceTimeFn::Gaussian { amplitude, width, time }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SpaceTimeFn::Zero)
            || matches!(self, SpaceTimeFn::Gaussian { amplitude, .. } if *amplitude == 0.0)
    }

    pub fn eval(&self, t: f64, x: [f64; 2]) -> f64 {
        match self {
            SpaceTimeFn::Zero => 0.0,
            SpaceTimeFn::Gaussian { amplitude, width, time } => {
                amplitude * time.at(t) * math::exp(-(x[0] * x[0] + x[1] * x[1]) / (width * width))
            }
            SpaceTimeFn::Expr(e) => e.eval(&Vars {
                s: 0.0,
                t,
                x: x[0],
                y: x[1],
            }),
        }
    }

    /// Splits a separable function into `(amplitude·time(t), spatial profile)`.
    pub(crate) fn separable(&self) -> Option<(f64, TimeProfile, f64)> {
        match self {
            SpaceTimeFn::Gaussian { amplitude, width, time } => Some((*amplitude, *time, *width)),
            _ => None,
        }
    }

    /// Same function with its amplitude multiplied by `c` (expressions are
    /// wrapped in a product).
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            SpaceTimeFn::Zero => SpaceTimeFn::Zero,
            SpaceTimeFn::Gaussian { amplitude, width, time } => SpaceTimeFn::Gaussian {
                amplitude: amplitude * c,
                width: *width,
                time: *time,
            },
            SpaceTimeFn::Expr(e) => SpaceTimeFn::Expr(
                Expr::parse(&alloc::format!("({c:e})*({})", e.source())).expect("scaling a valid expression"),
            ),
        }
    }
}

/// Which equation is being simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseCase {
    /// `… + αη(θ_t ω)u + εh dW/dt`
    Additive,
    /// `… + αu ∘ dW/dt`
    Multiplicative,
    /// The noise-free limit.
    Deterministic,
}

/// Envelopes of a custom nonlinearity, supplied by the user.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomEnvelopes {
    /// Dissipation constant in `f(t,x,s)s ≤ −γ|s|^q + ψ₁`.
    pub gamma: f64,
    pub psi1: SpaceTimeFn,
    pub psi2: f64,
    pub psi3: SpaceTimeFn,
    pub psi4: f64,
    pub psi5: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    /// `f(t,x,s) = −γ|s|^{q−2}s + φ(t,x)`
    PowerPlusForcing { phi: SpaceTimeFn },
    /// `f` given as an expression in `s, t, x, y, r`.
    Custom { f: Expr, envelopes: CustomEnvelopes },
}

/// Pointwise values of the structural envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelopes {
    pub gamma: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    pub psi4: f64,
    pub psi5: f64,
}

/// All coefficients and structural functions of one equation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub lambda: f64,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub noise_case: NoiseCase,
    pub g: SpaceTimeFn,
    pub h: SpaceTimeFn,
    pub nonlinearity: Nonlinearity,
    pub eta: EtaProcess,
    pub period: Option<f64>,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self::default_additive()
    }
}

impl ProblemSpec {
    /// λ = γ = 1, p = 3, q = 4, T = 1, φ = 0.5 sin(2πt) e^{−|x|²},
    /// g = 0.5 cos(2πt) e^{−|x|²}, h = e^{−|x|²/2}, α = α₀/2, ε = 0.5.
    pub fn default_additive() -> Self {
        let lambda = 1.0;
        let eta = EtaProcess::default();
        Self {
            lambda,
            gamma: 1.0,
            p: 3.0,
            q: 4.0,
            alpha: 0.5 * alpha_zero(lambda, eta.mean()),
            epsilon: 0.5,
            noise_case: NoiseCase::Additive,
            g: SpaceTimeFn::gaussian(0.5, 1.0, TimeProfile::Cos { period: 1.0 }),
            h: SpaceTimeFn::gaussian(1.0, core::f64::consts::SQRT_2, TimeProfile::Constant),
            nonlinearity: Nonlinearity::PowerPlusForcing {
                phi: SpaceTimeFn::gaussian(0.5, 1.0, TimeProfile::Sin { period: 1.0 }),
            },
            eta,
            period: Some(1.0),
        }
    }

    /// The default instance with multiplicative noise, α = 0.1.
    pub fn default_multiplicative() -> Self {
        Self {
            alpha: 0.1,
            epsilon: 0.0,
            noise_case: NoiseCase::Multiplicative,
            ..Self::default_additive()
        }
    }

    /// The default instance with the noise switched off.
    pub fn deterministic() -> Self {
        Self {
            alpha: 0.0,
            epsilon: 0.0,
            noise_case: NoiseCase::Deterministic,
            ..Self::default_additive()
        }
    }

    /// Same problem with every forcing (`g` and `φ`) removed.
    pub fn without_forcing(mut self) -> Self {
        self.g = SpaceTimeFn::Zero;
        if let Nonlinearity::PowerPlusForcing { phi } = &mut self.nonlinearity {
            *phi = SpaceTimeFn::Zero;
        }
        self
    }

    /// Checks the standing assumptions on the coefficients.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(invalid("lambda", "must be positive"));
        }
        if !(self.gamma > 0.0) {
            return Err(invalid("gamma", "must be positive"));
        }
        if !(self.p >= 2.0) {
            return Err(invalid("p", "must be at least 2"));
        }
        if !(self.q >= self.p) {
            return Err(invalid("q", "q must be ≥ p"));
        }
        if !(self.alpha >= 0.0) {
            return Err(invalid("alpha", "must be nonnegative"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(invalid("epsilon", "must be nonnegative"));
        }
        if let Some(t) = self.period {
            if !(t > 0.0) {
                return Err(invalid("period", "must be positive"));
            }
        }
        if self.noise_case == NoiseCase::Deterministic && self.alpha != 0.0 {
            return Err(invalid("alpha", "must be 0 for the deterministic case"));
        }
        Ok(())
    }

    /// Conjugate exponent of `p`.
    pub fn p1(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Conjugate exponent of `q`.
    pub fn q1(&self) -> f64 {
        self.q / (self.q - 1.0)
    }

    pub fn f(&self, t: f64, x: [f64; 2], s: f64) -> f64 {
        match &self.nonlinearity {
            Nonlinearity::PowerPlusForcing { phi } => -self.gamma * math::abs_pow(s, self.q - 2.0) * s + phi.eval(t, x),
            Nonlinearity::Custom { f, .. } => f.eval(&Vars { s, t, x: x[0], y: x[1] }),
        }
    }

    /// `∂f/∂s`, analytic for the built-in family and a central difference
    /// otherwise.
    pub fn dfds(&self, t: f64, x: [f64; 2], s: f64) -> f64 {
        match &self.nonlinearity {
            Nonlinearity::PowerPlusForcing { .. } => -self.gamma * (self.q - 1.0) * math::abs_pow(s, self.q - 2.0),
            Nonlinearity::Custom { .. } => {
                let h = 1e-6 * (1.0 + s.abs());
                (self.f(t, x, s + h) - self.f(t, x, s - h)) / (2.0 * h)
            }
        }
    }

    /// Young constant `C` in `|φ s| ≤ (γ/2)|s|^q + C|φ|^{q₁}`.
    fn young_constant(&self) -> f64 {
        let q = self.q;
        let q1 = self.q1();
        math::powf(q * self.gamma / 2.0, -q1 / q) / q1
    }

    pub fn envelopes(&self, t: f64, x: [f64; 2]) -> Envelopes {
        match &self.nonlinearity {
            Nonlinearity::PowerPlusForcing { phi } => {
                let q = self.q;
                let gamma = self.gamma;
                if phi.is_zero() {
                    Envelopes {
                        gamma,
                        psi1: 0.0,
                        psi2: gamma + 1.0,
                        psi3: 0.0,
                        psi4: 0.0,
                        psi5: gamma * (q - 1.0) + 1.0,
                    }
                } else {
                    let ph = phi.eval(t, x).abs();
                    Envelopes {
                        gamma: 0.5 * gamma,
                        psi1: self.young_constant() * math::abs_pow(ph, self.q1()),
                        psi2: gamma + 1.0,
                        psi3: ph,
                        psi4: 0.0,
                        psi5: gamma * (q - 1.0) + 1.0,
                    }
                }
            }
            Nonlinearity::Custom { envelopes: e, .. } => Envelopes {
                gamma: e.gamma,
                psi1: e.psi1.eval(t, x),
                psi2: e.psi2,
                psi3: e.psi3.eval(t, x),
                psi4: e.psi4,
                psi5: e.psi5,
            },
        }
    }

    /// Dissipation constant the structural inequality (f1) holds with.
    pub fn structural_gamma(&self) -> f64 {
        self.envelopes(0.0, [0.0, 0.0]).gamma
    }

    /// Argument at which time-dependent data is evaluated for grid tick
    /// `tick` of spacing `dt`. With a period that is a whole number of ticks,
    /// the tick is first reduced modulo the period, so periodic data is
    /// reproduced bit for bit.
    pub fn forcing_time(&self, tick: i64, dt: f64) -> f64 {
        if let Some(period) = self.period {
            if let Some(pt) = math::to_ticks(period, dt) {
                if pt > 0 {
                    return tick.rem_euclid(pt) as f64 * dt;
                }
            }
        }
        tick as f64 * dt
    }
}

/// `α₀ = λ / (8(1 + |E(η)|))`.
pub fn alpha_zero(lambda: f64, eta_mean: f64) -> f64 {
    lambda / (8.0 * (1.0 + eta_mean.abs()))
}

/// Which structural inequality a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// `f(t,x,s)s ≤ −γ|s|^q + ψ₁`
    F1,
    /// `|f| ≤ ψ₂|s|^{q−1} + ψ₃`
    F2,
    /// `∂f/∂s ≤ ψ₄`
    F3,
    /// `|∂f/∂s| ≤ ψ₅(1 + |s|^{q−2})`
    F71,
}

pub const CONDITIONS: [Condition; 4] = [Condition::F1, Condition::F2, Condition::F3, Condition::F71];

/// `rhs − lhs` of each structural inequality at one point (nonnegative when
/// the inequality holds), in the order of [`CONDITIONS`].
pub fn structure_margins(spec: &ProblemSpec, t: f64, x: [f64; 2], s: f64) -> [f64; 4] {
    let e = spec.envelopes(t, x);
    let q = spec.q;
    let f = spec.f(t, x, s);
    let d = spec.dfds(t, x, s);
    [
        -e.gamma * math::abs_pow(s, q) + e.psi1 - f * s,
        e.psi2 * math::abs_pow(s, q - 1.0) + e.psi3 - f.abs(),
        e.psi4 - d,
        e.psi5 * (1.0 + math::abs_pow(s, q - 2.0)) - d.abs(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub condition: Condition,
    pub t: f64,
    pub x: [f64; 2],
    pub s: f64,
    /// `lhs − rhs > 0`
    pub excess: f64,
}

/// Sampling box for [`validate_structure`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRanges {
    pub t: (f64, f64),
    pub x_half_width: f64,
    pub dim: usize,
    pub s_max: f64,
    pub seed: u64,
}

impl Default for SampleRanges {
    fn default() -> Self {
        Self {
            t: (-2.0, 2.0),
            x_half_width: 8.0,
            dim: 1,
            s_max: 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StructureReport {
    pub samples: usize,
    pub violations: Vec<Violation>,
}

impl StructureReport {
    pub fn violations_of(&self, c: Condition) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.condition == c)
    }
}

/// Evaluates (f1), (f2), (f3) and (f71) at `sample_count` random points and
/// the deterministic point `s = ±1` at the origin.
pub fn validate_structure(spec: &ProblemSpec, sample_count: usize, ranges: &SampleRanges) -> StructureReport {
    let mut rng = ChaCha12Rng::seed_from_u64(ranges.seed);
    let mut violations = Vec::new();
    let mut points: Vec<(f64, [f64; 2], f64)> = Vec::with_capacity(sample_count + 2);
    points.push((0.0, [0.0, 0.0], 1.0));
    points.push((0.0, [0.0, 0.0], -1.0));
    let l = ranges.x_half_width;
    for _ in 0..sample_count {
        let t = rng.random_range(ranges.t.0..=ranges.t.1);
        let x0 = rng.random_range(-l..=l);
        let x1 = if ranges.dim == 2 { rng.random_range(-l..=l) } else { 0.0 };
        let s = rng.random_range(-ranges.s_max..=ranges.s_max);
        points.push((t, [x0, x1], s));
    }
    for &(t, x, s) in &points {
        let m = structure_margins(spec, t, x, s);
        for (c, margin) in CONDITIONS.iter().zip(m) {
            // relative slack for the finite-difference derivative of custom f
            let scale = 1.0 + math::abs_pow(s, spec.q);
            if margin < -1e-9 * scale {
                violations.push(Violation {
                    condition: *c,
                    t,
                    x,
                    s,
                    excess: -margin,
                });
            }
        }
    }
    StructureReport {
        samples: points.len(),
        violations,
    }
}

/// Spatial norms of the forcing terms entering the absorbing radii.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForcingNormsAt {
    /// `‖g(t)‖²`
    pub g_l2_sq: f64,
    /// `‖ψ₁(t)‖_{L¹}`
    pub psi1_l1: f64,
    /// `‖ψ₃(t)‖_{L^{q₁}}^{q₁}`
    pub psi3_lq1: f64,
}

impl ForcingNormsAt {
    pub fn sum(&self) -> f64 {
        self.g_l2_sq + self.psi1_l1 + self.psi3_lq1
    }
}

/// Evaluates [`ForcingNormsAt`] at arbitrary times on a fixed grid, using the
/// separable structure of the built-in forcings when available.
#[derive(Debug, Clone)]
pub struct ForcingNorms<'a> {
    spec: &'a ProblemSpec,
    grid: Grid,
    g_sep: Option<(f64, TimeProfile, f64)>,
    phi_sep: Option<(f64, TimeProfile, f64)>,
    phi_zero: bool,
}

impl<'a> ForcingNorms<'a> {
    pub fn new(spec: &'a ProblemSpec, grid: &Grid) -> Self {
        let grid = *grid;
        let gauss = |w: f64, r: f64| -> f64 {
            let pts: Vec<f64> = (0..grid.len())
                .map(|i| {
                    if grid.is_boundary(i) {
                        0.0
                    } else {
                        let [x, y] = grid.coords(i);
                        math::exp(-(x * x + y * y) / (w * w))
                    }
                })
                .collect();
            grid.integrate(&pts, |v| math::abs_pow(v, r))
        };
        let g_sep = spec.g.separable().map(|(a, tp, w)| (a, tp, gauss(w, 2.0)));
        let (phi_sep, phi_zero) = match &spec.nonlinearity {
            Nonlinearity::PowerPlusForcing { phi } => (
                phi.separable().map(|(a, tp, w)| (a, tp, gauss(w, spec.q1()))),
                phi.is_zero(),
            ),
            Nonlinearity::Custom { .. } => (None, false),
        };
        Self {
            spec,
            grid,
            g_sep,
            phi_sep,
            phi_zero,
        }
    }

    pub fn at(&self, t: f64) -> ForcingNormsAt {
        let spec = self.spec;
        let grid = &self.grid;
        let on_grid = |f: &dyn Fn([f64; 2]) -> f64| -> f64 {
            (0..grid.len())
                .filter(|&i| !grid.is_boundary(i))
                .map(|i| grid.weight(i) * f(grid.coords(i)))
                .sum()
        };
        let g_l2_sq = if spec.g.is_zero() {
            0.0
        } else if let Some((a, tp, s2)) = self.g_sep {
            let c = a * tp.at(t);
            c * c * s2
        } else {
            on_grid(&|x| {
                let v = spec.g.eval(t, x);
                v * v
            })
        };
        let q1 = spec.q1();
        let (psi1_l1, psi3_lq1) = if self.phi_zero {
            (0.0, 0.0)
        } else if let Some((a, tp, sq1)) = self.phi_sep {
            let c = math::abs_pow(a * tp.at(t), q1) * sq1;
            (spec.young_constant() * c, c)
        } else {
            (
                on_grid(&|x| spec.envelopes(t, x).psi1.abs()),
                on_grid(&|x| math::abs_pow(spec.envelopes(t, x).psi3, q1)),
            )
        };
        ForcingNormsAt {
            g_l2_sq,
            psi1_l1,
            psi3_lq1,
        }
    }
}

/// Outcome of the time-integrability check on the forcing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthCheck {
    /// Truncated quadrature of `∫_{−∞}^τ e^{λs}(‖g‖² + ‖ψ₁‖₁ + ‖ψ₃‖_{q₁}^{q₁}) ds`.
    pub value: f64,
    pub finite: bool,
}

/// Trapezoid quadrature of the forcing growth integral, truncated where the
/// weight `e^{λ(s−τ)}` drops below `1e−12`. The integral is reported as not
/// finite when the weighted integrand over the last unit of the truncated
/// range is not negligible against its maximum.
pub fn check_growth_condition(spec: &ProblemSpec, grid: &Grid, tau: f64, quad_dt: f64) -> GrowthCheck {
    let norms = ForcingNorms::new(spec, grid);
    let lambda = spec.lambda;
    let span = math::ln(1e12) / lambda;
    let steps = math::ceil(span / quad_dt) as usize;
    let tail_steps = (math::ceil(1.0 / quad_dt) as usize).min(steps);
    let mut total = 0.0;
    let mut peak = 0.0f64;
    let mut tail_peak = 0.0f64;
    let mut prev = norms.at(tau).sum();
    peak = peak.max(prev);
    for k in 1..=steps {
        let s = -(k as f64) * quad_dt;
        let cur = math::exp(lambda * s) * norms.at(tau + s).sum();
        total += 0.5 * quad_dt * (prev + cur);
        prev = cur;
        peak = peak.max(cur.abs());
        if k + tail_steps > steps {
            tail_peak = tail_peak.max(cur.abs());
        }
    }
    let finite = total.is_finite() && (peak == 0.0 || tail_peak <= 1e-9 * peak);
    GrowthCheck {
        value: math::exp(lambda * tau) * total,
        finite,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let s = ProblemSpec::default_additive();
        s.validate().unwrap();
        assert_eq!((s.p, s.q), (3.0, 4.0));
        assert_eq!(s.alpha, 0.0625);
        ProblemSpec::default_multiplicative().validate().unwrap();
        ProblemSpec::deterministic().validate().unwrap();
    }

    #[test]
    fn rejects_q_below_p() {
        let s = ProblemSpec {
            q: 2.0,
            ..ProblemSpec::default()
        };
        assert!(s.validate().is_err());
        let s = ProblemSpec {
            p: 1.5,
            q: 4.0,
            ..ProblemSpec::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn alpha_zero_values() {
        assert_eq!(alpha_zero(1.0, 0.0), 0.125);
        assert_eq!(alpha_zero(8.0, 0.0), 1.0);
        assert_eq!(alpha_zero(1.0, -1.0), 1.0 / 16.0);
    }

    #[test]
    fn conjugates() {
        let s = ProblemSpec::default();
        assert!((1.0 / s.p + 1.0 / s.p1() - 1.0).abs() < 1e-15);
        assert!((1.0 / s.q + 1.0 / s.q1() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn forcing_time_wraps_period() {
        let s = ProblemSpec::default();
        let dt = 1e-3;
        assert_eq!(s.forcing_time(1250, dt), s.forcing_time(250, dt));
        assert_eq!(s.forcing_time(-750, dt), s.forcing_time(250, dt));
        let aperiodic = ProblemSpec {
            period: None,
            ..ProblemSpec::default()
        };
        assert_eq!(aperiodic.forcing_time(1250, dt), 1250.0 * dt);
    }

    #[test]
    fn growth_zero_forcing() {
        let s = ProblemSpec::default().without_forcing();
        let g = Grid::new(1, 8.0, 65).unwrap();
        let c = check_growth_condition(&s, &g, 0.0, 0.01);
        assert_eq!(c.value, 0.0);
        assert!(c.finite);
    }
}
