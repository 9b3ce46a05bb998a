//! Quantitative diagnostics: absorbing radii and absorbing-set entry, energy
//! audits, tail monitors, attractor estimates, periodicity and the
//! small-noise limit.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::field::{hausdorff_semidistance, lr_pow, tail_mass, EndpointEnsemble, EnsembleTag, Field, Grid};
use crate::integrator::{Stepper, StepperConfig};
use crate::math;
use crate::noise::{ou_from_path, NoisePath, NoiseSource};
use crate::pool::TaskPool;
use crate::problem::{ForcingNorms, NoiseCase, ProblemSpec};

/// Options of the absorbing-radius quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusOptions {
    /// Calibration constant `c`.
    pub c: f64,
    /// Truncation threshold for the exponential weight.
    pub quad_tol: f64,
    /// Quadrature step; a multiple of the path resolution.
    pub quad_dt: f64,
}

impl Default for RadiusOptions {
    fn default() -> Self {
        Self {
            c: 4.0,
            quad_tol: 1e-12,
            quad_dt: 0.01,
        }
    }
}

/// Absorbing radius of the additive case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditiveRadius {
    /// `R(τ, ω, α, ε)`
    pub r: f64,
    /// Part of `R` coming from the noise terms.
    pub noise_part: f64,
    /// Part of `R` coming from the forcing.
    pub forcing_part: f64,
    /// `‖εh z(ω)‖²`
    pub h_term: f64,
    /// `2‖εh z(ω)‖² + 2R`, the bound on `‖u(τ)‖²`.
    pub bound: f64,
    /// Truncation point `S` of the quadrature.
    pub truncation: f64,
}

/// Absorbing radius of the multiplicative case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplicativeRadius {
    /// `R(α, τ, ω)`
    pub r: f64,
    /// `z(ω)`
    pub z0: f64,
    /// `e^{2αz(ω)} R`, the bound on `‖u(τ)‖²`.
    pub bound: f64,
    pub truncation: f64,
}

/// Trapezoid quadrature of `∫_{−S}^0 e^{(5/4)λs − 2α∫_0^s ζ(r) dr} F(s) ds`
/// where `ζ` and `F` are tabulated backward from `s = 0` with spacing `h`.
/// Returns `None` when the weight has not dropped below `tol` by the end.
fn weighted_backward(lambda: f64, alpha: f64, h: f64, zeta: &[f64], integrand: &[f64], tol: f64) -> Option<(f64, f64)> {
    let mut total = 0.0;
    let mut int_zeta = 0.0;
    let mut prev = integrand[0];
    let per_unit = math::ceil(1.0 / h) as usize;
    let mut window_max = 0.0f64;
    for k in 1..zeta.len() {
        // ∫_0^s with s < 0 is minus the integral over [s, 0]
        int_zeta -= 0.5 * h * (zeta[k - 1] + zeta[k]);
        let s = -(k as f64) * h;
        let weight = math::exp(1.25 * lambda * s - 2.0 * alpha * int_zeta);
        let cur = weight * integrand[k];
        total += 0.5 * h * (prev + cur);
        prev = cur;
        window_max = window_max.max(weight);
        if k % per_unit == 0 {
            if window_max < tol {
                return Some((total, -s));
            }
            window_max = 0.0;
        }
    }
    None
}

/// Runs `body(S)` with `S` doubling from an initial guess until it reports
/// convergence.
fn with_growing_span<T>(lambda: f64, tol: f64, mut body: impl FnMut(f64) -> Result<Option<T>>) -> Result<T> {
    let mut span = math::ceil(1.5 * math::ln(1.0 / tol) / lambda);
    for _ in 0..6 {
        if let Some(t) = body(span)? {
            return Ok(t);
        }
        span *= 2.0;
    }
    Err(Error::NonConvergent(alloc::format!(
        "exponential weight still above tolerance at s = -{span}"
    )))
}

/// `R(τ, ω, α, ε)` of the additive case by truncated quadrature.
pub fn absorbing_radius_additive<S: NoiseSource>(
    spec: &ProblemSpec,
    grid: &Grid,
    omega: &S,
    tau: f64,
    opts: &RadiusOptions,
) -> Result<AdditiveRadius> {
    let norms = ForcingNorms::new(spec, grid);
    let h = opts.quad_dt;
    let (p, q) = (spec.p, spec.q);
    let (a, e) = (spec.alpha, spec.epsilon);
    let h_field = Field::from_fn(*grid, |x| spec.h.eval(0.0, x));
    with_growing_span(spec.lambda, opts.quad_tol, |span| {
        let z = ou_from_path(omega, spec.lambda, -span, 0.0, h)?;
        let eta = spec.eta.sample(omega, -span, 0.0, h)?;
        let n = z.len();
        let zb: Vec<f64> = (0..n).map(|k| z.values[n - 1 - k]).collect();
        let eb: Vec<f64> = (0..n).map(|k| eta[n - 1 - k]).collect();
        let noise: Vec<f64> = zb
            .iter()
            .zip(&eb)
            .map(|(&zv, &ev)| {
                let ez = e * zv;
                math::abs_pow(ez, p) + math::abs_pow(ez, q) + (a * ez * ev) * (a * ez * ev)
            })
            .collect();
        let forcing: Vec<f64> = (0..n).map(|k| norms.at(tau - k as f64 * h).sum()).collect();
        let nz = weighted_backward(spec.lambda, a, h, &eb, &noise, opts.quad_tol);
        let fz = weighted_backward(spec.lambda, a, h, &eb, &forcing, opts.quad_tol);
        Ok(match (nz, fz) {
            (Some((ni, s1)), Some((fi, s2))) => {
                let z0 = zb[0];
                let h_term = (e * z0) * (e * z0) * h_field.l2_sq();
                let r = opts.c * ni + opts.c * fi;
                Some(AdditiveRadius {
                    r,
                    noise_part: opts.c * ni,
                    forcing_part: opts.c * fi,
                    h_term,
                    bound: 2.0 * h_term + 2.0 * r,
                    truncation: s1.max(s2),
                })
            }
            _ => None,
        })
    })
}

/// `R(α, τ, ω)` of the multiplicative case by truncated quadrature. With
/// `α = 0` this is the deterministic radius `R₀(τ)`.
pub fn absorbing_radius_multiplicative<S: NoiseSource>(
    spec: &ProblemSpec,
    grid: &Grid,
    omega: &S,
    tau: f64,
    opts: &RadiusOptions,
) -> Result<MultiplicativeRadius> {
    let norms = ForcingNorms::new(spec, grid);
    let h = opts.quad_dt;
    let a = spec.alpha;
    with_growing_span(spec.lambda, opts.quad_tol, |span| {
        let n = math::round(span / h) as usize + 1;
        let zb: Vec<f64> = if a == 0.0 {
            vec![0.0; n]
        } else {
            let z = ou_from_path(omega, 1.0, -span, 0.0, h)?;
            (0..n).map(|k| z.values[n - 1 - k]).collect()
        };
        let integrand: Vec<f64> = (0..n)
            .map(|k| {
                let f = norms.at(tau - k as f64 * h);
                math::exp(-2.0 * a * zb[k]) * (f.psi1_l1 + f.g_l2_sq)
            })
            .collect();
        Ok(
            weighted_backward(spec.lambda, a, h, &zb, &integrand, opts.quad_tol).map(|(i, s)| {
                let r = opts.c + opts.c * i;
                MultiplicativeRadius {
                    r,
                    z0: zb[0],
                    bound: math::exp(2.0 * a * zb[0]) * r,
                    truncation: s,
                }
            }),
        )
    })
}

/// `R₀(τ)`, the radius of the noise-free limit.
pub fn absorbing_radius_deterministic(spec: &ProblemSpec, grid: &Grid, tau: f64, opts: &RadiusOptions) -> Result<f64> {
    let det = ProblemSpec {
        alpha: 0.0,
        ..spec.clone()
    };
    let path = NoisePath::zero(opts.quad_dt, 1.0)?;
    Ok(absorbing_radius_multiplicative(&det, grid, &path, tau, opts)?.r)
}

/// Bound on `‖u(τ)‖²` for the active noise case.
pub fn absorbing_bound<S: NoiseSource>(
    spec: &ProblemSpec,
    grid: &Grid,
    omega: &S,
    tau: f64,
    opts: &RadiusOptions,
) -> Result<f64> {
    match spec.noise_case {
        NoiseCase::Additive => Ok(absorbing_radius_additive(spec, grid, omega, tau, opts)?.bound),
        NoiseCase::Multiplicative => Ok(absorbing_radius_multiplicative(spec, grid, omega, tau, opts)?.bound),
        NoiseCase::Deterministic => absorbing_radius_deterministic(spec, grid, tau, opts),
    }
}

/// Random smooth fields (sums of three Gaussian bumps centred in the inner
/// half of the box) with `L²` norms spread over `[radius/4, radius]`.
pub fn initial_ball(grid: &Grid, radius: f64, count: usize, seed: u64) -> Vec<Field> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let l = grid.half_width();
    (0..count)
        .map(|_| {
            let bumps: Vec<(f64, [f64; 2], f64)> = (0..3)
                .map(|_| {
                    let amp: f64 = rng.sample(StandardNormal);
                    let c = [
                        rng.random_range(-0.5 * l..=0.5 * l),
                        if grid.dim() == 2 {
                            rng.random_range(-0.5 * l..=0.5 * l)
                        } else {
                            0.0
                        },
                    ];
                    (amp, c, rng.random_range(0.5..=1.5))
                })
                .collect();
            let f = Field::from_fn(*grid, |[x, y]| {
                bumps
                    .iter()
                    .map(|(a, c, w)| {
                        let d2 = (x - c[0]) * (x - c[0]) + (y - c[1]) * (y - c[1]);
                        a * math::exp(-d2 / (w * w))
                    })
                    .sum()
            });
            let target = radius * rng.random_range(0.25..=1.0);
            let norm = f.l2();
            if norm > 0.0 {
                f.scaled(target / norm)
            } else {
                f
            }
        })
        .collect()
}

/// One (seed, horizon) line of an absorbing check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorbingRow {
    pub seed: u64,
    pub horizon: f64,
    /// Largest `‖u(τ)‖²` over the initial set.
    pub endpoint_l2_sq: f64,
    pub bound: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathVerdict {
    pub seed: u64,
    /// Satisfied at the largest horizon.
    pub satisfied: bool,
    /// `bound − endpoint_l2_sq` at the largest horizon.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AbsorbingReport {
    pub rows: Vec<AbsorbingRow>,
    pub per_path: Vec<PathVerdict>,
    /// Largest bound over the seeds.
    pub radius_sq: f64,
    /// First horizon from which every path satisfies the bound at every
    /// larger tested horizon.
    pub entry_time: Option<f64>,
}

/// Pullback runs for every (seed, horizon, initial) triple; endpoints in that
/// order.
fn pullback_grid<P: TaskPool>(
    pool: &P,
    proto: &Stepper,
    template: &NoisePath,
    seeds: &[u64],
    tau: f64,
    horizons: &[f64],
    initials: &[Field],
) -> Result<Vec<Field>> {
    let mut tasks = Vec::with_capacity(seeds.len() * horizons.len() * initials.len());
    for &s in seeds {
        for &h in horizons {
            for i in 0..initials.len() {
                tasks.push((s, h, i));
            }
        }
    }
    pool.map(&tasks, |&(seed, h, i)| {
        let mut st = proto.clone();
        st.pullback(&template.with_seed(seed), tau, h, &initials[i])
    })
    .into_iter()
    .collect()
}

/// Checks `‖u(τ)‖² ≤ bound` for pullback runs from the given initial set.
#[allow(clippy::too_many_arguments)]
pub fn absorbing_check<P: TaskPool>(
    pool: &P,
    spec: &ProblemSpec,
    grid: &Grid,
    cfg: &StepperConfig,
    template: &NoisePath,
    seeds: &[u64],
    tau: f64,
    horizons: &[f64],
    initials: &[Field],
    opts: &RadiusOptions,
) -> Result<AbsorbingReport> {
    if initials.is_empty() || seeds.is_empty() || horizons.is_empty() {
        return Err(invalid("absorbing_check", "needs seeds, horizons and initial fields"));
    }
    let proto = Stepper::new(spec, grid, cfg)?;
    let ends = pullback_grid(pool, &proto, template, seeds, tau, horizons, initials)?;
    let bounds: Vec<f64> = pool
        .map(seeds, |&s| {
            absorbing_bound(spec, grid, &template.with_seed(s), tau, opts)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let mut rep = AbsorbingReport {
        radius_sq: bounds.iter().cloned().fold(0.0, f64::max),
        ..AbsorbingReport::default()
    };
    let per = initials.len();
    for (si, &seed) in seeds.iter().enumerate() {
        for (hi, &horizon) in horizons.iter().enumerate() {
            let base = (si * horizons.len() + hi) * per;
            let worst = ends[base..base + per].iter().map(|f| f.l2_sq()).fold(0.0, f64::max);
            rep.rows.push(AbsorbingRow {
                seed,
                horizon,
                endpoint_l2_sq: worst,
                bound: bounds[si],
                satisfied: worst <= bounds[si],
            });
        }
        let last = rep.rows.last().copied().unwrap();
        rep.per_path.push(PathVerdict {
            seed,
            satisfied: last.satisfied,
            margin: last.bound - last.endpoint_l2_sq,
        });
    }
    let all_from = |hi: usize| {
        rep.rows
            .iter()
            .filter(|r| horizons[hi..].contains(&r.horizon))
            .all(|r| r.satisfied)
    };
    rep.entry_time = (0..horizons.len()).find(|&hi| all_from(hi)).map(|hi| horizons[hi]);
    Ok(rep)
}

/// One step of an energy audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    pub l2_sq: f64,
    /// `‖∇w‖_pᵖ` (`w = v` outside the additive case)
    pub grad_p: f64,
    /// `‖v‖_q^q`
    pub q_norm: f64,
    pub z: f64,
    pub eta: f64,
    /// Identity residual, or `lhs − rhs` of the inequality in the
    /// multiplicative case (nonpositive when it holds).
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyAudit {
    pub rows: Vec<EnergyRow>,
    /// Largest `|residual|` (identity) or largest positive residual
    /// (inequality).
    pub max_residual: f64,
    /// Steps at which the inequality failed by more than `energy_tol`.
    pub violations: usize,
}

/// Audits the energy balance of `v` along `Φ(duration, tau, noise, u0)`.
///
/// In the additive and deterministic cases each step yields
/// `(‖v_{n+1}‖² − ‖v_n‖²)/dt` minus the right-hand side of the energy
/// identity evaluated at `v_n` with the noise values of that step. In the
/// multiplicative case the energy inequality is checked instead.
pub fn energy_audit<S: NoiseSource>(
    stepper: &mut Stepper,
    noise: &S,
    tau: f64,
    duration: f64,
    u0: &Field,
) -> Result<EnergyAudit> {
    let spec = stepper.spec().clone();
    let grid = *stepper.grid();
    let dt = stepper.config().dt;
    let tol = stepper.config().energy_tol;
    let norms = ForcingNorms::new(&spec, &grid);
    let gamma = spec.structural_gamma();
    let mut audit = EnergyAudit::default();
    stepper.run_observed(noise, tau, duration, u0, true, &mut |info| {
        let e = info.energy.expect("energy terms requested");
        let next = info
            .v_next
            .iter()
            .enumerate()
            .map(|(i, x)| grid.weight(i) * x * x)
            .sum::<f64>();
        let ddt = (next - e.l2_sq) / dt;
        let residual = match spec.noise_case {
            NoiseCase::Additive => {
                let (a, eps, lam) = (spec.alpha, spec.epsilon, spec.lambda);
                let (z, eta) = (info.z, info.eta);
                let rhs = -2.0 * (lam - a * eta) * e.l2_sq - 2.0 * e.grad_w
                    + 2.0 * eps * z * e.flux_h
                    + 2.0 * e.reaction
                    + 2.0 * e.g_dot
                    + 2.0 * a * eps * eta * z * e.h_dot;
                ddt - rhs
            }
            NoiseCase::Deterministic => ddt - e.rate,
            NoiseCase::Multiplicative => {
                let (a, z, lam) = (spec.alpha, info.z, spec.lambda);
                let f = norms.at(info.forcing_t);
                let lhs = ddt
                    + 2.0 * math::exp(a * (spec.p - 2.0) * z) * e.grad_w
                    + (1.75 * lam - 2.0 * a * z) * e.l2_sq
                    + 2.0 * gamma * math::exp(a * (spec.q - 2.0) * z) * e.q_pow;
                let rhs = 2.0 * math::exp(-2.0 * a * z) * f.psi1_l1 + (4.0 / lam) * math::exp(-2.0 * a * z) * f.g_l2_sq;
                lhs - rhs
            }
        };
        let mag = if spec.noise_case == NoiseCase::Multiplicative {
            if residual > tol {
                audit.violations += 1;
            }
            residual.max(0.0)
        } else {
            residual.abs()
        };
        audit.max_residual = audit.max_residual.max(mag);
        audit.rows.push(EnergyRow {
            t: info.t,
            l2_sq: e.l2_sq,
            grad_p: e.grad_w,
            q_norm: e.q_pow,
            z: info.z,
            eta: info.eta,
            residual,
        });
    })?;
    Ok(audit)
}

/// Tail mass of `v(σ)` for one seed, radius and sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub seed: u64,
    pub k: f64,
    pub sigma: f64,
    pub tail_mass: f64,
    /// `‖v(σ)‖²`
    pub l2_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TailReport {
    pub rows: Vec<TailRow>,
    /// Largest `tail_mass/‖v‖²` per radius, in the order of `ks`.
    pub max_ratio: Vec<f64>,
    /// Tail mass nonincreasing in `k` at every (seed, σ).
    pub monotone: bool,
}

/// `σ_j = τ − 1 + j/(count−1)`, rounded to the step grid.
pub fn sigma_samples(tau: f64, count: usize, dt: f64) -> Vec<f64> {
    (0..count)
        .map(|j| {
            let s = tau - 1.0 + if count > 1 { j as f64 / (count - 1) as f64 } else { 1.0 };
            math::round(s / dt) * dt
        })
        .collect()
}

/// Tail masses of `v(σ, τ − horizon, θ_{−τ}ω, v₀)` for σ sampled in `[τ−1, τ]`.
#[allow(clippy::too_many_arguments)]
pub fn tail_check<P: TaskPool>(
    pool: &P,
    spec: &ProblemSpec,
    grid: &Grid,
    cfg: &StepperConfig,
    template: &NoisePath,
    seeds: &[u64],
    tau: f64,
    horizon: f64,
    ks: &[f64],
    sigma_count: usize,
    u0: &Field,
) -> Result<TailReport> {
    if ks.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("k_list", "must be strictly ascending"));
    }
    if !(horizon >= 1.0) {
        return Err(invalid("horizon", "must be at least 1"));
    }
    let dt = cfg.dt;
    let sigmas = sigma_samples(tau, sigma_count, dt);
    let start = tau - horizon;
    let targets: Vec<i64> = sigmas.iter().map(|s| math::round((s - start) / dt) as i64).collect();
    let proto = Stepper::new(spec, grid, cfg)?;
    let per_seed = pool.map(seeds, |&seed| -> Result<Vec<TailRow>> {
        let mut st = proto.clone();
        let omega = template.with_seed(seed);
        let back =
            math::to_ticks(horizon, omega.dt()).ok_or_else(|| invalid("horizon", "must lie on the noise grid"))?;
        let mut snaps: Vec<(f64, Field)> = Vec::new();
        st.run_observed(&omega.shift_ticks(-back), start, horizon, u0, false, &mut |info| {
            if let Some(j) = targets.iter().position(|&t| t == info.index as i64 + 1) {
                snaps.push((sigmas[j], Field::from_raw(*grid, info.v_next.to_vec())));
            }
        })?;
        let mut rows = Vec::new();
        for (sigma, v) in &snaps {
            let l2 = v.l2_sq();
            for &k in ks {
                rows.push(TailRow {
                    seed,
                    k,
                    sigma: *sigma,
                    tail_mass: tail_mass(v, k)?.plain,
                    l2_sq: l2,
                });
            }
        }
        Ok(rows)
    });
    let mut rep = TailReport {
        max_ratio: vec![0.0; ks.len()],
        monotone: true,
        ..TailReport::default()
    };
    for rows in per_seed {
        let rows = rows?;
        for chunk in rows.chunks(ks.len()) {
            for (j, r) in chunk.iter().enumerate() {
                let ratio = if r.l2_sq > 0.0 { r.tail_mass / r.l2_sq } else { 0.0 };
                rep.max_ratio[j] = rep.max_ratio[j].max(ratio);
                if j > 0 && r.tail_mass > chunk[j - 1].tail_mass {
                    rep.monotone = false;
                }
            }
        }
        rep.rows.extend(rows);
    }
    Ok(rep)
}

/// Endpoint distances of one (seed, initial) pair across three horizons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyRow {
    pub seed: u64,
    pub initial: usize,
    /// `‖u_{h₁} − u_{h₀}‖`
    pub first: f64,
    /// `‖u_{h₂} − u_{h₁}‖`
    pub second: f64,
}

impl CauchyRow {
    pub fn decreasing(&self) -> bool {
        self.second < self.first
    }
}

/// Distances between pullback endpoints at successive horizons `h₀ < h₁ < h₂`.
#[allow(clippy::too_many_arguments)]
pub fn cauchy_diagnostic<P: TaskPool>(
    pool: &P,
    spec: &ProblemSpec,
    grid: &Grid,
    cfg: &StepperConfig,
    template: &NoisePath,
    seeds: &[u64],
    tau: f64,
    horizons: [f64; 3],
    initials: &[Field],
) -> Result<Vec<CauchyRow>> {
    let proto = Stepper::new(spec, grid, cfg)?;
    let ends = pullback_grid(pool, &proto, template, seeds, tau, &horizons, initials)?;
    let per = initials.len();
    let mut rows = Vec::new();
    for (si, &seed) in seeds.iter().enumerate() {
        for i in 0..per {
            let at = |hi: usize| &ends[(si * 3 + hi) * per + i];
            rows.push(CauchyRow {
                seed,
                initial: i,
                first: at(1).distance(at(0)),
                second: at(2).distance(at(1)),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorEstimate {
    /// Deduplicated endpoints at the full horizon.
    pub ensemble: EndpointEnsemble,
    /// Spread of the endpoints at the full horizon.
    pub spread: f64,
    /// Spread at half the horizon.
    pub half_spread: f64,
}

impl AttractorEstimate {
    /// False when the spread did not shrink between half and full horizon.
    pub fn contracting(&self) -> bool {
        self.spread <= self.half_spread
    }
}

/// Pullback endpoints at `τ` from `initials`, deduplicated at `cluster_tol`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_attractor<P: TaskPool>(
    pool: &P,
    spec: &ProblemSpec,
    grid: &Grid,
    cfg: &StepperConfig,
    omega: &NoisePath,
    tau: f64,
    horizon: f64,
    initials: &[Field],
    cluster_tol: f64,
) -> Result<AttractorEstimate> {
    if initials.is_empty() {
        return Err(invalid("initials", "need at least one initial field"));
    }
    let proto = Stepper::new(spec, grid, cfg)?;
    let half = math::round(0.5 * horizon / cfg.dt) * cfg.dt;
    let ends = pullback_grid(pool, &proto, omega, &[omega.seed()], tau, &[half, horizon], initials)?;
    let per = initials.len();
    let tag = |h: f64| EnsembleTag {
        tau,
        seed: omega.seed(),
        alpha: spec.alpha,
        horizon: h,
    };
    let halfway = EndpointEnsemble::new(ends[..per].to_vec(), tag(half))?;
    let full = EndpointEnsemble::new(ends[per..].to_vec(), tag(horizon))?;
    Ok(AttractorEstimate {
        spread: full.spread(),
        half_spread: halfway.spread(),
        ensemble: full.deduplicated(cluster_tol),
    })
}

/// `max(dist(A, B), dist(B, A))`.
pub fn hausdorff_distance(a: &EndpointEnsemble, b: &EndpointEnsemble) -> Result<f64> {
    Ok(hausdorff_semidistance(a, b)?.max(hausdorff_semidistance(b, a)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicityRow {
    pub seed: u64,
    /// Two-sided Hausdorff distance between the estimates at `τ` and `τ + T`.
    pub distance: f64,
    pub cluster_tol: f64,
}

impl PeriodicityRow {
    pub fn within(&self) -> bool {
        self.distance <= self.cluster_tol
    }
}

/// Compares attractor estimates at `τ` and `τ + period` for each seed, with
/// `cluster_tol = tol_factor · √(absorbing bound)`.
#[allow(clippy::too_many_arguments)]
pub fn periodicity_check<P: TaskPool>(
    pool: &P,
    spec: &ProblemSpec,
    grid: &Grid,
    cfg: &StepperConfig,
    template: &NoisePath,
    seeds: &[u64],
    tau: f64,
    horizon: f64,
    initials: &[Field],
    tol_factor: f64,
    opts: &RadiusOptions,
) -> Result<Vec<PeriodicityRow>> {
    let period = spec
        .period
        .ok_or_else(|| invalid("period", "periodicity check needs a period"))?;
    let proto = Stepper::new(spec, grid, cfg)?;
    let mut rows = Vec::new();
    for &seed in seeds {
        let omega = template.with_seed(seed);
        let bound = absorbing_bound(spec, grid, &omega, tau, opts)?;
        let tol = tol_factor * math::sqrt(bound);
        let a = pullback_grid(pool, &proto, &omega, &[seed], tau, &[horizon], initials)?;
        let b = pullback_grid(pool, &proto, &omega, &[seed], tau + period, &[horizon], initials)?;
        let tag = EnsembleTag {
            tau,
            seed,
            alpha: spec.alpha,
            horizon,
        };
        let ea = EndpointEnsemble::new(a, tag)?.deduplicated(tol);
        let eb = EndpointEnsemble::new(
            b,
            EnsembleTag {
                tau: tau + period,
                ..tag
            },
        )?
        .deduplicated(tol);
        rows.push(PeriodicityRow {
            seed,
            distance: hausdorff_distance(&ea, &eb)?,
            cluster_tol: tol,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UscRow {
    pub alpha: f64,
    pub seed: u64,
    /// `dist(A_α(τ, ω), A₀(τ))`
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UscReport {
    pub alphas: Vec<f64>,
    pub rows: Vec<UscRow>,
    /// Median distance per α, in the order of `alphas`.
    pub medians: Vec<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `dist(A_α, A₀)` for each α and seed. `A₀` comes from the deterministic
/// stepper; `A_α` from the multiplicative one with intensity α.
#[allow(clippy::too_many_arguments)]
pub fn usc_sweep<P: TaskPool>(
    pool: &P,
    spec: &ProblemSpec,
    grid: &Grid,
    cfg: &StepperConfig,
    template: &NoisePath,
    alphas: &[f64],
    seeds: &[u64],
    tau: f64,
    horizon: f64,
    initials: &[Field],
) -> Result<UscReport> {
    if alphas.windows(2).any(|w| w[1] > w[0]) {
        return Err(invalid("alphas", "must be nonincreasing"));
    }
    if alphas.iter().any(|a| !(*a >= 0.0)) {
        return Err(invalid("alphas", "must be nonnegative"));
    }
    let det = ProblemSpec {
        alpha: 0.0,
        epsilon: 0.0,
        noise_case: NoiseCase::Deterministic,
        ..spec.clone()
    };
    let tag = |alpha: f64, seed: u64| EnsembleTag {
        tau,
        seed,
        alpha,
        horizon,
    };
    let a0_ends = pullback_grid(
        pool,
        &Stepper::new(&det, grid, cfg)?,
        template,
        &[0],
        tau,
        &[horizon],
        initials,
    )?;
    let a0 = EndpointEnsemble::new(a0_ends, tag(0.0, 0))?;
    let mut rep = UscReport {
        alphas: alphas.to_vec(),
        ..UscReport::default()
    };
    for &alpha in alphas {
        let s = ProblemSpec {
            alpha,
            epsilon: 0.0,
            noise_case: NoiseCase::Multiplicative,
            ..spec.clone()
        };
        let proto = Stepper::new(&s, grid, cfg)?;
        let ends = pullback_grid(pool, &proto, template, seeds, tau, &[horizon], initials)?;
        let per = initials.len();
        let mut ds = Vec::new();
        for (si, &seed) in seeds.iter().enumerate() {
            let ens = EndpointEnsemble::new(ends[si * per..(si + 1) * per].to_vec(), tag(alpha, seed))?;
            let d = hausdorff_semidistance(&ens, &a0)?;
            ds.push(d);
            rep.rows.push(UscRow {
                alpha,
                seed,
                distance: d,
            });
        }
        rep.medians.push(median(&ds));
    }
    Ok(rep)
}

/// `‖u_α(τ + duration) − u₀(τ + duration)‖` for each α, all runs started
/// from `u0` at `τ` (multiplicative noise against the deterministic limit).
#[allow(clippy::too_many_arguments)]
pub fn solution_convergence(
    spec: &ProblemSpec,
    grid: &Grid,
    cfg: &StepperConfig,
    omega: &NoisePath,
    tau: f64,
    duration: f64,
    alphas: &[f64],
    u0: &Field,
) -> Result<Vec<f64>> {
    let det = ProblemSpec {
        alpha: 0.0,
        epsilon: 0.0,
        noise_case: NoiseCase::Deterministic,
        ..spec.clone()
    };
    let reference = Stepper::new(&det, grid, cfg)?.run(omega, tau, duration, u0)?;
    alphas
        .iter()
        .map(|&alpha| {
            let s = ProblemSpec {
                alpha,
                epsilon: 0.0,
                noise_case: NoiseCase::Multiplicative,
                ..spec.clone()
            };
            Ok(Stepper::new(&s, grid, cfg)?
                .run(omega, tau, duration, u0)?
                .distance(&reference))
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn empirical_order(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len()) as f64;
    let lx: Vec<f64> = xs.iter().map(|x| math::ln(*x)).collect();
    let ly: Vec<f64> = ys.iter().map(|y| math::ln(*y)).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// `((q−p)/(q−2))‖u‖² + ((p−2)/(q−2))‖u‖_q^q − ‖u‖_pᵖ`, nonnegative by the
/// interpolation inequality for `2 < p < q`.
pub fn interpolation_margin(u: &Field, p: f64, q: f64) -> f64 {
    (q - p) / (q - 2.0) * u.l2_sq() + (p - 2.0) / (q - 2.0) * lr_pow(u, q) - lr_pow(u, p)
}
