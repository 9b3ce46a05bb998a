//! Acceptance suite: each test prints one PASS/FAIL line with its measured
//! quantities, then asserts.

#![allow(clippy::needless_range_loop)]

use std::io::Write;

use plrds::RayonPool;
use plrds_core::analysis::{
    absorbing_check, cauchy_diagnostic, empirical_order, energy_audit, initial_ball, interpolation_margin,
    periodicity_check, solution_convergence, tail_check, usc_sweep, RadiusOptions,
};
use plrds_core::expr::Expr;
use plrds_core::field::lr_pow;
use plrds_core::noise::{ergodic_diagnostics, ou_from_path};
use plrds_core::problem::CustomEnvelopes;
use plrds_core::{
    Field, Grid, NoiseCase, NoisePath, NoiseSource, Nonlinearity, ProblemSpec, SpaceTimeFn, Stepper, StepperConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BLOCK: f64 = 64.0;

fn grid() -> Grid {
    Grid::new(1, 8.0, 257).unwrap()
}

fn cfg() -> StepperConfig {
    StepperConfig::default()
}

fn path(seed: u64) -> NoisePath {
    NoisePath::new(seed, 1e-3, BLOCK).unwrap()
}

fn pool() -> RayonPool {
    RayonPool::new(0)
}

fn seeds(n: u64) -> Vec<u64> {
    (1..=n).collect()
}

fn report(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {id:02} {name}: {verdict} ({detail})").unwrap();
    out.flush().unwrap();
    pass
}

fn bits(f: &Field) -> Vec<u64> {
    f.values().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn c01_cocycle_laws() {
    let g = grid();
    let u = initial_ball(&g, 2.0, 1, 11).remove(0);
    let mut ok = true;
    let mut checks = 0;
    for spec in [ProblemSpec::default_additive(), ProblemSpec::default_multiplicative()] {
        let mut st = Stepper::new(&spec, &g, &cfg()).unwrap();
        let w = path(3);
        let tau = 0.25;
        ok &= st.run(&w, tau, 0.0, &u).unwrap() == u;
        for (s, t) in [(1.0, 1.0), (2.0, 3.0)] {
            let whole = st.run(&w, tau, s + t, &u).unwrap();
            let first = st.run(&w, tau, s, &u).unwrap();
            let second = st.run(&w.shift(s), tau + s, t, &first).unwrap();
            ok &= bits(&whole) == bits(&second);
            checks += 1;
        }
    }
    assert!(report(
        1,
        "cocycle identity and composition",
        ok,
        &format!("{checks} compositions bitwise")
    ));
}

#[test]
fn c02_deterministic_reduction() {
    let g = grid();
    let u = initial_ball(&g, 2.0, 1, 12).remove(0);
    let w = path(4);
    let det = Stepper::new(&ProblemSpec::deterministic(), &g, &cfg())
        .unwrap()
        .run(&w, 0.0, 1.0, &u)
        .unwrap();
    let mult = ProblemSpec {
        alpha: 0.0,
        ..ProblemSpec::default_multiplicative()
    };
    let add = ProblemSpec {
        alpha: 0.0,
        epsilon: 0.0,
        ..ProblemSpec::default_additive()
    };
    let m = Stepper::new(&mult, &g, &cfg()).unwrap().run(&w, 0.0, 1.0, &u).unwrap();
    let a = Stepper::new(&add, &g, &cfg()).unwrap().run(&w, 0.0, 1.0, &u).unwrap();
    let ok = bits(&m) == bits(&det) && bits(&a) == bits(&det);
    assert!(report(2, "deterministic reduction", ok, "1000 steps, both noise cases"));
}

/// Integrating-factor Euler for `v' = v_xx − λv + αz v + e^{−αz} g`, written
/// out directly on the node array.
fn heat_oracle(g: &Grid, spec: &ProblemSpec, z: &[f64], steps: usize, dt: f64, v0: &[f64]) -> Vec<f64> {
    let n = g.n_per_axis();
    let dx = g.dx();
    let lam = spec.lambda;
    let decay = (-lam * dt).exp();
    let gain = -(-lam * dt).exp_m1() / lam;
    let mut v = v0.to_vec();
    let mut rhs = vec![0.0; n];
    for k in 0..steps {
        let t = (k as f64 * dt) % 1.0;
        let a = spec.alpha;
        for i in 1..n - 1 {
            let x = -8.0 + i as f64 * dx;
            let gx = 0.5 * (2.0 * std::f64::consts::PI * t).cos() * (-x * x).exp();
            rhs[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx) + a * z[k] * v[i] + (-a * z[k]).exp() * gx;
        }
        for i in 1..n - 1 {
            v[i] = decay * v[i] + gain * rhs[i];
        }
    }
    v
}

#[test]
fn c03_heat_cross_check() {
    let g = grid();
    let dt = 1e-3;
    let steps = 1000;
    let zero_f = Nonlinearity::Custom {
        f: Expr::parse("0").unwrap(),
        envelopes: CustomEnvelopes {
            gamma: 1.0,
            psi1: SpaceTimeFn::Zero,
            psi2: 1.0,
            psi3: SpaceTimeFn::Zero,
            psi4: 0.0,
            psi5: 1.0,
        },
    };
    let u0 = Field::from_fn(g, |[x, _]| (-(x - 1.0) * (x - 1.0)).exp());
    let mut worst = 0.0f64;
    for base in [ProblemSpec::deterministic(), ProblemSpec::default_multiplicative()] {
        let spec = ProblemSpec {
            p: 2.0,
            q: 2.0,
            nonlinearity: zero_f.clone(),
            ..base
        };
        let w = path(5);
        let z = if spec.noise_case == NoiseCase::Multiplicative {
            ou_from_path(&w, 1.0, 0.0, 1.0, dt).unwrap().values
        } else {
            vec![0.0; steps + 1]
        };
        let mut st = Stepper::new(&spec, &g, &cfg()).unwrap();
        // v at the end, recovered from u with the final noise value
        let u = st.run(&w, 0.0, 1.0, &u0).unwrap();
        let v: Vec<f64> = u.values().iter().map(|x| (-spec.alpha * z[steps]).exp() * x).collect();
        let v0: Vec<f64> = u0.values().iter().map(|x| (-spec.alpha * z[0]).exp() * x).collect();
        let oracle = heat_oracle(&g, &spec, &z, steps, dt, &v0);
        let num: f64 = v.iter().zip(&oracle).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = oracle.iter().map(|b| b * b).sum();
        worst = worst.max((num / den).sqrt());
    }
    let ok = worst <= 1e-10;
    assert!(report(
        3,
        "p=2 heat cross-check",
        ok,
        &format!("max relative error {worst:.3e}")
    ));
}

#[test]
fn c04_energy_audit_first_order() {
    let g = grid();
    let spec = ProblemSpec::default_additive();
    let w = NoisePath::new(6, 2.5e-4, BLOCK).unwrap();
    let u0 = initial_ball(&g, 1.0, 1, 14).remove(0);
    let mut maxes = Vec::new();
    for dt in [1e-3, 5e-4, 2.5e-4] {
        let mut st = Stepper::new(&spec, &g, &cfg().with_dt(dt)).unwrap();
        maxes.push(energy_audit(&mut st, &w, 0.0, 10.0, &u0).unwrap().max_residual);
    }
    let r1 = maxes[0] / maxes[1];
    let r2 = maxes[1] / maxes[2];
    let ok = (1.5..=3.0).contains(&r1) && (1.5..=3.0).contains(&r2);
    assert!(report(
        4,
        "energy identity residual halves with dt",
        ok,
        &format!(
            "max residuals {:.3e} {:.3e} {:.3e}, ratios {r1:.3} {r2:.3}",
            maxes[0], maxes[1], maxes[2]
        )
    ));
}

#[test]
fn c05_interpolation_inequality() {
    let g = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut violations = 0;
    for (p, q) in [(3.0, 4.0), (2.5, 6.0)] {
        for _ in 0..1000 {
            let scale: f64 = 10f64.powf(rng.random_range(-2.0..2.0));
            let vals: Vec<f64> = (0..g.len()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
            let u = Field::from_fn(g, |_| 0.0);
            let u = Field::from_values(
                g,
                vals.iter()
                    .enumerate()
                    .map(|(i, v)| if g.is_boundary(i) { 0.0 } else { *v })
                    .collect(),
            )
            .unwrap_or(u);
            let m = interpolation_margin(&u, p, q);
            if m < -1e-12 * (u.l2_sq() + lr_pow(&u, q)) {
                violations += 1;
            }
        }
    }
    assert!(report(
        5,
        "interpolation inequality",
        violations == 0,
        &format!("{violations} violations in 2000 fields")
    ));
}

#[test]
fn c06_absorbing_entry() {
    let g = grid();
    let pool = pool();
    let initials = initial_ball(&g, 5.0, 2, 16);
    let mut detail = String::new();
    let mut ok = true;
    for spec in [ProblemSpec::default_additive(), ProblemSpec::default_multiplicative()] {
        let rep = absorbing_check(
            &pool,
            &spec,
            &g,
            &cfg(),
            &path(0),
            &seeds(16),
            0.0,
            &[32.0],
            &initials,
            &RadiusOptions::default(),
        )
        .unwrap();
        let sat = rep.per_path.iter().filter(|p| p.satisfied).count();
        let min_margin = rep.per_path.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
        ok &= sat == 16;
        detail += &format!("{:?}: {sat}/16, min margin {min_margin:.3e}; ", spec.noise_case);
    }
    assert!(report(
        6,
        "absorbing entry at horizon 32",
        ok,
        detail.trim_end_matches("; ")
    ));
}

#[test]
fn c07_tail_smallness() {
    let g = grid();
    let pool = pool();
    let l = g.half_width();
    let ks = [l / 4.0, 3.0 * l / 8.0, l / 2.0];
    let u0 = initial_ball(&g, 2.0, 1, 17).remove(0);
    let mut ok = true;
    let mut detail = String::new();
    for spec in [ProblemSpec::default_additive(), ProblemSpec::default_multiplicative()] {
        let rep = tail_check(&pool, &spec, &g, &cfg(), &path(0), &seeds(16), 0.0, 32.0, &ks, 8, &u0).unwrap();
        let ratio = rep.max_ratio[2];
        ok &= ratio <= 1e-3 && rep.monotone && rep.rows.len() == 16 * 8 * 3;
        detail += &format!(
            "{:?}: max tail/l2 at L/2 {ratio:.3e}, monotone {}; ",
            spec.noise_case, rep.monotone
        );
    }
    assert!(report(7, "tail smallness", ok, detail.trim_end_matches("; ")));
}

#[test]
fn c08_pullback_cauchy() {
    let g = grid();
    let pool = pool();
    let initials = initial_ball(&g, 3.0, 2, 18);
    let rows = cauchy_diagnostic(
        &pool,
        &ProblemSpec::default_additive(),
        &g,
        &cfg(),
        &path(0),
        &seeds(8),
        0.0,
        [8.0, 16.0, 32.0],
        &initials,
    )
    .unwrap();
    let good = rows.iter().filter(|r| r.decreasing()).count();
    let frac = good as f64 / rows.len() as f64;
    assert!(report(
        8,
        "pullback Cauchy diagnostic",
        frac >= 0.9,
        &format!("{good}/{} pairs decreasing", rows.len())
    ));
}

#[test]
fn c09_periodicity() {
    let g = grid();
    let pool = pool();
    let initials = initial_ball(&g, 3.0, 2, 19);
    let rows = periodicity_check(
        &pool,
        &ProblemSpec::default_additive(),
        &g,
        &cfg(),
        &path(0),
        &seeds(8),
        0.0,
        16.0,
        &initials,
        1e-4,
        &RadiusOptions::default(),
    )
    .unwrap();
    let worst = rows.iter().map(|r| r.distance).fold(0.0, f64::max);
    let ok = rows.len() == 8 && rows.iter().all(|r| r.within());
    assert!(report(
        9,
        "attractor periodicity",
        ok,
        &format!("largest distance {worst:.3e} over 8 seeds")
    ));
}

#[test]
fn c10_solution_convergence() {
    let g = grid();
    let alphas = [0.4, 0.2, 0.1, 0.05];
    let spec = ProblemSpec::default_multiplicative();
    let u0 = initial_ball(&g, 2.0, 1, 20).remove(0);
    let mut ok = true;
    let mut min_order = f64::INFINITY;
    for seed in seeds(8) {
        let d = solution_convergence(&spec, &g, &cfg(), &path(seed), 0.0, 1.0, &alphas, &u0).unwrap();
        let mono = d.windows(2).all(|w| w[1] < w[0]);
        let order = empirical_order(&alphas, &d);
        min_order = min_order.min(order);
        ok &= mono && order >= 0.8;
    }
    assert!(report(
        10,
        "solution convergence in alpha",
        ok,
        &format!("smallest order {min_order:.3}")
    ));
}

#[test]
fn c11_upper_semicontinuity() {
    let g = grid();
    let pool = pool();
    let alphas = [0.4, 0.2, 0.1, 0.05];
    let initials = initial_ball(&g, 3.0, 2, 21);
    let rep = usc_sweep(
        &pool,
        &ProblemSpec::default_multiplicative(),
        &g,
        &cfg(),
        &path(0),
        &alphas,
        &seeds(8),
        0.0,
        16.0,
        &initials,
    )
    .unwrap();
    let m = &rep.medians;
    let band = m.windows(2).all(|w| w[1] <= 1.2 * w[0]);
    let ok = band && m[3] <= 0.5 * m[0];
    assert!(report(
        11,
        "upper semicontinuity",
        ok,
        &format!("medians {:.3e} {:.3e} {:.3e} {:.3e}", m[0], m[1], m[2], m[3])
    ));
}

#[test]
fn c12_noise_diagnostics() {
    let horizon = 1e4;
    let mut sub_ok = 0;
    let mut mean_ok = 0;
    for seed in 1..=100u64 {
        let w = NoisePath::new(seed, 0.01, 100.0).unwrap();
        let z = ou_from_path(&w, 1.0, 0.0, horizon, 0.01).unwrap();
        let row = *ergodic_diagnostics(&z).at_full_horizon().unwrap();
        if row.sublinear_ratio <= 0.05 {
            sub_ok += 1;
        }
        if row.mean_ratio.abs() <= 3.0 / row.horizon.sqrt() {
            mean_ok += 1;
        }
        assert_eq!(w.value_at_tick(0), 0.0);
    }
    let ok = sub_ok >= 95 && mean_ok >= 95;
    assert!(report(
        12,
        "noise ergodic diagnostics",
        ok,
        &format!("sublinear {sub_ok}/100, time average {mean_ok}/100")
    ));
}
