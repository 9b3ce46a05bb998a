//! Checks against closed-form values computed independently of the library.

use std::f64::consts::PI;

use plrds_core::analysis::{absorbing_radius_deterministic, RadiusOptions};
use plrds_core::expr::Expr;
use plrds_core::field::p_laplace;
use plrds_core::noise::ou_from_path;
use plrds_core::problem::{check_growth_condition, validate_structure, Condition, SampleRanges};
use plrds_core::{Field, Grid, NoisePath, Nonlinearity, ProblemSpec, SpaceTimeFn, TimeProfile};

fn unforced_phi(spec: ProblemSpec) -> ProblemSpec {
    ProblemSpec {
        nonlinearity: Nonlinearity::PowerPlusForcing { phi: SpaceTimeFn::Zero },
        ..spec
    }
}

/// `∫ (a e^{−x²/w²})² dx` over the real line.
fn gaussian_l2_sq(a: f64, w: f64) -> f64 {
    a * a * w * (PI / 2.0).sqrt()
}

#[test]
fn p3_laplacian_of_a_parabola() {
    let g = Grid::new(1, 2.0, 41).unwrap();
    let u = Field::from_fn(g, |x| x[0] * x[0]);
    let l = p_laplace(&u, 3.0, 0.0).unwrap();
    for i in 2..g.n_per_axis() - 2 {
        let x = g.coords(i)[0];
        if x.abs() < g.dx() / 2.0 {
            continue;
        }
        let want = 8.0 * x.abs();
        assert!(
            (l.values()[i] - want).abs() < 1e-10,
            "x = {x}: {} vs {want}",
            l.values()[i]
        );
    }
}

#[test]
fn wiener_variance_at_time_one() {
    let n = 10_000;
    let samples: Vec<f64> = (0..n)
        .map(|seed| NoisePath::new(seed, 1e-3, 1.0).unwrap().value_at_tick(1000))
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.abs() < 0.04, "mean {mean}");
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn ou_stationary_variance() {
    let n = 4000;
    let samples: Vec<f64> = (0..n)
        .map(|seed| {
            let w = NoisePath::new(seed, 1e-2, 8.0).unwrap();
            ou_from_path(&w, 1.0, 0.0, 0.01, 0.01).unwrap().value_at(0.0)
        })
        .collect();
    let var = samples.iter().map(|x| x * x).sum::<f64>() / n as f64;
    assert!((var - 0.5).abs() < 0.04, "variance {var}");
}

#[test]
fn default_structure_has_no_violations() {
    for spec in [ProblemSpec::default_additive(), ProblemSpec::default_multiplicative()] {
        let rep = validate_structure(&spec, 100_000, &SampleRanges::default());
        assert!(rep.violations.is_empty(), "{:?}", rep.violations.first());
    }
}

#[test]
fn growing_nonlinearity_is_flagged() {
    let spec = ProblemSpec {
        nonlinearity: Nonlinearity::Custom {
            f: Expr::parse("s^3").unwrap(),
            envelopes: plrds_core::problem::CustomEnvelopes {
                gamma: 1.0,
                psi1: SpaceTimeFn::Zero,
                psi2: 2.0,
                psi3: SpaceTimeFn::Zero,
                psi4: 0.0,
                psi5: 4.0,
            },
        },
        ..ProblemSpec::default_additive()
    };
    let rep = validate_structure(&spec, 10_000, &SampleRanges::default());
    assert!(rep.violations_of(Condition::F1).count() > 0);
    assert!(rep.violations_of(Condition::F3).count() > 0);
}

#[test]
fn growth_integral_of_constant_forcing() {
    let g = Grid::new(1, 8.0, 257).unwrap();
    let (a, w, lambda) = (0.7, 1.3, 2.0);
    let spec = unforced_phi(ProblemSpec {
        lambda,
        g: SpaceTimeFn::gaussian(a, w, TimeProfile::Constant),
        ..ProblemSpec::default_additive()
    });
    let chk = check_growth_condition(&spec, &g, 0.0, 0.01);
    let want = gaussian_l2_sq(a, w) / lambda;
    assert!(chk.finite);
    assert!((chk.value / want - 1.0).abs() < 1e-4, "{} vs {want}", chk.value);
}

#[test]
fn growth_integral_detects_divergence() {
    let g = Grid::new(1, 8.0, 257).unwrap();
    let spec = unforced_phi(ProblemSpec {
        g: SpaceTimeFn::gaussian(1.0, 1.0, TimeProfile::Exp { rate: -1.0 }),
        ..ProblemSpec::default_additive()
    });
    assert!(!check_growth_condition(&spec, &g, 0.0, 0.01).finite);
}

#[test]
fn deterministic_radius_with_periodic_forcing() {
    let g = Grid::new(1, 8.0, 257).unwrap();
    let (a, w, lambda, tau) = (0.5, 1.0, 1.0, 0.3);
    let spec = unforced_phi(ProblemSpec {
        lambda,
        g: SpaceTimeFn::gaussian(a, w, TimeProfile::Cos { period: 1.0 }),
        ..ProblemSpec::deterministic()
    });
    let opts = RadiusOptions {
        quad_dt: 1e-3,
        ..RadiusOptions::default()
    };
    let r0 = absorbing_radius_deterministic(&spec, &g, tau, &opts).unwrap();
    // ∫_{−∞}^0 e^{κs} cos²(2π(τ+s)) ds
    let k = 1.25 * lambda;
    let om = 4.0 * PI;
    let integral = 0.5 / k + 0.5 * (k * (om * tau).cos() + om * (om * tau).sin()) / (k * k + om * om);
    let want = opts.c + opts.c * gaussian_l2_sq(a, w) * integral;
    assert!((r0 / want - 1.0).abs() < 1e-4, "{r0} vs {want}");
}
