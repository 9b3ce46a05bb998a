use plrds_core::field::{hausdorff_semidistance, norms, p_laplace, tail_mass};
use plrds_core::{EndpointEnsemble, EnsembleTag, Field, Grid, NoisePath, NoiseSource, ProblemSpec};
use proptest::prelude::*;

fn grid_1d() -> Grid {
    Grid::new(1, 4.0, 33).unwrap()
}

fn grid_2d() -> Grid {
    Grid::new(2, 2.0, 9).unwrap()
}

fn field_on(grid: Grid) -> impl Strategy<Value = Field> {
    prop::collection::vec(-3.0f64..3.0, grid.len()).prop_map(move |vals| {
        let vals = vals
            .into_iter()
            .enumerate()
            .map(|(i, v)| if grid.is_boundary(i) { 0.0 } else { v })
            .collect();
        Field::from_values(grid, vals).unwrap()
    })
}

fn any_field() -> impl Strategy<Value = Field> {
    prop_oneof![field_on(grid_1d()), field_on(grid_2d())]
}

fn field_pair() -> impl Strategy<Value = (Field, Field)> {
    prop_oneof![
        (field_on(grid_1d()), field_on(grid_1d())),
        (field_on(grid_2d()), field_on(grid_2d())),
    ]
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

fn ensemble(members: Vec<Field>) -> EndpointEnsemble {
    let tag = EnsembleTag {
        tau: 0.0,
        seed: 0,
        alpha: 0.0,
        horizon: 1.0,
    };
    EndpointEnsemble::new(members, tag).unwrap()
}

proptest! {
    #[test]
    fn norms_are_homogeneous(u in any_field(), c in -5.0f64..5.0, p in 2.0f64..6.0, dq in 0.0f64..3.0) {
        let a = norms(&u, p, p + dq);
        let b = norms(&u.scaled(c), p, p + dq);
        for (x, y) in [(a.l2, b.l2), (a.lp, b.lp), (a.lq, b.lq), (a.w1p, b.w1p)] {
            prop_assert!(close(c.abs() * x, y), "{} vs {}", c.abs() * x, y);
        }
    }

    #[test]
    fn norms_satisfy_the_triangle_inequality((u, v) in field_pair(), p in 2.0f64..6.0, dq in 0.0f64..3.0) {
        let q = p + dq;
        let (a, b) = (norms(&u, p, q), norms(&v, p, q));
        let s = norms(&u.add_scaled(1.0, &v), p, q);
        let slack = 1e-12;
        prop_assert!(s.l2 <= a.l2 + b.l2 + slack);
        prop_assert!(s.lp <= a.lp + b.lp + slack);
        prop_assert!(s.lq <= a.lq + b.lq + slack);
        prop_assert!(s.w1p <= a.w1p + b.w1p + slack);
    }

    #[test]
    fn p_laplace_is_monotone((u, v) in field_pair(), p in 2.0f64..5.0) {
        let lu = p_laplace(&u, p, 0.0).unwrap();
        let lv = p_laplace(&v, p, 0.0).unwrap();
        let diff = u.add_scaled(-1.0, &v);
        let pairing = lu.add_scaled(-1.0, &lv).dot(&diff);
        let scale = lu.dot(&lu).sqrt() * diff.l2() + 1.0;
        prop_assert!(pairing <= 1e-10 * scale, "pairing {pairing}");
    }

    #[test]
    fn p_laplace_at_two_is_the_standard_laplacian(u in field_on(grid_1d())) {
        let g = *u.grid();
        let (n, dx) = (g.n_per_axis(), g.dx());
        let l = p_laplace(&u, 2.0, 0.0).unwrap();
        let v = u.values();
        for i in 1..n - 1 {
            let want = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx);
            prop_assert!(close(l.values()[i], want));
        }
        prop_assert_eq!(l.values()[0], 0.0);
        prop_assert_eq!(l.values()[n - 1], 0.0);
    }

    #[test]
    fn p_laplace_at_two_is_the_five_point_laplacian(u in field_on(grid_2d())) {
        let g = *u.grid();
        let (n, dx) = (g.n_per_axis(), g.dx());
        let l = p_laplace(&u, 2.0, 0.0).unwrap();
        let v = u.values();
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let k = j * n + i;
                let want = (v[k + 1] + v[k - 1] + v[k + n] + v[k - n] - 4.0 * v[k]) / (dx * dx);
                prop_assert!(close(l.values()[k], want));
            }
        }
    }

    #[test]
    fn shifts_form_a_group(seed in any::<u64>(), s in -3000i64..3000, t in -3000i64..3000, m in -3000i64..3000) {
        let w = NoisePath::new(seed, 1e-3, 1.0).unwrap();
        let twice = w.shift_ticks(s).shift_ticks(t);
        let once = w.shift_ticks(s + t);
        prop_assert_eq!(twice.value_at_tick(m).to_bits(), once.value_at_tick(m).to_bits());
        prop_assert_eq!(w.shift_ticks(0).value_at_tick(m).to_bits(), w.value_at_tick(m).to_bits());
        let direct = w.value_at_tick(m + s) - w.value_at_tick(s);
        prop_assert_eq!(w.shift_ticks(s).value_at_tick(m).to_bits(), direct.to_bits());
    }

    #[test]
    fn tail_mass_is_nonincreasing_in_k(u in any_field(), k1 in 0.05f64..1.9, dk in 0.0f64..1.9) {
        let k2 = (k1 + dk).min(1.95);
        let a = tail_mass(&u, k1).unwrap();
        let b = tail_mass(&u, k2).unwrap();
        prop_assert!(b.plain <= a.plain);
        prop_assert!(b.weighted <= a.weighted * (1.0 + 1e-12));
        prop_assert!(a.weighted <= a.plain * (1.0 + 1e-12));
        prop_assert!(a.plain <= u.l2_sq() * (1.0 + 1e-12));
    }

    #[test]
    fn hausdorff_semidistance_obeys_the_triangle_inequality(
        a in prop::collection::vec(field_on(grid_1d()), 1..4),
        b in prop::collection::vec(field_on(grid_1d()), 1..4),
        c in prop::collection::vec(field_on(grid_1d()), 1..4),
    ) {
        let (a, b, c) = (ensemble(a), ensemble(b), ensemble(c));
        let ac = hausdorff_semidistance(&a, &c).unwrap();
        let ab = hausdorff_semidistance(&a, &b).unwrap();
        let bc = hausdorff_semidistance(&b, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert_eq!(hausdorff_semidistance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn exponents_are_conjugate(p in 2.0f64..10.0, dq in 0.0f64..10.0) {
        let spec = ProblemSpec { p, q: p + dq, ..ProblemSpec::default_additive() };
        prop_assert!(close(1.0 / spec.p + 1.0 / spec.p1(), 1.0));
        prop_assert!(close(1.0 / spec.q + 1.0 / spec.q1(), 1.0));
    }
}
