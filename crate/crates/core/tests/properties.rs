use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use pbdw_core::estimator::saddle_matrix;
use pbdw_core::observation::FunctionalSet;
use pbdw_core::{DiscreteSpace, Field, Norm};
use proptest::prelude::*;

fn space() -> DiscreteSpace {
    DiscreteSpace::unit(&[9, 9]).unwrap()
}

fn field_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, 81)
}

fn field(s: &DiscreteSpace, v: Vec<f64>) -> Field {
    s.field(DVector::from_vec(v)).unwrap()
}

fn norm_strategy() -> impl Strategy<Value = Norm> {
    prop_oneof![Just(Norm::L2), Just(Norm::H1)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inner_product_is_symmetric_and_cauchy_schwarz(a in field_strategy(), b in field_strategy(), which in norm_strategy()) {
        let s = space();
        let (u, v) = (field(&s, a), field(&s, b));
        let uv = s.inner(&u, &v, which).unwrap();
        assert_relative_eq!(uv, s.inner(&v, &u, which).unwrap(), max_relative = 1e-12, epsilon = 1e-12);
        let bound = s.norm(&u, which).unwrap() * s.norm(&v, which).unwrap();
        prop_assert!(uv.abs() <= bound * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn riesz_representer_is_linear_and_represents(
        w1 in prop::collection::vec(-1.0..1.0f64, 81),
        w2 in prop::collection::vec(-1.0..1.0f64, 81),
        a in -3.0..3.0f64,
        t in field_strategy(),
    ) {
        let s = space();
        let (w1, w2) = (DVector::from_vec(w1), DVector::from_vec(w2));
        let combined = s.riesz_representer(&(&w1 * a + &w2)).unwrap();
        let separate = &s.riesz_representer(&w1).unwrap().scaled(a) + &s.riesz_representer(&w2).unwrap();
        let scale = combined.values().amax().max(1.0);
        prop_assert!((combined.values() - separate.values()).amax() <= 1e-10 * scale);
        // (R w, v)_H1 = w . v
        let v = field(&s, t);
        let lhs = s.inner(&s.riesz_representer(&w1).unwrap(), &v, Norm::H1).unwrap();
        assert_relative_eq!(lhs, w1.dot(v.values()), max_relative = 1e-9, epsilon = 1e-9);
    }

    #[test]
    fn measurements_are_linear(
        a in field_strategy(),
        b in field_strategy(),
        c in -5.0..5.0f64,
        x in prop::collection::vec(0.0..1.0f64, 6),
    ) {
        let s = space();
        let centers: Vec<[f64; 2]> = x.chunks(2).map(|p| [p[0], p[1]]).collect();
        let fs = FunctionalSet::build(&s, &centers, 0.1).unwrap();
        let (u, v) = (field(&s, a), field(&s, b));
        let lhs = fs.apply(&(&u.scaled(c) + &v)).unwrap();
        let rhs = fs.apply(&u).unwrap() * c + fs.apply(&v).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-10 * (1.0 + c.abs()) * 10.0);
        let one = fs.apply(&s.constant(1.0)).unwrap();
        prop_assert!(one.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn saddle_matrix_is_symmetric(
        m in 1usize..7,
        n in 1usize..4,
        xi in 0.0..10.0f64,
        seed in prop::collection::vec(-2.0..2.0f64, 7 * 7 + 7 * 4),
    ) {
        let l_eta = DMatrix::from_fn(m, m, |i, j| seed[i * 7 + j]);
        let l_z = DMatrix::from_fn(m, n, |i, j| seed[49 + i * 4 + j]);
        let a = saddle_matrix(&l_z, &l_eta, xi);
        prop_assert_eq!(a.shape(), (m + n, m + n));
        prop_assert_eq!(&a, &a.transpose());
        prop_assert!(a.view((m, m), (n, n)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn orthonormalization_preserves_span(raw in prop::collection::vec(field_strategy(), 1..5), which in norm_strategy()) {
        let s = space();
        let raw: Vec<Field> = raw.into_iter().map(|v| field(&s, v)).collect();
        let basis = s.orthonormalize(&raw, which).unwrap();
        prop_assert_eq!(basis.len(), raw.len());
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let delta = if i == j { 1.0 } else { 0.0 };
                let g = s.inner(a, b, which).unwrap();
                prop_assert!((g - delta).abs() < 1e-10);
            }
        }
        for u in &raw {
            let p = s.project(u, &basis, which).unwrap();
            let resid = s.norm(&(u - &p), which).unwrap();
            prop_assert!(resid <= 1e-9 * s.norm(u, which).unwrap());
        }
    }
}
