use nalgebra::{Cholesky, DMatrix};
use proptest::prelude::*;

use gpbandit::{gram, KernelSpec, Point};

/// `K_ν(z) = ∫₀^∞ exp(-z cosh s) cosh(ν s) ds`, trapezoid rule on a range
/// where the integrand has decayed below e⁻⁶⁰.
fn bessel_k(nu: f64, z: f64) -> f64 {
    let upper = (60.0 / z + 1.0).acosh() + 1.0;
    let steps = 200_000;
    let h = upper / steps as f64;
    let f = |s: f64| (-z * s.cosh()).exp() * (nu * s).cosh();
    let mut acc = 0.5 * (f(0.0) + f(upper));
    for i in 1..steps {
        acc += f(i as f64 * h);
    }
    acc * h
}

fn matern_oracle(nu: f64, l: f64, r: f64) -> f64 {
    let gamma_nu = match nu {
        0.5 => std::f64::consts::PI.sqrt(),
        1.5 => std::f64::consts::PI.sqrt() / 2.0,
        2.5 => 3.0 * std::f64::consts::PI.sqrt() / 4.0,
        _ => unreachable!(),
    };
    let z = (2.0 * nu).sqrt() * r / l;
    2f64.powf(1.0 - nu) / gamma_nu * z.powf(nu) * bessel_k(nu, z)
}

#[test]
fn matern_matches_bessel_integral() {
    for nu in [0.5, 1.5, 2.5] {
        for l in [0.2, 1.0] {
            let k = KernelSpec::matern(nu, l).unwrap();
            for r in [0.01, 0.1, 0.3, 0.7, 1.5, 3.0] {
                let got = k.eval(&Point::new(vec![0.0]).unwrap(), &Point::new(vec![r]).unwrap()).unwrap();
                let want = matern_oracle(nu, l, r);
                assert!((got - want).abs() <= 1e-9, "nu={nu} l={l} r={r}: {got} vs {want}");
            }
        }
    }
}

fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
    (0usize..4, 0.05f64..2.0).prop_map(|(family, l)| match family {
        0 => KernelSpec::squared_exponential(l).unwrap(),
        1 => KernelSpec::matern(0.5, l).unwrap(),
        2 => KernelSpec::matern(1.5, l).unwrap(),
        _ => KernelSpec::matern(2.5, l).unwrap(),
    })
}

fn points_strategy(max: usize) -> impl Strategy<Value = Vec<Point>> {
    (1usize..4).prop_flat_map(move |d| {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), 1..max)
            .prop_map(|v| v.into_iter().map(|c| Point::new(c).unwrap()).collect())
    })
}

proptest! {
    #[test]
    fn gram_is_symmetric_with_unit_diagonal(k in kernel_strategy(), pts in points_strategy(12)) {
        let m = gram(&k, &pts).unwrap();
        for i in 0..pts.len() {
            prop_assert!((m[(i, i)] - 1.0).abs() <= 1e-15);
            for j in 0..pts.len() {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
                prop_assert!(m[(i, j)] <= 1.0 + 1e-15 && m[(i, j)] >= 0.0);
            }
        }
    }

    #[test]
    fn gram_is_positive_semidefinite(k in kernel_strategy(), pts in points_strategy(15)) {
        let n = pts.len();
        let m = gram(&k, &pts).unwrap() + DMatrix::identity(n, n) * 1e-9;
        prop_assert!(Cholesky::new(m).is_some());
    }

    #[test]
    fn linear_gram_is_positive_semidefinite(pts in points_strategy(10)) {
        let n = pts.len();
        let m = gram(&KernelSpec::Linear, &pts).unwrap() + DMatrix::identity(n, n) * 1e-9;
        prop_assert!(Cholesky::new(m).is_some());
    }

    #[test]
    fn stationary_kernels_decrease_with_distance(k in kernel_strategy(), a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let origin = Point::new(vec![0.0]).unwrap();
        let (near, far) = if a <= b { (a, b) } else { (b, a) };
        let kn = k.eval(&origin, &Point::new(vec![near]).unwrap()).unwrap();
        let kf = k.eval(&origin, &Point::new(vec![far]).unwrap()).unwrap();
        prop_assert!(kf <= kn);
    }
}
