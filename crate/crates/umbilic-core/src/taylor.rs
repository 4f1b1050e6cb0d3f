//! Truncated power-series arithmetic on bivariate float polynomials.
//!
//! Division, square root, and map inversion closed under truncation; these
//! carry the implicit-function step that re-graphs a surface over its
//! tangent plane. All inputs and outputs live in local offset coordinates,
//! terms above `order` are dropped.

use crate::poly::MPoly;

type Series = MPoly<f64, 2>;

/// Multiplicative inverse of `f` modulo degree `order + 1`.
///
/// Requires `f(0) != 0`. Newton iteration `g <- g(2 - fg)` doubles the
/// number of correct degrees per step.
pub fn recip(f: &Series, order: u16) -> Series {
    let c0 = f.coeff([0, 0]);
    assert!(c0 != 0.0, "series reciprocal needs a nonzero constant term");
    let mut g = Series::constant(1.0 / c0);
    let two = Series::constant(2.0);
    let mut correct = 1u32;
    while correct <= u32::from(order) {
        let t = two.sub(&f.mul_trunc(&g, order));
        g = g.mul_trunc(&t, order);
        correct *= 2;
    }
    g
}

/// Square root of `f` modulo degree `order + 1`, positive branch.
///
/// Requires `f(0) > 0`. Newton iteration `g <- (g + f/g)/2`.
pub fn sqrt(f: &Series, order: u16) -> Series {
    let c0 = f.coeff([0, 0]);
    assert!(c0 > 0.0, "series square root needs a positive constant term");
    let mut g = Series::constant(c0.sqrt());
    let mut correct = 1u32;
    while correct <= u32::from(order) {
        let q = f.mul_trunc(&recip(&g, order), order);
        g = g.add(&q).scale(&0.5);
        correct *= 2;
    }
    g
}

/// Compositional inverse of the map `f = (f0, f1)` modulo degree `order + 1`.
///
/// Requires `f(0) = 0` and an invertible linear part. Returns `g` with
/// `f(g(s,t)) = (s,t)` up to the truncation order. The iteration
/// `g <- L^{-1}(id - N(g))` (with `f = L + N`) fixes one extra degree per
/// pass.
pub fn invert_map(f: &[Series; 2], order: u16) -> [Series; 2] {
    assert!(
        f[0].coeff([0, 0]) == 0.0 && f[1].coeff([0, 0]) == 0.0,
        "map inversion needs f(0) = 0"
    );
    let l = [
        [f[0].coeff([1, 0]), f[0].coeff([0, 1])],
        [f[1].coeff([1, 0]), f[1].coeff([0, 1])],
    ];
    let det = l[0][0] * l[1][1] - l[0][1] * l[1][0];
    assert!(det != 0.0, "map inversion needs an invertible linear part");
    let li = [
        [l[1][1] / det, -l[0][1] / det],
        [-l[1][0] / det, l[0][0] / det],
    ];
    let s = Series::var(0);
    let t = Series::var(1);
    // nonlinear parts N = f - L
    let lin0 = s.scale(&l[0][0]).add(&t.scale(&l[0][1]));
    let lin1 = s.scale(&l[1][0]).add(&t.scale(&l[1][1]));
    let n0 = f[0].sub(&lin0);
    let n1 = f[1].sub(&lin1);
    let apply_li = |a: &Series, b: &Series| {
        [
            a.scale(&li[0][0]).add(&b.scale(&li[0][1])),
            a.scale(&li[1][0]).add(&b.scale(&li[1][1])),
        ]
    };
    let mut g = apply_li(&s, &t);
    for _ in 0..order {
        let ng0 = n0.compose(&g, order);
        let ng1 = n1.compose(&g, order);
        g = apply_li(&s.sub(&ng0), &t.sub(&ng1));
    }
    g
}

/// Series of `sin(theta0 + x_var)` in the offset `x_var`, to degree `order`.
pub fn sin_series(theta0: f64, var: usize, order: u16) -> Series {
    trig_series(theta0, var, order, 0)
}

/// Series of `cos(theta0 + x_var)` in the offset `x_var`, to degree `order`.
pub fn cos_series(theta0: f64, var: usize, order: u16) -> Series {
    trig_series(theta0, var, order, 1)
}

fn trig_series(theta0: f64, var: usize, order: u16, phase: u16) -> Series {
    assert!(var < 2);
    let mut out = Series::zero();
    let mut fact = 1.0;
    for j in 0..=order {
        if j > 0 {
            fact *= f64::from(j);
        }
        // j-th derivative of sin is sin shifted by j*pi/2
        let d = (theta0 + f64::from(j + phase) * std::f64::consts::FRAC_PI_2).sin();
        let mut exps = [0u16; 2];
        exps[var] = j;
        out.add_term(exps, d / fact);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_coeff_diff(a: &Series, b: &Series) -> f64 {
        let d = a.sub(b);
        d.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max)
    }

    fn sample() -> Series {
        let mut f = Series::constant(1.0);
        f.add_term([1, 0], 1.0);
        f.add_term([0, 1], 2.0);
        f.add_term([2, 0], 0.5);
        f.add_term([1, 1], -0.25);
        f.add_term([0, 3], 0.125);
        f
    }

    #[test]
    fn reciprocal_multiplies_back_to_one() {
        let f = sample();
        let g = recip(&f, 5);
        let prod = f.mul_trunc(&g, 5);
        assert!(max_coeff_diff(&prod, &Series::one()) < 1e-13);
    }

    #[test]
    fn sqrt_squares_back() {
        let mut f = Series::constant(4.0);
        f.add_term([1, 0], 1.0);
        f.add_term([0, 1], -1.0);
        f.add_term([1, 1], 0.5);
        let g = sqrt(&f, 5);
        assert!(max_coeff_diff(&g.mul_trunc(&g, 5), &f.truncate(5)) < 1e-13);
    }

    #[test]
    fn sqrt_of_one_plus_u_matches_binomial_coefficients() {
        let mut f = Series::one();
        f.add_term([1, 0], 1.0);
        let g = sqrt(&f, 5);
        let expected = [1.0, 0.5, -1.0 / 8.0, 1.0 / 16.0, -5.0 / 128.0, 7.0 / 256.0];
        for (j, want) in expected.iter().enumerate() {
            assert!((g.coeff([j as u16, 0]) - want).abs() < 1e-15, "degree {j}");
        }
    }

    #[test]
    fn invert_map_round_trips_both_ways() {
        let mut f0 = Series::var(0);
        f0.add_term([0, 1], 0.3);
        f0.add_term([2, 0], 0.2);
        f0.add_term([1, 1], -0.1);
        f0.add_term([0, 3], 0.05);
        let mut f1 = Series::var(1);
        f1.add_term([1, 0], -0.2);
        f1.add_term([0, 2], 0.1);
        f1.add_term([3, 0], 0.07);
        let f = [f0, f1];
        let g = invert_map(&f, 5);
        let fg0 = f[0].compose(&g, 5);
        let fg1 = f[1].compose(&g, 5);
        assert!(max_coeff_diff(&fg0, &Series::var(0)) < 1e-12);
        assert!(max_coeff_diff(&fg1, &Series::var(1)) < 1e-12);
        let gf0 = g[0].compose(&f, 5);
        let gf1 = g[1].compose(&f, 5);
        assert!(max_coeff_diff(&gf0, &Series::var(0)) < 1e-12);
        assert!(max_coeff_diff(&gf1, &Series::var(1)) < 1e-12);
    }

    #[test]
    fn trig_series_satisfy_pythagoras_and_derivative_rule() {
        let th = 0.8372;
        let s = sin_series(th, 0, 6);
        let c = cos_series(th, 0, 6);
        let one = s.mul_trunc(&s, 5).add(&c.mul_trunc(&c, 5));
        assert!(max_coeff_diff(&one, &Series::one()) < 1e-14);
        assert!(max_coeff_diff(&s.deriv(0).truncate(5), &c.truncate(5)) < 1e-14);
    }

    #[test]
    fn trig_series_evaluate_against_libm() {
        let th = -1.2;
        let s = sin_series(th, 1, 5);
        for &dx in &[0.01, -0.02, 0.005] {
            let got = s.eval(&[0.0, dx]);
            assert!((got - (th + dx).sin()).abs() < 1e-12);
        }
    }
}
