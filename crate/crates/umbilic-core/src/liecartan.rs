//! Suspension of the curvature-line equation to a line field on the
//! projectivized tangent bundle, and the local analysis of its singular
//! points over an umbilic.
//!
//! The curvature-line equation L dv² + M du dv + N du² = 0 lifts to the
//! implicit surface F(u,v,p) = L p² + M p + N = 0 with p = dv/du, carrying
//! the field X_F = (F_p, p F_p, −(F_u + p F_v)). The complementary chart
//! q = du/dv uses G = L + M q + N q² and Y = (q G_q, G_q, −(G_u q + G_v)).
//! Both fields have F (resp. G) as an exact first integral, so the lifted
//! surface is invariant and the singular points sit on the fiber u = v = 0.

use crate::classifier::compute_invariants;
use crate::jets::{lmn_expansion, MongeJet5};
use crate::poly::MPoly;
use crate::scalar::{Scalar, ToleranceContext};
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LieCartanError {
    #[error("fiber cubic vanishes identically (a = b = c = 0)")]
    DegenerateFiber,
    #[error("jet is outside the required stratum: {0}")]
    NotOnStratum(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Chart {
    #[serde(rename = "P_CHART")]
    P,
    #[serde(rename = "Q_CHART")]
    Q,
}

/// The implicit surface and its tangent field in one projective chart.
#[derive(Debug, Clone)]
pub struct LieCartanField {
    pub jet: MongeJet5,
    pub chart: Chart,
    /// F(u,v,p) or G(u,v,q); variables are (u, v, fiber coordinate).
    pub surface: MPoly<Scalar, 3>,
    pub components: [MPoly<Scalar, 3>; 3],
}

/// F = L p² + M p + N in the p-chart, G = L + M q + N q² in the q-chart,
/// from the degree-3 expansions of L, M, N.
pub fn implicit_surface(jet: &MongeJet5, chart: Chart) -> MPoly<Scalar, 3> {
    let lmn = lmn_expansion(jet);
    let embed = |poly: &MPoly<Scalar, 2>| -> MPoly<Scalar, 3> {
        let mut out = MPoly::zero();
        for (exps, coeff) in poly.terms() {
            out.add_term([exps[0], exps[1], 0], coeff.clone());
        }
        out
    };
    let (l, m, n) = (embed(&lmn.l), embed(&lmn.m), embed(&lmn.n));
    let fiber = MPoly::<Scalar, 3>::var(2);
    let fiber2 = fiber.mul(&fiber);
    match chart {
        Chart::P => l.mul(&fiber2).add(&m.mul(&fiber)).add(&n),
        Chart::Q => l.add(&m.mul(&fiber)).add(&n.mul(&fiber2)),
    }
}

pub fn lie_cartan_field(jet: &MongeJet5, chart: Chart) -> LieCartanField {
    let surface = implicit_surface(jet, chart);
    let (du, dv, dw) = (surface.deriv(0), surface.deriv(1), surface.deriv(2));
    let w = MPoly::<Scalar, 3>::var(2);
    let components = match chart {
        // X = (F_p, p F_p, −(F_u + p F_v))
        Chart::P => [dw.clone(), w.mul(&dw), du.add(&w.mul(&dv)).neg()],
        // Y = (q G_q, G_q, −(G_u q + G_v))
        Chart::Q => [w.mul(&dw), dw.clone(), du.mul(&w).add(&dv).neg()],
    };
    LieCartanField {
        jet: jet.clone(),
        chart,
        surface,
        components,
    }
}

/// Roots of the fiber cubic p(bp² − cp + a − 2b), ascending, with
/// multiplicity. These are the p-values of the singular points of X_F.
pub fn singular_points_on_fiber(
    jet: &MongeJet5,
    tol: &ToleranceContext,
) -> Result<Vec<(Scalar, u32)>, LieCartanError> {
    let scale = jet.scale();
    let s2 = scale * scale;
    let b0 = jet.b.is_zero_scaled(s2, tol);
    let c0 = jet.c.is_zero_scaled(s2, tol);
    let lin = &jet.a - &(&Scalar::from_int(2) * &jet.b);
    let lin0 = lin.is_zero_scaled(s2, tol);
    if b0 && c0 && lin0 {
        return Err(LieCartanError::DegenerateFiber);
    }

    // Quadratic factor bp² − cp + (a − 2b).
    let mut roots: Vec<(Scalar, u32)> = vec![(Scalar::zero(), 1)];
    if !b0 {
        let disc = &(&jet.c * &jet.c) - &(&Scalar::from_int(4) * &(&jet.b * &lin));
        let two_b = &Scalar::from_int(2) * &jet.b;
        if disc.is_zero_scaled(s2 * s2, tol) {
            roots.push((&jet.c / &two_b, 2));
        } else if disc.to_f64() > 0.0 {
            let sq = disc.sqrt();
            // Citardauq: form the larger-magnitude root first, divide for
            // the other; avoids cancellation when c dominates.
            let signed_sq = if jet.c.to_f64() >= 0.0 { sq } else { -&sq };
            let r1 = &(&jet.c + &signed_sq) / &two_b;
            let r2 = &lin / &(&jet.b * &r1);
            roots.push((r1, 1));
            roots.push((r2, 1));
        }
    } else if !c0 {
        roots.push((&lin / &jet.c, 1));
    }

    roots.sort_by(|x, y| x.0.to_f64().total_cmp(&y.0.to_f64()));
    let mut merged: Vec<(Scalar, u32)> = Vec::new();
    for (r, m) in roots {
        match merged.last_mut() {
            Some(last) if (&r - &last.0).is_zero_scaled(1.0 + scale, tol) => last.1 += m,
            _ => merged.push((r, m)),
        }
    }
    Ok(merged)
}

/// Closed-form eigenvalues of DX_F at (0,0,p) on the invariant surface:
/// the third eigenvalue of the 3×3 Jacobian is always zero.
pub fn surface_eigenvalues_closed_form(jet: &MongeJet5, p: f64) -> (f64, f64) {
    let (a, b, c) = (jet.a.to_f64(), jet.b.to_f64(), jet.c.to_f64());
    let l1 = (b - a) + c * p - 2.0 * b * p * p;
    let l2 = 3.0 * b * p * p - 2.0 * c * p + a - 2.0 * b;
    (l1, l2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MorseType {
    Regular,
    ConicMorse,
    Corank1Cubic,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LocalType {
    HyperbolicSaddle,
    HyperbolicNode,
    SaddleNodeOrder3,
    NonHyperbolic,
}

/// Leading data of the flow on the one-dimensional center manifold at a
/// semi-hyperbolic singular point: x' = g2 x² + g3 x³ + O(x⁴) in the unit
/// center direction, with the transverse eigenvalue attached.
#[derive(Debug, Clone, Serialize)]
pub struct CenterManifoldData {
    pub transverse_eigenvalue: f64,
    /// Unit vector in (u, v, fiber) coordinates tangent to the center
    /// manifold; g2's sign is relative to this orientation.
    pub center_direction: [f64; 3],
    pub g2: f64,
    pub g3: f64,
    /// 2 or 3 for a determined leading order, 0 when both terms vanish.
    pub order: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularPointAnalysis {
    pub chart: Chart,
    pub location: [f64; 3],
    pub jacobian: [[f64; 3]; 3],
    /// Complex eigenvalues as (re, im), sorted by real part then imaginary
    /// part, conjugates with the nonnegative imaginary part first.
    pub eigenvalues: [(f64, f64); 3],
    /// The two eigenvalues of the flow restricted to the invariant surface.
    pub surface_eigenvalues: [f64; 2],
    pub gradient_norm: f64,
    pub hessian: [[f64; 3]; 3],
    pub hessian_eigenvalues: [f64; 3],
    pub morse_type: MorseType,
    pub local_type: LocalType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<CenterManifoldData>,
}

fn matrix_to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut rows = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rows[i][j] = m[(i, j)];
        }
    }
    rows
}

fn sorted_complex_eigenvalues(m: &Matrix3<f64>) -> [(f64, f64); 3] {
    let eig = m.complex_eigenvalues();
    let mut out: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    out.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.total_cmp(&x.1)));
    [out[0], out[1], out[2]]
}

/// Eigenvalues of the Jacobian at a singular point on the fiber. One row of
/// DX there is the fiber coordinate times another, so the determinant is
/// exactly zero and the characteristic polynomial factors into lambda times a
/// quadratic with exact coefficients; the numeric solver (which smears a
/// nilpotent spectrum to ~1e-6) is only a fallback for inexact input.
fn fiber_point_eigenvalues(j: &[[Scalar; 3]; 3], jf: &Matrix3<f64>) -> [(f64, f64); 3] {
    let minor = |r0: usize, r1: usize, c0: usize, c1: usize| -> Scalar {
        &(&j[r0][c0] * &j[r1][c1]) - &(&j[r0][c1] * &j[r1][c0])
    };
    let det = &(&(&j[0][0] * &minor(1, 2, 1, 2)) - &(&j[0][1] * &minor(1, 2, 0, 2)))
        + &(&j[0][2] * &minor(1, 2, 0, 1));
    if !det.is_zero_strict() {
        return sorted_complex_eigenvalues(jf);
    }
    let tr = (&(&j[0][0] + &j[1][1]) + &j[2][2]).to_f64();
    let m2 = (&(&minor(0, 1, 0, 1) + &minor(0, 2, 0, 2)) + &minor(1, 2, 1, 2)).to_f64();
    let disc = tr * tr - 4.0 * m2;
    let mut out: Vec<(f64, f64)> = if disc >= 0.0 {
        let sq = disc.sqrt();
        vec![(0.0, 0.0), ((tr - sq) / 2.0, 0.0), ((tr + sq) / 2.0, 0.0)]
    } else {
        let sq = (-disc).sqrt();
        vec![(0.0, 0.0), (tr / 2.0, sq / 2.0), (tr / 2.0, -sq / 2.0)]
    };
    out.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.total_cmp(&x.1)));
    [out[0], out[1], out[2]]
}

/// Taylor-expand `poly` at `x0` (same variables, new origin).
fn shift<const N: usize>(poly: &MPoly<f64, N>, x0: &[f64; N]) -> MPoly<f64, N> {
    let subs: [MPoly<f64, N>; N] = std::array::from_fn(|i| {
        let mut s = MPoly::var(i);
        s.add_term([0; N], x0[i]);
        s
    });
    poly.compose(&subs, poly.total_degree())
}

/// Solve F(x) = 0 for coordinate `elim` as a series in the other two, to
/// total degree 4. Requires F(0) = 0 and ∂F/∂x_elim (0) ≠ 0.
fn graph_series(f: &MPoly<f64, 3>, elim: usize) -> MPoly<f64, 2> {
    let keep: Vec<usize> = (0..3).filter(|&i| i != elim).collect();
    let g0 = f.deriv(elim).eval(&[0.0; 3]);
    debug_assert!(g0 != 0.0);
    let mut phi = MPoly::<f64, 2>::zero();
    for _ in 0..5 {
        let subs: [MPoly<f64, 2>; 3] = std::array::from_fn(|i| {
            if i == elim {
                phi.clone()
            } else if i == keep[0] {
                MPoly::var(0)
            } else {
                MPoly::var(1)
            }
        });
        let residual = f.compose(&subs, 4);
        phi = phi.sub(&residual.scale(&(1.0 / g0))).truncate(4);
    }
    phi
}

struct PlanarReduction {
    eigenvalues: [f64; 2],
    center: Option<CenterManifoldData>,
}

/// Restrict the field to the invariant surface (a graph over a coordinate
/// plane near a regular point) and, when the restriction is
/// semi-hyperbolic, reduce to the center manifold.
fn reduce_on_surface(
    f: &MPoly<f64, 3>,
    components: &[MPoly<f64, 3>; 3],
    x0: &[f64; 3],
    tol: &ToleranceContext,
    eig_floor: f64,
) -> PlanarReduction {
    let f_shift = shift(f, x0);
    let comp_shift: [MPoly<f64, 3>; 3] = std::array::from_fn(|i| shift(&components[i], x0));
    let grad: Vec<f64> = (0..3)
        .map(|i| f_shift.deriv(i).eval(&[0.0; 3]))
        .collect();
    let elim = (0..3)
        .max_by(|&i, &j| grad[i].abs().total_cmp(&grad[j].abs()))
        .unwrap();
    let keep: Vec<usize> = (0..3).filter(|&i| i != elim).collect();
    let phi = graph_series(&f_shift, elim);
    let subs: [MPoly<f64, 2>; 3] = std::array::from_fn(|i| {
        if i == elim {
            phi.clone()
        } else if i == keep[0] {
            MPoly::var(0)
        } else {
            MPoly::var(1)
        }
    });
    let planar: [MPoly<f64, 2>; 2] =
        std::array::from_fn(|i| comp_shift[keep[i]].compose(&subs, 3));

    let a = Matrix2::new(
        planar[0].coeff([1, 0]),
        planar[0].coeff([0, 1]),
        planar[1].coeff([1, 0]),
        planar[1].coeff([0, 1]),
    );
    // Real eigenvalues (the lifted field has no focus at fiber points).
    let tr = a.trace();
    let det = a.determinant();
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let (l1, l2) = ((tr - disc) / 2.0, (tr + disc) / 2.0);
    let mag = l1.abs().max(l2.abs());
    let zero1 = l1.abs() <= tol.eps_eig * mag + eig_floor;
    let zero2 = l2.abs() <= tol.eps_eig * mag + eig_floor;
    if zero1 == zero2 {
        return PlanarReduction {
            eigenvalues: [l1, l2],
            center: None,
        };
    }

    let (lam_c, lam_t) = if zero1 { (l1, l2) } else { (l2, l1) };
    let unit_eig = |lam: f64| -> Vector2<f64> {
        let m = a - Matrix2::identity() * lam;
        let cand1 = Vector2::new(m[(1, 1)], -m[(1, 0)]);
        let cand2 = Vector2::new(-m[(0, 1)], m[(0, 0)]);
        let mut v = if cand1.norm() >= cand2.norm() {
            cand1
        } else {
            cand2
        };
        v.normalize_mut();
        for comp in v.iter() {
            if comp.abs() > 1e-9 {
                if *comp < 0.0 {
                    v = -v;
                }
                break;
            }
        }
        v
    };
    let ec = unit_eig(lam_c);
    let et = unit_eig(lam_t);
    let basis = Matrix2::from_columns(&[ec, et]);
    let inv = basis
        .try_inverse()
        .expect("center and transverse directions are independent");

    // Field in (xi, eta) coordinates aligned with (center, transverse).
    let lin_subs: [MPoly<f64, 2>; 2] = std::array::from_fn(|i| {
        let mut s = MPoly::zero();
        s.add_term([1, 0], basis[(i, 0)]);
        s.add_term([0, 1], basis[(i, 1)]);
        s
    });
    let in_basis: [MPoly<f64, 2>; 2] = std::array::from_fn(|i| {
        let c0 = planar[0].compose(&lin_subs, 3).scale(&inv[(i, 0)]);
        let c1 = planar[1].compose(&lin_subs, 3).scale(&inv[(i, 1)]);
        c0.add(&c1)
    });
    let (f20, f11, f30) = (
        in_basis[0].coeff([2, 0]),
        in_basis[0].coeff([1, 1]),
        in_basis[0].coeff([3, 0]),
    );
    let g20 = in_basis[1].coeff([2, 0]);
    let h2 = -g20 / lam_t;
    let g2 = f20;
    let g3 = f30 + f11 * h2;

    // Embed the center direction through the graph.
    let mut dir = [0.0; 3];
    dir[keep[0]] = ec[0];
    dir[keep[1]] = ec[1];
    dir[elim] = phi.coeff([1, 0]) * ec[0] + phi.coeff([0, 1]) * ec[1];
    let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    for d in dir.iter_mut() {
        *d /= n;
    }

    let vmag = planar
        .iter()
        .flat_map(|p| p.terms().map(|(_, c)| c.abs()))
        .fold(0.0f64, f64::max);
    let g2_zero = g2.abs() <= tol.eps_eig * vmag + 1e-12;
    let g3_zero = g3.abs() <= tol.eps_eig * vmag + 1e-12;
    let order = if !g2_zero {
        2
    } else if !g3_zero {
        3
    } else {
        0
    };
    PlanarReduction {
        eigenvalues: [lam_c, lam_t],
        center: Some(CenterManifoldData {
            transverse_eigenvalue: lam_t,
            center_direction: dir,
            g2,
            g3,
            order,
        }),
    }
}

/// Jacobian, Hessian, Morse typing, and local phase-portrait typing at a
/// singular point on the fiber (fiber coordinate `w0`: a root p_i in the
/// p-chart, or a root q_i — usually 0 — in the q-chart).
pub fn linearize_at_singularity(
    field: &LieCartanField,
    w0: &Scalar,
    tol: &ToleranceContext,
) -> SingularPointAnalysis {
    let scale = field.jet.scale();
    let w = w0.to_f64();
    let x0 = [0.0, 0.0, w];
    let fpoly = field.surface.to_f64();
    let comps: [MPoly<f64, 3>; 3] = std::array::from_fn(|i| field.components[i].to_f64());

    let x0s = [Scalar::zero(), Scalar::zero(), w0.clone()];
    let jac_exact: [[Scalar; 3]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|j| field.components[i].deriv(j).eval(&x0s)));
    let jac = Matrix3::from_fn(|i, j| jac_exact[i][j].to_f64());
    let eigenvalues = fiber_point_eigenvalues(&jac_exact, &jac);

    let grad = Vector3::from_fn(|i, _| fpoly.deriv(i).eval(&x0));
    // Gradient entries carry homogeneity weight 2 times powers of the fiber
    // coordinate, hence the scale below.
    let grad_floor = tol.eps_zero * scale * scale * (1.0 + w * w);
    let critical = grad.norm() <= grad_floor;

    let hess = Matrix3::from_fn(|i, j| fpoly.deriv(i).deriv(j).eval(&x0));
    let hess_eig = hess.symmetric_eigen().eigenvalues;
    let mut hessian_eigenvalues = [hess_eig[0], hess_eig[1], hess_eig[2]];
    hessian_eigenvalues.sort_by(f64::total_cmp);

    let morse_type = if !critical {
        MorseType::Regular
    } else {
        let mu_mag = hessian_eigenvalues
            .iter()
            .fold(0.0f64, |acc, m| acc.max(m.abs()));
        let mu_floor = tol.eps_eig * mu_mag + grad_floor;
        let corank = hessian_eigenvalues
            .iter()
            .filter(|m| m.abs() <= mu_floor)
            .count();
        match corank {
            0 => MorseType::ConicMorse,
            1 => {
                // Cubic of F along the Hessian kernel line.
                let kernel = hess
                    .symmetric_eigen()
                    .eigenvectors
                    .column(
                        hess_eig
                            .iter()
                            .enumerate()
                            .min_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                            .unwrap()
                            .0,
                    )
                    .into_owned();
                let shifted = shift(&fpoly, &x0);
                let line: [MPoly<f64, 1>; 3] =
                    std::array::from_fn(|i| MPoly::var(0).scale(&kernel[i]));
                let cubic = shifted.compose(&line, 3).coeff([3]);
                if cubic.abs() > tol.eps_zero * scale * scale * (1.0 + w.abs().powi(3)) {
                    MorseType::Corank1Cubic
                } else {
                    MorseType::Degenerate
                }
            }
            _ => MorseType::Degenerate,
        }
    };

    let eig_floor = tol.eps_zero * scale * scale * (1.0 + w * w);
    let (surface_eigenvalues, center) = if critical {
        // On a cone there is no graph to restrict to; the surface pair is
        // read from the Jacobian spectrum (the structural zero dropped).
        let mut by_mag = eigenvalues;
        by_mag.sort_by(|x, y| {
            (x.0 * x.0 + x.1 * x.1)
                .sqrt()
                .total_cmp(&(y.0 * y.0 + y.1 * y.1).sqrt())
        });
        ([by_mag[1].0, by_mag[2].0], None)
    } else {
        let red = reduce_on_surface(&fpoly, &comps, &x0, tol, eig_floor);
        (red.eigenvalues, red.center)
    };

    let mag = surface_eigenvalues[0].abs().max(surface_eigenvalues[1].abs());
    let is_zero = |l: f64| l.abs() <= tol.eps_eig * mag + eig_floor;
    let (z1, z2) = (is_zero(surface_eigenvalues[0]), is_zero(surface_eigenvalues[1]));
    let local_type = if !z1 && !z2 {
        if surface_eigenvalues[0] * surface_eigenvalues[1] < 0.0 {
            LocalType::HyperbolicSaddle
        } else {
            LocalType::HyperbolicNode
        }
    } else if z1 != z2 {
        match &center {
            Some(cm) if cm.order == 3 && cm.g3 * cm.transverse_eigenvalue < 0.0 => {
                LocalType::SaddleNodeOrder3
            }
            _ => LocalType::NonHyperbolic,
        }
    } else {
        LocalType::NonHyperbolic
    };

    SingularPointAnalysis {
        chart: field.chart,
        location: x0,
        jacobian: matrix_to_rows(&jac),
        eigenvalues,
        surface_eigenvalues,
        gradient_norm: grad.norm(),
        hessian: matrix_to_rows(&hess),
        hessian_eigenvalues,
        morse_type,
        local_type,
        center,
    }
}

/// The Hessian part of the singular-point analysis (same report).
pub fn hessian_at_singularity(
    field: &LieCartanField,
    w0: &Scalar,
    tol: &ToleranceContext,
) -> SingularPointAnalysis {
    linearize_at_singularity(field, w0, tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaCurveReport {
    pub p_i: f64,
    /// Finite-difference second and third derivatives of F along the
    /// implicitly solved curve (F_v, F_p) = (0, 0) through (0,0,p_i),
    /// parametrized so the initial velocity is `velocity`.
    pub gamma2_fd: f64,
    pub gamma3_fd: f64,
    /// −p_i b (c² + 4b²) χ.
    pub gamma2_formula: f64,
    /// p_i (2 b p_i − c)³ ξ; matches the finite difference on χ = 0, where
    /// the third derivative is parametrization-independent.
    pub gamma3_formula: f64,
    pub chi: f64,
    pub xi: f64,
    pub velocity: [f64; 3],
}

/// Degeneracy measurements of F along the fold curve at a singular point of
/// an a = b jet. The curve solves (F_v, F_p) = (0,0); F restricted to it
/// vanishes to second order exactly when χ = 0, and then to third order
/// exactly when ξ = 0.
pub fn center_curve_third_derivative(
    jet: &MongeJet5,
    p_i: &Scalar,
    tol: &ToleranceContext,
) -> Result<GammaCurveReport, LieCartanError> {
    let scale = jet.scale();
    let s2 = scale * scale;
    if !(&jet.a - &jet.b).is_zero_scaled(s2, tol) {
        return Err(LieCartanError::NotOnStratum("a != b".into()));
    }
    if jet.b.is_zero_scaled(s2, tol) {
        return Err(LieCartanError::NotOnStratum("a = b = 0".into()));
    }
    let (b, c, k) = (jet.b.to_f64(), jet.c.to_f64(), jet.k.to_f64());
    let p = p_i.to_f64();
    let fiber_residual = b * p * p - c * p - b;
    if fiber_residual.abs() > tol.eps_residual * s2 * (1.0 + p * p) {
        return Err(LieCartanError::NotOnStratum(
            "p_i is not a singular fiber value (b p² − c p − b != 0)".into(),
        ));
    }

    let (big_b, big_c, big_d) = (jet.B.to_f64(), jet.C.to_f64(), jet.D.to_f64());
    let velocity = [
        (2.0 * b * p - c) * b,
        0.0,
        p * ((k * k * k - big_c) * c + (big_d - big_b) * b),
    ];

    let fpoly = implicit_surface(jet, Chart::P).to_f64();
    let (fv, fp) = (fpoly.deriv(1), fpoly.deriv(2));
    let (fvv, fvp, fpp) = (fv.deriv(1), fv.deriv(2), fp.deriv(2));

    // c(s) with u = s * velocity_u; (v, p) recovered by Newton on the two
    // constraints. velocity_u = b²(p_i²+1)/p_i never vanishes here.
    let trace = |s: f64| -> f64 {
        let u = s * velocity[0];
        let mut v = s * velocity[1];
        let mut pp = p + s * velocity[2];
        for _ in 0..40 {
            let x = [u, v, pp];
            let (r1, r2) = (fv.eval(&x), fp.eval(&x));
            let j = Matrix2::new(
                fvv.eval(&x),
                fvp.eval(&x),
                fvp.eval(&x),
                fpp.eval(&x),
            );
            let step = j
                .try_inverse()
                .map(|ji| ji * Vector2::new(r1, r2))
                .unwrap_or_else(Vector2::zeros);
            v -= step[0];
            pp -= step[1];
            if step.norm() < 1e-15 * (1.0 + p.abs()) {
                break;
            }
        }
        fpoly.eval(&[u, v, pp])
    };

    let h = 0.02 * (1.0 + p.abs());
    let (g1, g2s) = (trace(h), trace(2.0 * h));
    let (gm1, gm2) = (trace(-h), trace(-2.0 * h));
    let even = |a: f64, b: f64| (a + b) / 2.0;
    let odd = |a: f64, b: f64| (a - b) / 2.0;
    let (e1, e2) = (even(g1, gm1), even(g2s, gm2));
    let (o1, o2) = (odd(g1, gm1), odd(g2s, gm2));
    // Fourth-order stencils built from the even/odd parts.
    let gamma2_fd = (16.0 * e1 - e2) / (6.0 * h * h);
    let gamma3_fd = (32.0 * o1 - o2) / (4.0 * h * h * h);

    let report = compute_invariants(jet);
    let (chi, xi) = (report.chi.to_f64(), report.xi.to_f64());
    let gamma2_formula = -p * b * (c * c + 4.0 * b * b) * chi;
    let gamma3_formula = p * (2.0 * b * p - c).powi(3) * xi;
    Ok(GammaCurveReport {
        p_i: p,
        gamma2_fd,
        gamma3_fd,
        gamma2_formula,
        gamma3_formula,
        chi,
        xi,
        velocity,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupEquilibrium {
    /// 1, 2, or 3: which closed-form equilibrium curve the point lies on.
    pub curve: u8,
    pub point: [f64; 3],
    pub p_star: f64,
    /// Eigenvalues tangent to the sphere, ascending; the third Jacobian
    /// eigenvalue (the curve direction) is structurally zero.
    pub tangent_eigenvalues: [f64; 2],
    pub dropped_eigenvalue: f64,
    /// d(X_r)/dr at r = 0, i.e. S₄ at the point.
    pub normal_r: f64,
    pub residual: f64,
}

/// The weighted rescaling u = r²ū, v = r³v̄, p = r p̄ of the lifted field at
/// a fully degenerate singular point (a = b = 0, cB ≠ 0), time-rescaled by
/// W/r with W = 2ū² + 3v̄² + p̄², so the sphere r = 0 is invariant.
#[derive(Debug, Clone, Serialize)]
pub struct BlowupAnalysis {
    /// (X_u, X_v, X_p, X_r) in the variables (ū, v̄, p̄, r).
    pub components: [MPoly<Scalar, 4>; 4],
    /// Restriction of (X_u, X_v, X_p) to r = 0.
    pub sphere_restriction: [MPoly<Scalar, 3>; 3],
    /// The invariant cone Q₂ = c v̄ p̄ + (B/2) ū² of the restriction.
    pub cone: MPoly<Scalar, 3>,
    /// X_r / r; its value at r = 0 is the normal eigenvalue function.
    pub s4: MPoly<Scalar, 4>,
    pub equilibria: Vec<BlowupEquilibrium>,
}

fn drop_r(poly: &MPoly<Scalar, 4>) -> MPoly<Scalar, 3> {
    let mut out = MPoly::zero();
    for (exps, coeff) in poly.terms() {
        if exps[3] == 0 {
            out.add_term([exps[0], exps[1], exps[2]], coeff.clone());
        }
    }
    out
}

pub fn blowup_field(
    jet: &MongeJet5,
    tol: &ToleranceContext,
) -> Result<BlowupAnalysis, LieCartanError> {
    let scale = jet.scale();
    let s2 = scale * scale;
    if !jet.a.is_zero_scaled(s2, tol) || !jet.b.is_zero_scaled(s2, tol) {
        return Err(LieCartanError::NotOnStratum("a = b = 0 required".into()));
    }
    if jet.c.is_zero_scaled(s2, tol) || jet.B.is_zero_scaled(scale.powi(3), tol) {
        return Err(LieCartanError::NotOnStratum("cB != 0 required".into()));
    }
    // Project onto the stratum so the weighted divisions below are exact.
    let mut clean = jet.clone();
    clean.a = Scalar::zero();
    clean.b = Scalar::zero();

    let field = lie_cartan_field(&clean, Chart::P);
    // u = r² ū, v = r³ v̄, p = r p̄.
    let (ub, vb, pb, r) = (
        MPoly::<Scalar, 4>::var(0),
        MPoly::<Scalar, 4>::var(1),
        MPoly::<Scalar, 4>::var(2),
        MPoly::<Scalar, 4>::var(3),
    );
    let r2 = r.mul(&r);
    let subs = [ub.mul(&r2), vb.mul(&r2).mul(&r), pb.mul(&r)];
    let z: [MPoly<Scalar, 4>; 3] =
        std::array::from_fn(|i| field.components[i].compose(&subs, u16::MAX));

    let exact_div = |poly: &MPoly<Scalar, 4>, k: u16| -> MPoly<Scalar, 4> {
        let (q, rem) = poly.div_var(3, k);
        debug_assert!(rem.is_zero(), "weighted division must be exact");
        q
    };
    let zu = exact_div(&z[0], 3);
    let zv = exact_div(&z[1], 4);
    let zp = exact_div(&z[2], 2);

    // W = 2ū² + 3v̄² + p̄²; S₄ = (rūZ_u + v̄Z_v + r²p̄Z_p)/r⁴.
    let two = Scalar::from_int(2);
    let three = Scalar::from_int(3);
    let w = ub
        .mul(&ub)
        .scale(&two)
        .add(&vb.mul(&vb).scale(&three))
        .add(&pb.mul(&pb));
    let s4 = exact_div(
        &r.mul(&ub)
            .mul(&z[0])
            .add(&vb.mul(&z[1]))
            .add(&r2.mul(&pb).mul(&z[2])),
        4,
    );
    let xu = w.mul(&zu).sub(&ub.mul(&s4).scale(&two));
    let xv = w.mul(&zv).sub(&vb.mul(&s4).scale(&three));
    let xp = w.mul(&zp).sub(&pb.mul(&s4));
    let xr = r.mul(&s4);

    let sphere_restriction = [drop_r(&xu), drop_r(&xv), drop_r(&xp)];
    let mut cone = MPoly::<Scalar, 3>::zero();
    cone.add_term([0, 1, 1], clean.c.clone());
    cone.add_term([2, 0, 0], &clean.B / &two);

    let mut analysis = BlowupAnalysis {
        components: [xu, xv, xp, xr],
        sphere_restriction,
        cone,
        s4,
        equilibria: Vec::new(),
    };

    let (c, bb) = (clean.c.to_f64(), clean.B.to_f64());
    let mut p_stars: Vec<(u8, f64)> = vec![(1, 1.0), (1, -1.0)];
    // Curve 2 meets the sphere where (c²/B²) p⁴ + p² = 1.
    let q2 = (-1.0 + (1.0 + 4.0 * c * c / (bb * bb)).sqrt()) / (2.0 * c * c / (bb * bb));
    p_stars.push((2, q2.sqrt()));
    p_stars.push((2, -q2.sqrt()));
    // Curve 3: (64c²/81B²) q³ + (16c²/9B²) q² + q − 1 = 0 in q = p².
    let roots = crate::jets::real_roots_cubic(
        64.0 * c * c / (81.0 * bb * bb),
        16.0 * c * c / (9.0 * bb * bb),
        1.0,
        -1.0,
    );
    let q3 = roots
        .into_iter()
        .find(|&q| q > 0.0)
        .expect("the curve-3 sphere equation has one positive root");
    p_stars.push((3, q3.sqrt()));
    p_stars.push((3, -q3.sqrt()));

    for (curve, p) in p_stars {
        analysis.equilibria.push(analysis.curve_point(curve, p));
    }
    Ok(analysis)
}

impl BlowupAnalysis {
    /// Evaluate the equilibrium-curve point c_curve(p) and the spectrum of
    /// the sphere restriction there. Valid on or off the sphere: the curves
    /// consist of equilibria for every p.
    pub fn curve_point(&self, curve: u8, p: f64) -> BlowupEquilibrium {
        let c = self.cone.coeff([0, 1, 1]).to_f64();
        let b = self.cone.coeff([2, 0, 0]).to_f64() * 2.0;
        let point = match curve {
            1 => [0.0, 0.0, p],
            2 => [-c * p * p / b, 0.0, p],
            3 => [
                -4.0 * c * p * p / (3.0 * b),
                -8.0 * c * p * p * p / (9.0 * b),
                p,
            ],
            _ => panic!("curve index must be 1, 2, or 3"),
        };
        let x0: [MPoly<f64, 3>; 3] = std::array::from_fn(|i| self.sphere_restriction[i].to_f64());
        let jac = Matrix3::from_fn(|i, j| x0[i].deriv(j).eval(&point));
        let eig = sorted_complex_eigenvalues(&jac);
        let mut by_mag: Vec<(f64, f64)> = eig.to_vec();
        by_mag.sort_by(|x, y| x.0.hypot(x.1).total_cmp(&y.0.hypot(y.1)));
        let mut tangent = [by_mag[1].0, by_mag[2].0];
        tangent.sort_by(f64::total_cmp);
        let residual = x0
            .iter()
            .map(|p3| p3.eval(&point).abs())
            .fold(0.0, f64::max);
        let s4_0 = drop_r(&self.s4).eval_f64(&point);
        BlowupEquilibrium {
            curve,
            point,
            p_star: p,
            tangent_eigenvalues: tangent,
            dropped_eigenvalue: by_mag[0].0,
            normal_r: s4_0,
            residual,
        }
    }
}

pub fn blowup_equilibria(
    jet: &MongeJet5,
    tol: &ToleranceContext,
) -> Result<Vec<BlowupEquilibrium>, LieCartanError> {
    Ok(blowup_field(jet, tol)?.equilibria)
}
