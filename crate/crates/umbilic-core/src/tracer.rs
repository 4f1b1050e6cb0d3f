//! Principal-foliation tracing.
//!
//! The curvature-line equation L dv² + M du dv + N du² = 0 defines two
//! transverse direction fields away from umbilics. This module extracts and
//! labels the two branches, integrates them with an adaptive embedded
//! Runge-Kutta pair on the unoriented line field, seeds separatrices from
//! the saddles of the suspension, and measures the umbilic index by
//! double-angle winding.

use crate::classifier::classify;
use crate::classifier::UmbilicTag;
use crate::jets::MongeJet5;
use crate::liecartan::{
    lie_cartan_field, linearize_at_singularity, singular_points_on_fiber, Chart, LieCartanError,
    LocalType, MorseType,
};
use crate::scalar::{Scalar, ToleranceContext};
use crate::surfaces::{ParametricSurface, SurfaceError, UmbilicRecord};
use nalgebra::Vector2;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("umbilic point: the principal directions are undefined")]
    UmbilicPoint,
    #[error("degenerate jet: no separatrix structure")]
    Degenerate,
    #[error("umbilic is not isolated at radius {radius}")]
    NonIsolated { radius: f64 },
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

impl From<LieCartanError> for TraceError {
    fn from(_: LieCartanError) -> Self {
        TraceError::Degenerate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Branch {
    Min,
    Max,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Min => "MIN",
            Branch::Max => "MAX",
        })
    }
}

/// The two principal directions at a non-umbilic point, unit in the first
/// fundamental form, with the principal curvatures k1 <= k2.
#[derive(Debug, Clone)]
pub struct PrincipalDirectionPair {
    pub min_dir: Vector2<f64>,
    pub max_dir: Vector2<f64>,
    pub k1: f64,
    pub k2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StopReason {
    DomainExit,
    UmbilicHit,
    StepLimit,
    Closed,
}

/// Integrated polyline of one curvature line.
#[derive(Debug, Clone)]
pub struct CurveTrace {
    pub branch: Branch,
    /// Chart vertices; periodic coordinates are unwrapped.
    pub points: Vec<[f64; 2]>,
    /// Cumulative geometric arclength at each vertex.
    pub arclength: Vec<f64>,
    pub stop: StopReason,
    /// Largest |Eq.| residual of a secant direction at a step midpoint,
    /// scale-normalized.
    pub max_residual: f64,
}

/// Step-size and termination policy for one trace.
#[derive(Debug, Clone)]
pub struct StepControl {
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Local truncation error target per step.
    pub rk_tol: f64,
    /// Ambient distance at which a return to the seed counts as closed.
    pub close_tol: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            h_min: 1e-6,
            h_max: 1e-3,
            max_steps: 100_000,
            rk_tol: 1e-10,
            close_tol: 1e-5,
        }
    }
}

/// Default seeding distance from the umbilic, in chart units.
pub const DEFAULT_CENSUS_RADIUS: f64 = 1e-2;

struct FormData {
    e: f64,
    f: f64,
    g: f64,
    l: f64,
    m: f64,
    n: f64,
    /// Second fundamental form entries.
    ii: (f64, f64, f64),
    /// Magnitude scale of (L, M, N).
    fs: f64,
}

fn forms_at(chart: &dyn ParametricSurface, u: f64, v: f64) -> Result<FormData, SurfaceError> {
    let jet = chart.taylor(u, v, 2)?;
    let (e, f, g) = jet.first_form();
    let (e2, f2, g2) = jet.second_form();
    let l = f * g2 - g * f2;
    let m = e * g2 - g * e2;
    let n = e * f2 - f * e2;
    let fs = (e + 2.0 * f.abs() + g) * (e2.abs() + 2.0 * f2.abs() + g2.abs()) + f64::MIN_POSITIVE;
    Ok(FormData {
        e,
        f,
        g,
        l,
        m,
        n,
        ii: (e2, f2, g2),
        fs,
    })
}

impl FormData {
    fn discriminant(&self) -> f64 {
        self.m * self.m - 4.0 * self.l * self.n
    }

    fn is_umbilic(&self, tol: &ToleranceContext) -> bool {
        self.discriminant() <= tol.eps_zero * self.fs * self.fs
    }

    fn first(&self, d: &Vector2<f64>) -> f64 {
        self.e * d[0] * d[0] + 2.0 * self.f * d[0] * d[1] + self.g * d[1] * d[1]
    }

    fn second(&self, d: &Vector2<f64>) -> f64 {
        let (e2, f2, g2) = self.ii;
        e2 * d[0] * d[0] + 2.0 * f2 * d[0] * d[1] + g2 * d[1] * d[1]
    }

    /// Residual of L dv² + M du dv + N du² on a Euclidean-unit direction,
    /// normalized by the form scale.
    fn residual(&self, d: &Vector2<f64>) -> f64 {
        (self.l * d[1] * d[1] + self.m * d[0] * d[1] + self.n * d[0] * d[0]).abs() / self.fs
    }

    /// Both root directions of the quadratic, as Euclidean-unit vectors.
    ///
    /// `prefer_slope`: solve for dv/du when true (|du| >= |dv| expected),
    /// for du/dv otherwise, which avoids the infinite-slope chart edge.
    fn root_directions(&self, prefer_slope: bool) -> [Vector2<f64>; 2] {
        let disc = self.discriminant().max(0.0);
        let sq = disc.sqrt();
        let q = -(self.m + sq.copysign(if self.m == 0.0 { 1.0 } else { self.m })) / 2.0;
        let dirs = if self.l == 0.0 && self.n == 0.0 {
            // M du dv = 0: the coordinate axes
            [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)]
        } else if prefer_slope && self.l != 0.0 {
            let t1 = q / self.l;
            let t2 = if q != 0.0 { self.n / q } else { 0.0 };
            [Vector2::new(1.0, t1), Vector2::new(1.0, t2)]
        } else if !prefer_slope && self.n != 0.0 {
            let s1 = q / self.n;
            let s2 = if q != 0.0 { self.l / q } else { 0.0 };
            [Vector2::new(s1, 1.0), Vector2::new(s2, 1.0)]
        } else if self.l != 0.0 {
            let t1 = q / self.l;
            let t2 = if q != 0.0 { self.n / q } else { 0.0 };
            [Vector2::new(1.0, t1), Vector2::new(1.0, t2)]
        } else {
            let s1 = q / self.n;
            let s2 = if q != 0.0 { self.l / q } else { 0.0 };
            [Vector2::new(s1, 1.0), Vector2::new(s2, 1.0)]
        };
        [dirs[0].normalize(), dirs[1].normalize()]
    }
}

/// Solves the curvature-line equation at (u, v) and labels the two roots.
pub fn principal_directions_at(
    chart: &dyn ParametricSurface,
    u: f64,
    v: f64,
    tol: &ToleranceContext,
) -> Result<PrincipalDirectionPair, TraceError> {
    let fd = forms_at(chart, u, v)?;
    if fd.is_umbilic(tol) {
        return Err(TraceError::UmbilicPoint);
    }
    let prefer_slope = fd.l.abs() >= fd.n.abs();
    let roots = fd.root_directions(prefer_slope);
    let unit = |d: &Vector2<f64>| d / fd.first(d).sqrt();
    let d0 = unit(&roots[0]);
    let d1 = unit(&roots[1]);
    let (kn0, kn1) = (fd.second(&d0), fd.second(&d1));
    if kn0 <= kn1 {
        Ok(PrincipalDirectionPair {
            min_dir: d0,
            max_dir: d1,
            k1: kn0,
            k2: kn1,
        })
    } else {
        Ok(PrincipalDirectionPair {
            min_dir: d1,
            max_dir: d0,
            k1: kn1,
            k2: kn0,
        })
    }
}

/// Labels a root direction MIN or MAX by its normal curvature II/I.
pub fn branch_label(
    chart: &dyn ParametricSurface,
    u: f64,
    v: f64,
    direction: &Vector2<f64>,
    tol: &ToleranceContext,
) -> Result<Branch, TraceError> {
    let fd = forms_at(chart, u, v)?;
    if fd.is_umbilic(tol) {
        return Err(TraceError::UmbilicPoint);
    }
    let kn = fd.second(direction) / fd.first(direction);
    let w = fd.e * fd.g - fd.f * fd.f;
    let (e2, f2, g2) = fd.ii;
    let h = (fd.e * g2 - 2.0 * fd.f * f2 + fd.g * e2) / (2.0 * w);
    let k = (e2 * g2 - f2 * f2) / w;
    let root = (h * h - k).max(0.0).sqrt();
    let (k1, k2) = (h - root, h + root);
    Ok(if (kn - k1).abs() <= (kn - k2).abs() {
        Branch::Min
    } else {
        Branch::Max
    })
}

/// Oriented field evaluation: the root direction best aligned with
/// `reference`, sign-matched to it, unit in the first fundamental form.
fn field_direction(
    chart: &dyn ParametricSurface,
    u: f64,
    v: f64,
    reference: &Vector2<f64>,
    tol: &ToleranceContext,
) -> Result<Vector2<f64>, TraceError> {
    let fd = forms_at(chart, u, v)?;
    if fd.is_umbilic(tol) {
        return Err(TraceError::UmbilicPoint);
    }
    // swap the projective chart of the slope when the reference steepens
    let prefer_slope = reference[0].abs() >= reference[1].abs();
    let roots = fd.root_directions(prefer_slope);
    let rn = reference.normalize();
    let pick = if roots[0].dot(&rn).abs() >= roots[1].dot(&rn).abs() {
        roots[0]
    } else {
        roots[1]
    };
    let oriented = if pick.dot(&rn) >= 0.0 { pick } else { -pick };
    Ok(oriented / fd.first(&oriented).sqrt())
}

/// Dormand-Prince 5(4) tableau (the field is autonomous, so no c-column).
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

enum StepOutcome {
    Advanced(Vector2<f64>, f64),
    Stiff,
    Left,
}

/// One adaptive step of the oriented line field from `x` along `dir_prev`.
fn rk_step(
    chart: &dyn ParametricSurface,
    x: &Vector2<f64>,
    dir_prev: &Vector2<f64>,
    h: &mut f64,
    step: &StepControl,
    tol: &ToleranceContext,
) -> StepOutcome {
    loop {
        let mut k = [Vector2::zeros(); 7];
        k[0] = match field_direction(chart, x[0], x[1], dir_prev, tol) {
            Ok(d) => d,
            Err(TraceError::UmbilicPoint) => return StepOutcome::Stiff,
            Err(_) => return StepOutcome::Left,
        };
        let mut failed = None;
        for i in 0..6 {
            let mut xi = *x;
            for (j, kj) in k.iter().enumerate().take(i + 1) {
                xi += *kj * (*h * DP_A[i][j]);
            }
            match field_direction(chart, xi[0], xi[1], &k[0], tol) {
                Ok(d) => k[i + 1] = d,
                Err(TraceError::UmbilicPoint) => {
                    failed = Some(StepOutcome::Stiff);
                    break;
                }
                Err(_) => {
                    failed = Some(StepOutcome::Left);
                    break;
                }
            }
        }
        if let Some(out) = failed {
            if *h > step.h_min {
                *h = (*h / 4.0).max(step.h_min);
                continue;
            }
            return out;
        }
        let mut x5 = *x;
        let mut x4 = *x;
        for i in 0..7 {
            x5 += k[i] * (*h * DP_B5[i]);
            x4 += k[i] * (*h * DP_B4[i]);
        }
        let err = (x5 - x4).norm();
        if err <= step.rk_tol || *h <= step.h_min * 1.000_001 {
            let ds = (x5 - x).norm();
            let grow = if err > 0.0 {
                0.9 * (step.rk_tol / err).powf(0.2)
            } else {
                5.0
            };
            *h = (*h * grow.clamp(0.2, 5.0)).clamp(step.h_min, step.h_max);
            return StepOutcome::Advanced(x5, ds);
        }
        *h = (*h * (0.9 * (step.rk_tol / err).powf(0.2)).clamp(0.2, 0.9)).max(step.h_min);
    }
}

fn min_image(mut d: f64, period: Option<f64>) -> f64 {
    if let Some(p) = period {
        d = d.rem_euclid(p);
        if d > p / 2.0 {
            d -= p;
        }
    }
    d
}

fn wrap_to(chart: &dyn ParametricSurface, x: &Vector2<f64>, x0: &Vector2<f64>) -> Vector2<f64> {
    let per = chart.periods();
    Vector2::new(
        min_image(x[0] - x0[0], per[0]),
        min_image(x[1] - x0[1], per[1]),
    )
}

fn ambient(chart: &dyn ParametricSurface, x: &Vector2<f64>) -> Option<nalgebra::Vector3<f64>> {
    chart.taylor(x[0], x[1], 0).ok().map(|j| j.position())
}

/// Integrates the oriented line field from `seed` along `d0`.
///
/// `max_arclength` bounds the trace (separatrix shadowing); closure against
/// the seed is detected on a section normal to the initial direction once
/// the trace has left the seed's neighborhood.
pub fn trace_directed(
    chart: &dyn ParametricSurface,
    seed: &Vector2<f64>,
    d0: &Vector2<f64>,
    branch: Branch,
    step: &StepControl,
    tol: &ToleranceContext,
    max_arclength: Option<f64>,
) -> CurveTrace {
    let mut points = vec![[seed[0], seed[1]]];
    let mut arcs = vec![0.0];
    let mut max_residual = 0.0f64;
    let mut x = *seed;
    let mut dir = d0.normalize();
    let mut h = step.h_max;
    let mut arc = 0.0;
    let section_dir = dir;
    let window = 10.0 * step.h_max;
    let mut armed = false;
    let mut s_prev = 0.0;
    let seed_pos = ambient(chart, seed);
    let mut stop = StopReason::StepLimit;
    for _ in 0..step.max_steps {
        match rk_step(chart, &x, &dir, &mut h, step, tol) {
            StepOutcome::Stiff => {
                stop = StopReason::UmbilicHit;
                break;
            }
            StepOutcome::Left => {
                stop = StopReason::DomainExit;
                break;
            }
            StepOutcome::Advanced(xn, ds) => {
                if !chart.in_domain(xn[0], xn[1]) {
                    stop = StopReason::DomainExit;
                    break;
                }
                let secant = xn - x;
                let mid = (x + xn) / 2.0;
                if secant.norm() > 0.0 {
                    if let Ok(fd) = forms_at(chart, mid[0], mid[1]) {
                        max_residual = max_residual.max(fd.residual(&secant.normalize()));
                    }
                }
                dir = if secant.norm() > 0.0 { secant.normalize() } else { dir };
                x = xn;
                arc += ds;
                points.push([x[0], x[1]]);
                arcs.push(arc);
                if let Ok(fd) = forms_at(chart, x[0], x[1]) {
                    if fd.is_umbilic(tol) {
                        stop = StopReason::UmbilicHit;
                        break;
                    }
                }
                if let Some(cap) = max_arclength {
                    if arc >= cap {
                        stop = StopReason::StepLimit;
                        break;
                    }
                }
                // Poincaré section through the seed, normal to d0
                let rel = wrap_to(chart, &x, seed);
                let s = rel.dot(&section_dir);
                let near = rel.norm() < window;
                if !armed {
                    if rel.norm() > 2.0 * window {
                        armed = true;
                    }
                } else if near && s_prev < 0.0 && s >= 0.0 {
                    let prev = Vector2::from(points[points.len() - 2]);
                    let rel_prev = wrap_to(chart, &prev, seed);
                    let sp = rel_prev.dot(&section_dir);
                    let t = if (s - sp).abs() > 0.0 { -sp / (s - sp) } else { 0.0 };
                    let cross = prev + (x - prev) * t;
                    let dist = match (&seed_pos, ambient(chart, &cross)) {
                        (Some(p0), Some(p1)) => (p1 - p0).norm(),
                        _ => wrap_to(chart, &cross, seed).norm(),
                    };
                    if dist <= step.close_tol {
                        points.push([cross[0], cross[1]]);
                        arcs.push(arc + (cross - x).norm());
                        stop = StopReason::Closed;
                        break;
                    }
                }
                s_prev = s;
            }
        }
    }
    CurveTrace {
        branch,
        points,
        arclength: arcs,
        stop,
        max_residual,
    }
}

/// Traces the curvature line of `branch` through `seed`.
pub fn trace_curvature_line(
    chart: &dyn ParametricSurface,
    seed: (f64, f64),
    branch: Branch,
    step: &StepControl,
    tol: &ToleranceContext,
) -> Result<CurveTrace, TraceError> {
    let pair = principal_directions_at(chart, seed.0, seed.1, tol)?;
    let d0 = match branch {
        Branch::Min => pair.min_dir,
        Branch::Max => pair.max_dir,
    };
    Ok(trace_directed(
        chart,
        &Vector2::new(seed.0, seed.1),
        &d0,
        branch,
        step,
        tol,
        None,
    ))
}

/// A projected separatrix direction of the suspension at an umbilic:
/// the fiber slope p (f64::INFINITY for the vertical direction) and one
/// unit ray in the adapted tangent frame.
#[derive(Debug, Clone)]
pub struct SeparatrixSeed {
    pub p: f64,
    pub ray: Vector2<f64>,
}

fn push_rays(
    seeds: &mut Vec<SeparatrixSeed>,
    p: f64,
    base: Vector2<f64>,
    analysis: &crate::liecartan::SingularPointAnalysis,
) {
    let both = |seeds: &mut Vec<SeparatrixSeed>| {
        seeds.push(SeparatrixSeed { p, ray: base });
        seeds.push(SeparatrixSeed { p, ray: -base });
    };
    if analysis.morse_type == MorseType::ConicMorse {
        // conic point: the two nonzero eigenvalues have opposite signs and
        // each nappe of the cone carries one separatrix along +-base
        let [l1, l2] = analysis.surface_eigenvalues;
        if l1 * l2 < 0.0 {
            both(seeds);
        }
        return;
    }
    match analysis.local_type {
        LocalType::HyperbolicSaddle | LocalType::SaddleNodeOrder3 => both(seeds),
        LocalType::HyperbolicNode => {}
        LocalType::NonHyperbolic => {
            if let Some(cm) = &analysis.center {
                if cm.order == 2 {
                    let proj = Vector2::new(cm.center_direction[0], cm.center_direction[1]);
                    if proj.norm() > 1e-9 {
                        // the lone separatrix lies on the hyperbolic side of
                        // the saddle-node: center flow x' = g2 x² leaves the
                        // point against the transverse stability
                        let side = if cm.transverse_eigenvalue < 0.0 {
                            cm.g2.signum()
                        } else {
                            -cm.g2.signum()
                        };
                        seeds.push(SeparatrixSeed {
                            p,
                            ray: proj.normalize() * side,
                        });
                    }
                }
            }
        }
    }
}

/// Separatrix seed directions of a classified jet, in the adapted frame.
///
/// Each singular point of the suspension contributes the projections of its
/// saddle separatrices: both rays of +-(1, p_i) for saddles, order-3
/// saddle-nodes and conic points, one ray for order-2 saddle-nodes, none
/// for nodes. A scaled-zero b adds the vertical direction from the q-chart.
pub fn separatrix_seeds(
    jet: &MongeJet5,
    tol: &ToleranceContext,
) -> Result<Vec<SeparatrixSeed>, TraceError> {
    let class = classify(jet, tol);
    if class.tag == UmbilicTag::Degenerate {
        return Err(TraceError::Degenerate);
    }
    let mut seeds = Vec::new();
    let field = lie_cartan_field(jet, Chart::P);
    for (p_scalar, _mult) in singular_points_on_fiber(jet, tol)? {
        let analysis = linearize_at_singularity(&field, &p_scalar, tol);
        let p = p_scalar.to_f64();
        let base = Vector2::new(1.0, p).normalize();
        push_rays(&mut seeds, p, base, &analysis);
    }
    let scale = jet.scale();
    if jet.b.is_zero_scaled(scale * scale, tol) {
        // vertical fiber root: analyze q = 0 in the swapped chart
        let field_q = lie_cartan_field(jet, Chart::Q);
        let analysis = linearize_at_singularity(&field_q, &Scalar::zero(), tol);
        push_rays(
            &mut seeds,
            f64::INFINITY,
            Vector2::new(0.0, 1.0),
            &analysis,
        );
    }
    // drop duplicate rays (multiple singular points can share a direction)
    let mut unique: Vec<SeparatrixSeed> = Vec::new();
    for s in seeds {
        if !unique
            .iter()
            .any(|t| (t.ray - s.ray).norm() < 1e-9 && (t.p == s.p || (t.p - s.p).abs() < 1e-12))
        {
            unique.push(s);
        }
    }
    Ok(unique)
}

/// Separatrix census and umbilic index at one umbilic.
#[derive(Debug)]
pub struct SeparatrixCensus {
    pub n_min: usize,
    pub n_max: usize,
    pub index: f64,
    /// Outward traces of the confirmed separatrices.
    pub separatrices: Vec<CurveTrace>,
}

/// Winding of the minimal direction field around a circle, in half-integers.
pub fn umbilic_index(
    chart: &dyn ParametricSurface,
    center: (f64, f64),
    radius: f64,
    samples: usize,
    tol: &ToleranceContext,
) -> Result<f64, TraceError> {
    assert!(samples >= 16);
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for i in 0..=samples {
        let t = 2.0 * std::f64::consts::PI * i as f64 / samples as f64;
        let (u, v) = (center.0 + radius * t.cos(), center.1 + radius * t.sin());
        let pair = principal_directions_at(chart, u, v, tol)
            .map_err(|_| TraceError::NonIsolated { radius })?;
        let d = pair.min_dir;
        let ang2 = 2.0 * d[1].atan2(d[0]);
        if let Some(p) = prev {
            let mut dd = ang2 - p;
            while dd > std::f64::consts::PI {
                dd -= 2.0 * std::f64::consts::PI;
            }
            while dd < -std::f64::consts::PI {
                dd += 2.0 * std::f64::consts::PI;
            }
            total += dd;
        }
        prev = Some(ang2);
    }
    Ok(total / (4.0 * std::f64::consts::PI))
}

/// Measures the separatrix counts of an umbilic.
///
/// Each seed ray must cross two probe circles (radii `radius` and
/// `radius/10`) at angles where one branch direction is radially aligned
/// within 0.1 rad, on the same branch. The crossing is confirmed by
/// tracing outward from the inner crossing (inward shadowing along a
/// separatrix is exponentially unstable); the trace has to exit through
/// the outer circle within `radius/5` of the outer crossing.
pub fn separatrix_census(
    chart: &dyn ParametricSurface,
    umbilic: &UmbilicRecord,
    radius: f64,
    step: &StepControl,
    tol: &ToleranceContext,
) -> Result<SeparatrixCensus, TraceError> {
    let center = Vector2::new(umbilic.u, umbilic.v);
    let index = umbilic_index(chart, (umbilic.u, umbilic.v), radius, 4096, tol)?;
    let seeds = separatrix_seeds(&umbilic.adapted.jet, tol)?;
    let mut n_min = 0;
    let mut n_max = 0;
    let mut separatrices = Vec::new();
    const ALIGN_COS: f64 = 0.995_004_165_278_025_8; // cos(0.1)
    // separatrices of degenerate umbilics leave the point along a seed ray
    // but bend on the scale of the radius, so the crossing of a probe
    // circle is found by root-finding the radial misalignment in a window
    const WINDOW: f64 = 0.15;
    // (misalignment, alignment, branch, outward direction, circle point)
    type ProbeHit = (f64, f64, Branch, Vector2<f64>, Vector2<f64>);
    // signed misalignment of the better-aligned branch at circle angle phi,
    // with the direction oriented outward; None off-domain or at umbilics
    let probe = |phi: f64, r: f64| -> Option<ProbeHit> {
        let radial = Vector2::new(phi.cos(), phi.sin());
        let x = center + radial * r;
        if !chart.in_domain(x[0], x[1]) {
            return None;
        }
        let pair = principal_directions_at(chart, x[0], x[1], tol).ok()?;
        let mut best: Option<(f64, Branch, Vector2<f64>)> = None;
        for (branch, d) in [(Branch::Min, pair.min_dir), (Branch::Max, pair.max_dir)] {
            let dn = d.normalize();
            let c = dn.dot(&radial).abs();
            if best.as_ref().is_none_or(|(bc, _, _)| c > *bc) {
                best = Some((c, branch, dn));
            }
        }
        let (c, branch, dn) = best?;
        let outward = if dn.dot(&radial) >= 0.0 { dn } else { -dn };
        let cross = radial[0] * outward[1] - radial[1] * outward[0];
        Some((cross, c, branch, outward, x))
    };
    // the angular width of the aligned zone around a curved separatrix
    // shrinks linearly with the probe radius, so sample accordingly
    let find_crossing = |phi0: f64, r: f64| -> Option<ProbeHit> {
        let n = ((2.0 * WINDOW / (0.05 * r)).ceil() as usize).clamp(360, 20_000);
        let sample: Vec<(f64, Option<ProbeHit>)> = (0..=n)
            .map(|i| {
                let phi = phi0 - WINDOW + 2.0 * WINDOW * i as f64 / n as f64;
                (phi, probe(phi, r))
            })
            .collect();
        // bracket a sign change of the misalignment on a consistent branch
        let mut crossing: Option<ProbeHit> = None;
        for w in sample.windows(2) {
            let (Some(a), Some(b)) = (&w[0].1, &w[1].1) else {
                continue;
            };
            if a.1 < 0.7 || b.1 < 0.7 || a.2 != b.2 || a.0.signum() == b.0.signum() {
                continue;
            }
            let (mut lo, mut hi, mut glo) = (w[0].0, w[1].0, a.0);
            for _ in 0..60 {
                let mid = (lo + hi) / 2.0;
                let Some(pm) = probe(mid, r) else { break };
                if pm.0.signum() == glo.signum() {
                    lo = mid;
                    glo = pm.0;
                } else {
                    hi = mid;
                }
            }
            if let Some(p) = probe((lo + hi) / 2.0, r) {
                if p.1 >= ALIGN_COS && crossing.as_ref().is_none_or(|c| p.1 > c.1) {
                    crossing = Some(p);
                }
            }
        }
        crossing
    };
    for seed in &seeds {
        let ray_chart = (umbilic.adapted.to_chart * seed.ray).normalize();
        let phi0 = ray_chart[1].atan2(ray_chart[0]);
        // a separatrix tends to the umbilic: it must cross both circles,
        // and the outward trace from the inner crossing (the numerically
        // stable direction; inward shadowing diverges exponentially at
        // degenerate points) must exit through the outer crossing
        let Some((_, _, branch, outward, x_outer)) = find_crossing(phi0, radius) else {
            continue;
        };
        let Some((_, _, branch_in, out_in, x_inner)) = find_crossing(phi0, radius / 10.0) else {
            continue;
        };
        if branch_in != branch {
            continue;
        }
        let rising = trace_directed(chart, &x_inner, &out_in, branch, step, tol, Some(3.0 * radius));
        let exit = rising
            .points
            .iter()
            .find(|pt| wrap_to(chart, &Vector2::from(**pt), &center).norm() >= radius);
        let confirmed = exit.is_some_and(|pt| {
            wrap_to(chart, &Vector2::from(*pt), &x_outer).norm() <= radius / 5.0
        });
        if confirmed {
            match branch {
                Branch::Min => n_min += 1,
                Branch::Max => n_max += 1,
            }
            separatrices.push(trace_directed(chart, &x_outer, &outward, branch, step, tol, None));
        }
    }
    Ok(SeparatrixCensus {
        n_min,
        n_max,
        index,
        separatrices,
    })
}

/// CSV dump of traces: columns u, v, branch, arclength.
pub fn traces_csv(traces: &[CurveTrace]) -> String {
    let mut out = String::from("u,v,branch,arclength\n");
    for t in traces {
        for (pt, s) in t.points.iter().zip(&t.arclength) {
            out.push_str(&format!("{},{},{},{}\n", pt[0], pt[1], t.branch, s));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::reference_jets;
    use crate::jets::RawMongeJet5;
    use crate::surfaces::{find_umbilics, MongeGraph, Surface};

    fn tol() -> ToleranceContext {
        ToleranceContext::default()
    }

    fn graph_quadric() -> MongeGraph {
        // h = (u² + 2v²)/2: principal directions along the axes
        let mut h = crate::poly::MPoly::zero();
        h.add_term([2, 0], 0.5);
        h.add_term([0, 2], 1.0);
        MongeGraph::new(h, 1.0)
    }

    #[test]
    fn quadric_graph_directions_and_labels() {
        let g = graph_quadric();
        let pair = principal_directions_at(&g, 0.1, 0.0, &tol()).unwrap();
        assert!(pair.min_dir[1].abs() < 1e-12, "min along u");
        assert!(pair.max_dir[0].abs() < 1e-12, "max along v");
        assert!((pair.k1 - 1.0).abs() < 0.05);
        assert!((pair.k2 - 2.0).abs() < 0.05);
        let u_dir = Vector2::new(1.0, 0.0);
        let v_dir = Vector2::new(0.0, 1.0);
        assert_eq!(branch_label(&g, 0.1, 0.0, &u_dir, &tol()).unwrap(), Branch::Min);
        assert_eq!(branch_label(&g, 0.1, 0.0, &v_dir, &tol()).unwrap(), Branch::Max);
    }

    #[test]
    fn sphere_points_are_umbilic_everywhere() {
        let s = Surface::ellipsoid([2.0, 2.0, 2.0]);
        let err = principal_directions_at(s.charts[0].as_ref(), 0.3, -0.2, &tol());
        assert!(matches!(err, Err(TraceError::UmbilicPoint)));
        let err = trace_curvature_line(s.charts[0].as_ref(), (0.3, -0.2), Branch::Min, &StepControl::default(), &tol());
        assert!(matches!(err, Err(TraceError::UmbilicPoint)));
    }

    #[test]
    fn roots_satisfy_the_quadratic_and_are_i_orthogonal() {
        // random graph surface with mixed terms
        let mut h = crate::poly::MPoly::zero();
        h.add_term([2, 0], 0.6);
        h.add_term([1, 1], 0.3);
        h.add_term([0, 2], 1.1);
        h.add_term([3, 0], 0.21);
        h.add_term([2, 1], -0.35);
        h.add_term([0, 3], 0.4);
        let g = MongeGraph::new(h, 1.0);
        for (u, v) in [(0.1, 0.2), (-0.3, 0.25), (0.02, -0.4)] {
            let fd = forms_at(&g, u, v).unwrap();
            let pair = principal_directions_at(&g, u, v, &tol()).unwrap();
            for d in [&pair.min_dir, &pair.max_dir] {
                assert!(fd.residual(&d.normalize()) < 1e-10);
            }
            let (d1, d2) = (&pair.min_dir, &pair.max_dir);
            let ip = fd.e * d1[0] * d2[0]
                + fd.f * (d1[0] * d2[1] + d1[1] * d2[0])
                + fd.g * d1[1] * d2[1];
            assert!(ip.abs() < 1e-8, "I-orthogonality: {ip}");
        }
    }

    #[test]
    fn axis_trace_stays_on_the_axis() {
        let g = graph_quadric();
        let trace = trace_curvature_line(&g, (0.1, 0.0), Branch::Min, &StepControl::default(), &tol()).unwrap();
        assert!(trace.points.iter().all(|p| p[1].abs() < 1e-8));
        assert_eq!(trace.stop, StopReason::DomainExit);
        assert!(trace.max_residual < tol().eps_residual);
        // arclength is monotone
        assert!(trace.arclength.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn ellipsoid_line_closes_on_the_geographic_chart() {
        let s = Surface::ellipsoid_geographic([3.0, 2.0, 1.0]);
        let chart = s.charts[0].as_ref();
        // the x = 0 section through (0, 2, 0) is a closed curvature line
        let seed = (std::f64::consts::FRAC_PI_2, 0.0);
        let step = StepControl::default();
        let mut closed = 0;
        for branch in [Branch::Min, Branch::Max] {
            let t = trace_curvature_line(chart, seed, branch, &step, &tol()).unwrap();
            if t.stop == StopReason::Closed {
                closed += 1;
                let first = Vector2::from(t.points[0]);
                let last = Vector2::from(*t.points.last().unwrap());
                let p0 = ambient(chart, &first).unwrap();
                let p1 = ambient(chart, &last).unwrap();
                assert!((p0 - p1).norm() <= step.close_tol);
            }
        }
        assert!(closed >= 1, "no branch closed");
    }

    #[test]
    fn seed_counts_match_the_model_portraits() {
        let jets = reference_jets();
        let by_tag = |t: UmbilicTag| {
            jets.iter()
                .find(|(_, tag)| *tag == t)
                .map(|(j, _)| j.clone())
                .unwrap()
        };
        let d1 = separatrix_seeds(&by_tag(UmbilicTag::D1), &tol()).unwrap();
        assert_eq!(d1.len(), 2);
        let d3 = separatrix_seeds(&by_tag(UmbilicTag::D3), &tol()).unwrap();
        assert_eq!(d3.len(), 6);
        let slopes: std::collections::BTreeSet<i64> =
            d3.iter().map(|s| (s.p * 1e6).round() as i64).collect();
        assert_eq!(slopes.len(), 3);
        let d123 = separatrix_seeds(&by_tag(UmbilicTag::D1_23), &tol()).unwrap();
        assert_eq!(d123.len(), 5);
        let zero = MongeJet5::default();
        assert!(matches!(
            separatrix_seeds(&zero, &tol()),
            Err(TraceError::Degenerate)
        ));
    }

    fn census_for(tag: UmbilicTag) -> SeparatrixCensus {
        let jets = reference_jets();
        let jet = jets
            .iter()
            .find(|(_, t)| *t == tag)
            .map(|(j, _)| j.clone())
            .unwrap();
        let raw = RawMongeJet5::from(jet);
        let surf = Surface::from_jet(&raw, 0.3);
        let scan = find_umbilics(&surf, 24, &tol());
        let rec = scan
            .umbilics
            .iter()
            .find(|r| r.u.abs() < 1e-8 && r.v.abs() < 1e-8)
            .expect("origin umbilic");
        separatrix_census(
            surf.charts[0].as_ref(),
            rec,
            DEFAULT_CENSUS_RADIUS,
            &StepControl::default(),
            &tol(),
        )
        .unwrap()
    }

    #[test]
    fn census_matches_the_classification_counts() {
        let c1 = census_for(UmbilicTag::D1);
        assert_eq!((c1.n_min, c1.n_max), (1, 1));
        assert!((c1.index - 0.5).abs() < 1e-3);
        let c2 = census_for(UmbilicTag::D2);
        assert_eq!((c2.n_min, c2.n_max), (2, 2));
        assert!((c2.index - 0.5).abs() < 1e-3);
        let c3 = census_for(UmbilicTag::D3);
        assert_eq!((c3.n_min, c3.n_max), (3, 3));
        assert!((c3.index + 0.5).abs() < 1e-3);
        let c123 = census_for(UmbilicTag::D1_23);
        let mut counts = [c123.n_min, c123.n_max];
        counts.sort_unstable();
        assert_eq!(counts, [2, 3]);
    }

    #[test]
    fn index_is_stable_under_radius_halving() {
        let jets = reference_jets();
        let (jet, _) = jets.iter().find(|(_, t)| *t == UmbilicTag::D2).unwrap();
        let raw = RawMongeJet5::from(jet.clone());
        let surf = Surface::from_jet(&raw, 0.3);
        let chart = surf.charts[0].as_ref();
        let i1 = umbilic_index(chart, (0.0, 0.0), 1e-2, 2048, &tol()).unwrap();
        let i2 = umbilic_index(chart, (0.0, 0.0), 5e-3, 2048, &tol()).unwrap();
        assert!((i1 - i2).abs() < 1e-3);
    }

    #[test]
    fn torus_trace_hits_the_step_limit_or_closes() {
        let s = Surface::torus(2.0, 0.5);
        let chart = s.charts[0].as_ref();
        let step = StepControl {
            max_steps: 3000,
            ..StepControl::default()
        };
        let t = trace_curvature_line(chart, (0.4, 0.9), Branch::Min, &step, &tol()).unwrap();
        assert!(matches!(t.stop, StopReason::StepLimit | StopReason::Closed));
        assert!(t.max_residual < tol().eps_residual);
    }

    #[test]
    fn csv_dump_has_the_expected_shape() {
        let g = graph_quadric();
        let t = trace_curvature_line(&g, (0.1, 0.0), Branch::Min, &StepControl::default(), &tol()).unwrap();
        let csv = traces_csv(std::slice::from_ref(&t));
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("u,v,branch,arclength"));
        let first = lines.next().unwrap();
        assert!(first.contains(",MIN,"));
    }
}
