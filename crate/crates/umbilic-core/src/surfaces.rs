//! Parametric surfaces with order-5 Taylor evaluation, umbilic detection,
//! and extraction of the adapted Monge jet at a detected umbilic.
//!
//! A surface is presented as one or more rectangular charts, each able to
//! expand its immersion as truncated power series in local chart offsets.
//! Umbilics are located from the sign structure of the two equations
//! `(E g~ - G e~, E f~ - F e~)` built with the unnormalized normal (so both
//! are polynomial in the series data and free of square roots), refined by
//! damped Newton, then re-graphed over the tangent plane to produce a
//! [`MongeJet5`].

use crate::classifier::{classify, UmbilicClass};
use crate::jets::{normalize_monge_jet, raw_height_poly, MongeJet5, RawMongeJet5};
use crate::poly::MPoly;
use crate::scalar::{Scalar, ToleranceContext};
use crate::taylor;
use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

type Series = MPoly<f64, 2>;

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("point ({u}, {v}) is outside the chart domain")]
    OutOfDomain { u: f64, v: f64 },
    #[error("not an umbilic: k11 = {k11}, k22 = {k22}, k12 = {k12}")]
    NotUmbilic { k11: f64, k22: f64, k12: f64 },
    #[error("invalid surface document: {0}")]
    BadDocument(String),
}

const FACTORIAL: [f64; 6] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0];

/// Taylor expansion of an immersion at a chart point: each ambient component
/// as a polynomial in the chart offsets, truncated at `order`.
#[derive(Debug, Clone)]
pub struct SurfaceJet {
    pub order: u16,
    pub components: [Series; 3],
}

impl SurfaceJet {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::from_fn(|k, _| self.components[k].coeff([0, 0]))
    }

    /// The partial derivative tensor entry d^{i+j} S / du^i dv^j.
    pub fn deriv(&self, i: u16, j: u16) -> Vector3<f64> {
        assert!(i + j <= self.order, "derivative order exceeds the jet order");
        let scale = FACTORIAL[usize::from(i)] * FACTORIAL[usize::from(j)];
        Vector3::from_fn(|k, _| self.components[k].coeff([i, j]) * scale)
    }

    /// First fundamental form coefficients (E, F, G).
    pub fn first_form(&self) -> (f64, f64, f64) {
        let su = self.deriv(1, 0);
        let sv = self.deriv(0, 1);
        (su.dot(&su), su.dot(&sv), sv.dot(&sv))
    }

    /// Unit normal, oriented along du x dv.
    pub fn normal(&self) -> Vector3<f64> {
        self.deriv(1, 0).cross(&self.deriv(0, 1)).normalize()
    }

    /// Second fundamental form coefficients (e, f, g) against [`normal`].
    pub fn second_form(&self) -> (f64, f64, f64) {
        let n = self.normal();
        (
            self.deriv(2, 0).dot(&n),
            self.deriv(1, 1).dot(&n),
            self.deriv(0, 2).dot(&n),
        )
    }
}

/// A single rectangular chart of an immersed surface.
///
/// `taylor` must agree with finite differences of the position; `in_domain`
/// may cut a mask out of the bounding rectangle (elliptical caps); a
/// periodic coordinate reports its period and is never domain-limited.
pub trait ParametricSurface: Send + Sync {
    fn taylor(&self, u: f64, v: f64, order: u16) -> Result<SurfaceJet, SurfaceError>;

    /// Bounding rectangle [[u_min, u_max], [v_min, v_max]].
    fn domain(&self) -> [[f64; 2]; 2];

    fn in_domain(&self, u: f64, v: f64) -> bool {
        let d = self.domain();
        let p = self.periods();
        (p[0].is_some() || (d[0][0] <= u && u <= d[0][1]))
            && (p[1].is_some() || (d[1][0] <= v && v <= d[1][1]))
    }

    /// Period of each coordinate, when the chart wraps around.
    fn periods(&self) -> [Option<f64>; 2] {
        [None, None]
    }
}

/// Graph surface (u, v, h(u, v)) over a square chart.
#[derive(Debug, Clone)]
pub struct MongeGraph {
    pub height: Series,
    pub halfwidth: f64,
}

impl MongeGraph {
    pub fn new(height: Series, halfwidth: f64) -> Self {
        assert!(halfwidth > 0.0);
        MongeGraph { height, halfwidth }
    }

    pub fn from_raw_jet(raw: &RawMongeJet5, halfwidth: f64) -> Self {
        MongeGraph::new(raw_height_poly(raw).to_f64(), halfwidth)
    }
}

impl ParametricSurface for MongeGraph {
    fn taylor(&self, u: f64, v: f64, order: u16) -> Result<SurfaceJet, SurfaceError> {
        if !self.in_domain(u, v) {
            return Err(SurfaceError::OutOfDomain { u, v });
        }
        let shift = [
            Series::constant(u).add(&Series::var(0)),
            Series::constant(v).add(&Series::var(1)),
        ];
        let h = self
            .height
            .compose(&shift, self.height.total_degree())
            .truncate(order);
        let mut x = Series::constant(u);
        x.add_term([1, 0], 1.0);
        let mut y = Series::constant(v);
        y.add_term([0, 1], 1.0);
        Ok(SurfaceJet {
            order,
            components: [x.truncate(order), y.truncate(order), h],
        })
    }

    fn domain(&self) -> [[f64; 2]; 2] {
        let w = self.halfwidth;
        [[-w, w], [-w, w]]
    }
}

/// One of the six axis-aligned graph charts of an ellipsoid.
///
/// The chart graphs coordinate `axis` (with `sign`) over the other two axes
/// in cyclic order; the domain is the elliptical mask
/// (u/a₁)² + (v/a₂)² ≤ 0.81, which the six charts jointly cover.
#[derive(Debug, Clone)]
pub struct EllipsoidGraphChart {
    pub semi_axes: [f64; 3],
    pub axis: usize,
    pub sign: f64,
}

impl EllipsoidGraphChart {
    fn free_axes(&self) -> (usize, usize) {
        ((self.axis + 1) % 3, (self.axis + 2) % 3)
    }
}

impl ParametricSurface for EllipsoidGraphChart {
    fn taylor(&self, u: f64, v: f64, order: u16) -> Result<SurfaceJet, SurfaceError> {
        if !self.in_domain(u, v) {
            return Err(SurfaceError::OutOfDomain { u, v });
        }
        let (p, q) = self.free_axes();
        let (ap, aq) = (self.semi_axes[p], self.semi_axes[q]);
        let mut w = Series::constant(1.0 - (u / ap).powi(2) - (v / aq).powi(2));
        w.add_term([1, 0], -2.0 * u / (ap * ap));
        w.add_term([0, 1], -2.0 * v / (aq * aq));
        if order >= 2 {
            w.add_term([2, 0], -1.0 / (ap * ap));
            w.add_term([0, 2], -1.0 / (aq * aq));
        }
        let mut comps = [Series::zero(), Series::zero(), Series::zero()];
        comps[self.axis] = taylor::sqrt(&w, order).scale(&(self.sign * self.semi_axes[self.axis]));
        comps[p] = Series::constant(u);
        comps[p].add_term([1, 0], 1.0);
        comps[q] = Series::constant(v);
        comps[q].add_term([0, 1], 1.0);
        Ok(SurfaceJet {
            order,
            components: comps,
        })
    }

    fn domain(&self) -> [[f64; 2]; 2] {
        let (p, q) = self.free_axes();
        [
            [-0.9 * self.semi_axes[p], 0.9 * self.semi_axes[p]],
            [-0.9 * self.semi_axes[q], 0.9 * self.semi_axes[q]],
        ]
    }

    fn in_domain(&self, u: f64, v: f64) -> bool {
        let (p, q) = self.free_axes();
        (u / self.semi_axes[p]).powi(2) + (v / self.semi_axes[q]).powi(2) <= 0.81
    }
}

/// Spherical-coordinate chart of an ellipsoid, periodic in the longitude:
/// x = a cos u, y = b sin u cos v, z = c sin u sin v, u away from the poles.
///
/// One connected chart sees all four umbilics of a triaxial ellipsoid and
/// lets closed curvature lines wrap around, which the graph charts cannot.
#[derive(Debug, Clone)]
pub struct EllipsoidGeographicChart {
    pub semi_axes: [f64; 3],
    pub polar_cap: f64,
}

impl ParametricSurface for EllipsoidGeographicChart {
    fn taylor(&self, u: f64, v: f64, order: u16) -> Result<SurfaceJet, SurfaceError> {
        if !self.in_domain(u, v) {
            return Err(SurfaceError::OutOfDomain { u, v });
        }
        let [a, b, c] = self.semi_axes;
        let su = taylor::sin_series(u, 0, order);
        let cu = taylor::cos_series(u, 0, order);
        let sv = taylor::sin_series(v, 1, order);
        let cv = taylor::cos_series(v, 1, order);
        Ok(SurfaceJet {
            order,
            components: [
                cu.scale(&a),
                su.mul_trunc(&cv, order).scale(&b),
                su.mul_trunc(&sv, order).scale(&c),
            ],
        })
    }

    fn domain(&self) -> [[f64; 2]; 2] {
        [
            [self.polar_cap, std::f64::consts::PI - self.polar_cap],
            [0.0, 2.0 * std::f64::consts::PI],
        ]
    }

    fn periods(&self) -> [Option<f64>; 2] {
        [None, Some(2.0 * std::f64::consts::PI)]
    }
}

/// Torus of revolution, periodic in both coordinates; it has no umbilics.
#[derive(Debug, Clone)]
pub struct Torus {
    pub major_radius: f64,
    pub minor_radius: f64,
}

impl ParametricSurface for Torus {
    fn taylor(&self, u: f64, v: f64, order: u16) -> Result<SurfaceJet, SurfaceError> {
        let (big_r, r) = (self.major_radius, self.minor_radius);
        let cu = taylor::cos_series(u, 0, order);
        let su = taylor::sin_series(u, 0, order);
        let cv = taylor::cos_series(v, 1, order);
        let sv = taylor::sin_series(v, 1, order);
        let ring = cv.scale(&r).add(&Series::constant(big_r));
        Ok(SurfaceJet {
            order,
            components: [
                ring.mul_trunc(&cu, order),
                ring.mul_trunc(&su, order),
                sv.scale(&r),
            ],
        })
    }

    fn domain(&self) -> [[f64; 2]; 2] {
        let tau = 2.0 * std::f64::consts::PI;
        [[0.0, tau], [0.0, tau]]
    }

    fn periods(&self) -> [Option<f64>; 2] {
        let tau = 2.0 * std::f64::consts::PI;
        [Some(tau), Some(tau)]
    }
}

/// Graph of a biquadratic height (p₁/2)u² + (p₂/2)v² + (q₁/4)u⁴ +
/// (q₂/2)u²v² + (q₃/4)v⁴.
pub fn biquadratic_graph(quadratic: [f64; 2], quartic: [f64; 3], halfwidth: f64) -> MongeGraph {
    let mut h = Series::zero();
    h.add_term([2, 0], quadratic[0] / 2.0);
    h.add_term([0, 2], quadratic[1] / 2.0);
    h.add_term([4, 0], quartic[0] / 4.0);
    h.add_term([2, 2], quartic[1] / 2.0);
    h.add_term([0, 4], quartic[2] / 4.0);
    MongeGraph::new(h, halfwidth)
}

/// A surface presented as a list of charts. Closed surfaces carry several
/// charts; umbilics found in different charts are merged in ambient space.
pub struct Surface {
    pub charts: Vec<Box<dyn ParametricSurface>>,
}

impl Surface {
    pub fn monge(height: Series, halfwidth: f64) -> Surface {
        Surface {
            charts: vec![Box::new(MongeGraph::new(height, halfwidth))],
        }
    }

    pub fn from_jet(raw: &RawMongeJet5, halfwidth: f64) -> Surface {
        Surface {
            charts: vec![Box::new(MongeGraph::from_raw_jet(raw, halfwidth))],
        }
    }

    /// Six axis-aligned graph charts covering the whole ellipsoid.
    pub fn ellipsoid(semi_axes: [f64; 3]) -> Surface {
        assert!(semi_axes.iter().all(|a| *a > 0.0));
        let mut charts: Vec<Box<dyn ParametricSurface>> = Vec::new();
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                charts.push(Box::new(EllipsoidGraphChart {
                    semi_axes,
                    axis,
                    sign,
                }));
            }
        }
        Surface { charts }
    }

    /// Single longitude-periodic chart of the ellipsoid (poles removed).
    pub fn ellipsoid_geographic(semi_axes: [f64; 3]) -> Surface {
        Surface {
            charts: vec![Box::new(EllipsoidGeographicChart {
                semi_axes,
                polar_cap: 0.15,
            })],
        }
    }

    pub fn torus(major_radius: f64, minor_radius: f64) -> Surface {
        assert!(major_radius > minor_radius && minor_radius > 0.0);
        Surface {
            charts: vec![Box::new(Torus {
                major_radius,
                minor_radius,
            })],
        }
    }

    pub fn biquadratic(quadratic: [f64; 2], quartic: [f64; 3], halfwidth: f64) -> Surface {
        Surface {
            charts: vec![Box::new(biquadratic_graph(quadratic, quartic, halfwidth))],
        }
    }

    pub fn from_json_str(doc: &str) -> Result<Surface, SurfaceError> {
        let doc: SurfaceDoc =
            serde_json::from_str(doc).map_err(|e| SurfaceError::BadDocument(e.to_string()))?;
        doc.build()
    }
}

type GridValue = Option<([f64; 2], f64)>;

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
#[allow(clippy::large_enum_variant)]
enum SurfaceDoc {
    Ellipsoid {
        semi_axes: [f64; 3],
        #[serde(default)]
        chart: EllipsoidChartKind,
    },
    Monge {
        jet: RawMongeJet5,
        #[serde(default)]
        extra_terms: Vec<ExtraTerm>,
        #[serde(default = "default_halfwidth")]
        halfwidth: f64,
    },
    Torus {
        major_radius: f64,
        minor_radius: f64,
    },
    Biquadratic {
        quadratic: [f64; 2],
        quartic: [f64; 3],
        #[serde(default = "default_halfwidth")]
        halfwidth: f64,
    },
}

#[derive(Deserialize, Default, Clone, Copy)]
#[serde(rename_all = "lowercase")]
pub(crate) enum EllipsoidChartKind {
    #[default]
    Graphs,
    Geographic,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtraTerm {
    i: u16,
    j: u16,
    coefficient: Scalar,
}

fn default_halfwidth() -> f64 {
    1.0
}

impl SurfaceDoc {
    fn build(self) -> Result<Surface, SurfaceError> {
        match self {
            SurfaceDoc::Ellipsoid { semi_axes, chart } => {
                if semi_axes.iter().any(|a| *a <= 0.0) {
                    return Err(SurfaceError::BadDocument(
                        "ellipsoid semi-axes must be positive".into(),
                    ));
                }
                Ok(match chart {
                    EllipsoidChartKind::Graphs => Surface::ellipsoid(semi_axes),
                    EllipsoidChartKind::Geographic => Surface::ellipsoid_geographic(semi_axes),
                })
            }
            SurfaceDoc::Monge {
                jet,
                extra_terms,
                halfwidth,
            } => {
                if halfwidth <= 0.0 {
                    return Err(SurfaceError::BadDocument("halfwidth must be positive".into()));
                }
                let mut h = raw_height_poly(&jet).to_f64();
                for t in extra_terms {
                    h.add_term([t.i, t.j], t.coefficient.to_f64());
                }
                Ok(Surface::monge(h, halfwidth))
            }
            SurfaceDoc::Torus {
                major_radius,
                minor_radius,
            } => {
                if !(major_radius > minor_radius && minor_radius > 0.0) {
                    return Err(SurfaceError::BadDocument(
                        "torus needs major_radius > minor_radius > 0".into(),
                    ));
                }
                Ok(Surface::torus(major_radius, minor_radius))
            }
            SurfaceDoc::Biquadratic {
                quadratic,
                quartic,
                halfwidth,
            } => {
                if halfwidth <= 0.0 {
                    return Err(SurfaceError::BadDocument("halfwidth must be positive".into()));
                }
                Ok(Surface::biquadratic(quadratic, quartic, halfwidth))
            }
        }
    }
}

/// Values of the two umbilicity equations with the unnormalized normal,
/// plus their natural magnitude scale at the point.
fn umbilic_equation_values(jet: &SurfaceJet) -> ([f64; 2], f64) {
    let su = jet.deriv(1, 0);
    let sv = jet.deriv(0, 1);
    let (ee, ff, gg) = (su.dot(&su), su.dot(&sv), sv.dot(&sv));
    let nt = su.cross(&sv);
    let et = jet.deriv(2, 0).dot(&nt);
    let ft = jet.deriv(1, 1).dot(&nt);
    let gt = jet.deriv(0, 2).dot(&nt);
    let scale = (ee + 2.0 * ff.abs() + gg) * (et.abs() + 2.0 * ft.abs() + gt.abs())
        + f64::MIN_POSITIVE;
    ([ee * gt - gg * et, ee * ft - ff * et], scale)
}

/// The same two equations as local series in the chart offsets, truncated at
/// `ord`; gives Newton exact values and gradients.
pub(crate) fn umbilicity_series(jet: &SurfaceJet, ord: u16) -> [Series; 2] {
    let comp_d = |i: usize, var: usize| jet.components[i].deriv(var);
    let su: [Series; 3] = std::array::from_fn(|i| comp_d(i, 0));
    let sv: [Series; 3] = std::array::from_fn(|i| comp_d(i, 1));
    let dot = |a: &[Series; 3], b: &[Series; 3]| {
        a[0].mul_trunc(&b[0], ord)
            .add(&a[1].mul_trunc(&b[1], ord))
            .add(&a[2].mul_trunc(&b[2], ord))
    };
    let nt = [
        su[1].mul_trunc(&sv[2], ord).sub(&su[2].mul_trunc(&sv[1], ord)),
        su[2].mul_trunc(&sv[0], ord).sub(&su[0].mul_trunc(&sv[2], ord)),
        su[0].mul_trunc(&sv[1], ord).sub(&su[1].mul_trunc(&sv[0], ord)),
    ];
    let suu: [Series; 3] = std::array::from_fn(|i| su[i].deriv(0));
    let suv: [Series; 3] = std::array::from_fn(|i| su[i].deriv(1));
    let svv: [Series; 3] = std::array::from_fn(|i| sv[i].deriv(1));
    let (ee, ff, gg) = (dot(&su, &su), dot(&su, &sv), dot(&sv, &sv));
    let (et, ft, gt) = (dot(&suu, &nt), dot(&suv, &nt), dot(&svv, &nt));
    [
        ee.mul_trunc(&gt, ord).sub(&gg.mul_trunc(&et, ord)),
        ee.mul_trunc(&ft, ord).sub(&ff.mul_trunc(&et, ord)),
    ]
}

/// max(|L|, |M|, |N|) of the curvature-line equation coefficients with the
/// unit normal; the umbilicity residual reported on records.
pub(crate) fn normalized_umbilic_residual(jet: &SurfaceJet) -> f64 {
    let (ee, ff, gg) = jet.first_form();
    let (e2, f2, g2) = jet.second_form();
    let l = ff * g2 - gg * f2;
    let m = ee * g2 - gg * e2;
    let n = ee * f2 - ff * e2;
    l.abs().max(m.abs()).max(n.abs())
}

/// An isolated umbilic found on a chart, with its adapted jet and
/// classification.
pub struct UmbilicRecord {
    pub chart: usize,
    pub u: f64,
    pub v: f64,
    pub position: [f64; 3],
    pub residual: f64,
    pub adapted: AdaptedJet,
    pub class: UmbilicClass,
}

/// Result of a grid scan over all charts of a surface.
pub struct UmbilicScan {
    pub umbilics: Vec<UmbilicRecord>,
    /// Charts whose grid is mostly umbilic (spheres): no isolated points.
    pub non_isolated_charts: Vec<usize>,
    /// Newton seeds that failed to converge or left the domain.
    pub discarded: usize,
}

/// Newton-refines one umbilic seed. Returns the refined chart point.
pub(crate) fn refine_umbilic(
    chart: &dyn ParametricSurface,
    mut u: f64,
    mut v: f64,
) -> Option<(f64, f64, f64)> {
    let mut last_abs = f64::INFINITY;
    let mut best: Option<(f64, f64, f64)> = None;
    for _ in 0..50 {
        let Ok(jet) = chart.taylor(u, v, 3) else { break };
        let sys = umbilicity_series(&jet, 1);
        let f0 = Vector2::new(sys[0].coeff([0, 0]), sys[1].coeff([0, 0]));
        let (_, form_scale) = umbilic_equation_values(&jet);
        let jac = Matrix2::new(
            sys[0].coeff([1, 0]),
            sys[0].coeff([0, 1]),
            sys[1].coeff([1, 0]),
            sys[1].coeff([0, 1]),
        );
        // near a simple root |U| ~ ||J|| * distance; the form scale alone
        // vanishes at flat umbilics and would never certify convergence
        let scale = jac.abs().sum() * (1.0 + u.abs() + v.abs()) + form_scale + f64::MIN_POSITIVE;
        let abs_res = f0[0].abs() + f0[1].abs();
        let scaled = abs_res / scale;
        if best.is_none_or(|b| scaled < b.2) {
            best = Some((u, v, scaled));
        }
        // run to the stall point: degenerate roots (singular Jacobian)
        // certify early but keep contracting, so don't stop on the first
        // pass below threshold
        if abs_res >= last_abs * 0.999_999 {
            break;
        }
        last_abs = abs_res;
        let Some(inv) = jac.try_inverse() else { break };
        let step = inv * f0;
        // damped: halve until the residual decreases
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1.0 / 64.0 {
            let (nu, nv) = (u - lambda * step[0], v - lambda * step[1]);
            if let Ok(njet) = chart.taylor(nu, nv, 2) {
                let (nf, _) = umbilic_equation_values(&njet);
                if nf[0].abs() + nf[1].abs() < abs_res {
                    u = nu;
                    v = nv;
                    accepted = true;
                    break;
                }
            }
            lambda /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    best.filter(|b| b.2 < 1e-12)
}

/// Scans every chart on a `grid_resolution` x `grid_resolution` cell grid,
/// seeds Newton where both umbilicity equations change sign in a cell, and
/// merges duplicates (within a chart and across charts in ambient space).
pub fn find_umbilics(
    surface: &Surface,
    grid_resolution: usize,
    tol: &ToleranceContext,
) -> UmbilicScan {
    assert!(grid_resolution >= 4);
    let n = grid_resolution;
    let mut scan = UmbilicScan {
        umbilics: Vec::new(),
        non_isolated_charts: Vec::new(),
        discarded: 0,
    };
    for (ci, chart) in surface.charts.iter().enumerate() {
        let dom = chart.domain();
        let us: Vec<f64> = (0..=n)
            .map(|i| dom[0][0] + (dom[0][1] - dom[0][0]) * i as f64 / n as f64)
            .collect();
        let vs: Vec<f64> = (0..=n)
            .map(|j| dom[1][0] + (dom[1][1] - dom[1][0]) * j as f64 / n as f64)
            .collect();
        let values: Vec<Vec<GridValue>> = us
            .par_iter()
            .map(|&u| {
                vs.iter()
                    .map(|&v| {
                        chart
                            .taylor(u, v, 2)
                            .ok()
                            .map(|jet| umbilic_equation_values(&jet))
                    })
                    .collect()
            })
            .collect();
        let mut in_dom = 0usize;
        let mut tiny = 0usize;
        for row in &values {
            for val in row.iter().flatten() {
                in_dom += 1;
                if (val.0[0].abs() + val.0[1].abs()) / val.1 < tol.eps_zero {
                    tiny += 1;
                }
            }
        }
        if in_dom > 0 && 2 * tiny > in_dom {
            scan.non_isolated_charts.push(ci);
            continue;
        }
        let mut chart_roots: Vec<(f64, f64, f64)> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let corners = [
                    values[i][j].as_ref(),
                    values[i + 1][j].as_ref(),
                    values[i][j + 1].as_ref(),
                    values[i + 1][j + 1].as_ref(),
                ];
                if corners.iter().any(|c| c.is_none()) {
                    continue;
                }
                let straddles = |k: usize| {
                    let vals = corners.map(|c| c.unwrap().0[k]);
                    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    lo <= 0.0 && 0.0 <= hi && (lo != 0.0 || hi != 0.0)
                };
                if !(straddles(0) && straddles(1)) {
                    continue;
                }
                let cu = (us[i] + us[i + 1]) / 2.0;
                let cv = (vs[j] + vs[j + 1]) / 2.0;
                match refine_umbilic(chart.as_ref(), cu, cv) {
                    Some(root) => {
                        let dup = chart_roots.iter().any(|r| {
                            (r.0 - root.0).abs() + (r.1 - root.1).abs()
                                < 1e-7 * (1.0 + root.0.abs() + root.1.abs())
                        });
                        if !dup {
                            chart_roots.push(root);
                        }
                    }
                    None => scan.discarded += 1,
                }
            }
        }
        for (u, v, _) in chart_roots {
            let Ok(jet) = chart.taylor(u, v, 5) else {
                scan.discarded += 1;
                continue;
            };
            let Ok(adapted) = adapted_monge_jet(chart.as_ref(), u, v, tol) else {
                scan.discarded += 1;
                continue;
            };
            let position = jet.position();
            let ambient_dup = scan.umbilics.iter().any(|r| {
                (Vector3::from(r.position) - position).norm() < 1e-6 * (1.0 + position.norm())
            });
            if ambient_dup {
                continue;
            }
            let class = classify(&adapted.jet, tol);
            scan.umbilics.push(UmbilicRecord {
                chart: ci,
                u,
                v,
                position: position.into(),
                residual: normalized_umbilic_residual(&jet),
                adapted,
                class,
            });
        }
    }
    scan
}

/// Adapted Monge data at an umbilic: the normalized jet, the tangent-frame
/// rotation angle, and the linear chart <-> adapted-frame maps.
pub struct AdaptedJet {
    pub jet: MongeJet5,
    pub angle: f64,
    /// Chart displacements to adapted-frame tangent coordinates.
    pub chart_to_adapted: Matrix2<f64>,
    /// Adapted-frame tangent coordinates to chart displacements.
    pub to_chart: Matrix2<f64>,
    /// Unit normal (du x dv orientation) at the umbilic.
    pub normal: [f64; 3],
}

/// Re-graphs the surface over its tangent plane at (u, v) and normalizes.
///
/// The frame is e1 = Su/|Su|, n = unit Su x Sv, e2 = n x e1; the height
/// series over (e1, e2) comes from inverting the in-plane projection, and
/// [`normalize_monge_jet`] then rotates away the u²v cubic term. The raw
/// in-plane coordinates relate to the final adapted frame by the rotation
/// R(angle), so chart_to_adapted = R(-angle) · J with J the in-plane
/// Jacobian of the chart.
pub fn adapted_monge_jet(
    chart: &dyn ParametricSurface,
    u: f64,
    v: f64,
    tol: &ToleranceContext,
) -> Result<AdaptedJet, SurfaceError> {
    let jet = chart.taylor(u, v, 5)?;
    let su = jet.deriv(1, 0);
    let sv = jet.deriv(0, 1);
    let e1 = su.normalize();
    let nv = su.cross(&sv);
    assert!(nv.norm() > 0.0, "immersion condition violated");
    let n = nv.normalize();
    let e2 = n.cross(&e1);
    let frame_dot = |dir: &Vector3<f64>| {
        let mut s = Series::zero();
        for k in 0..3 {
            let centered = jet.components[k].sub(&Series::constant(jet.components[k].coeff([0, 0])));
            s = s.add(&centered.scale(&dir[k]));
        }
        s
    };
    let xp = frame_dot(&e1);
    let yp = frame_dot(&e2);
    let zp = frame_dot(&n);
    let inverse = taylor::invert_map(&[xp, yp], 5);
    let h = zp.compose(&inverse, 5);
    let k11 = 2.0 * h.coeff([2, 0]);
    let k12 = h.coeff([1, 1]);
    let k22 = 2.0 * h.coeff([0, 2]);
    let scale = 1.0 + k11.abs() + k22.abs();
    if (k11 - k22).abs() > tol.eps_zero * scale || k12.abs() > tol.eps_zero * scale {
        return Err(SurfaceError::NotUmbilic { k11, k22, k12 });
    }
    let coeff = |i: u16, j: u16, fact: f64| Scalar::from(h.coeff([i, j]) * fact);
    let raw = RawMongeJet5 {
        k: Scalar::from((k11 + k22) / 2.0),
        a: coeff(3, 0, 6.0),
        bprime: coeff(2, 1, 2.0),
        b: coeff(1, 2, 2.0),
        c: coeff(0, 3, 6.0),
        A: coeff(4, 0, 24.0),
        B: coeff(3, 1, 6.0),
        C: coeff(2, 2, 4.0),
        D: coeff(1, 3, 6.0),
        E: coeff(0, 4, 24.0),
        a50: coeff(5, 0, 120.0),
        a41: coeff(4, 1, 24.0),
        a32: coeff(3, 2, 12.0),
        a23: coeff(2, 3, 12.0),
        a14: coeff(1, 4, 24.0),
        a05: coeff(0, 5, 120.0),
    };
    let (jet5, angle_s) = normalize_monge_jet(&raw, tol);
    let angle = angle_s.to_f64();
    let jac = Matrix2::new(su.dot(&e1), sv.dot(&e1), su.dot(&e2), sv.dot(&e2));
    let rot_back = Matrix2::new(angle.cos(), angle.sin(), -angle.sin(), angle.cos());
    let chart_to_adapted = rot_back * jac;
    let to_chart = chart_to_adapted
        .try_inverse()
        .expect("immersion gives an invertible in-plane Jacobian");
    Ok(AdaptedJet {
        jet: jet5,
        angle,
        chart_to_adapted,
        to_chart,
        normal: n.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::UmbilicTag;

    fn tol() -> ToleranceContext {
        ToleranceContext::default()
    }

    /// Nested central differences with one Richardson pass.
    fn fd_deriv(
        chart: &dyn ParametricSurface,
        u: f64,
        v: f64,
        i: u16,
        j: u16,
        h: f64,
    ) -> Vector3<f64> {
        fn rec(chart: &dyn ParametricSurface, u: f64, v: f64, i: u16, j: u16, h: f64) -> Vector3<f64> {
            if i > 0 {
                (rec(chart, u + h, v, i - 1, j, h) - rec(chart, u - h, v, i - 1, j, h)) / (2.0 * h)
            } else if j > 0 {
                (rec(chart, u, v + h, i, j - 1, h) - rec(chart, u, v - h, i, j - 1, h)) / (2.0 * h)
            } else {
                chart.taylor(u, v, 0).unwrap().position()
            }
        }
        let coarse = rec(chart, u, v, i, j, h);
        let fine = rec(chart, u, v, i, j, h / 2.0);
        (fine * 4.0 - coarse) / 3.0
    }

    fn check_derivs_against_fd(chart: &dyn ParametricSurface, u: f64, v: f64) {
        let jet = chart.taylor(u, v, 3).unwrap();
        for i in 0..=3u16 {
            for j in 0..=(3 - i) {
                let got = jet.deriv(i, j);
                let want = fd_deriv(chart, u, v, i, j, 4e-3);
                let err = (got - want).norm() / (1.0 + want.norm());
                assert!(err < 1e-6, "d({i},{j}) at ({u},{v}): err {err:.2e}");
            }
        }
    }

    #[test]
    fn taylor_matches_finite_differences_on_builtins() {
        check_derivs_against_fd(
            &EllipsoidGraphChart {
                semi_axes: [3.0, 2.0, 1.0],
                axis: 0,
                sign: 1.0,
            },
            0.3,
            -0.2,
        );
        check_derivs_against_fd(
            &Torus {
                major_radius: 2.0,
                minor_radius: 0.5,
            },
            0.9,
            1.3,
        );
        check_derivs_against_fd(
            &EllipsoidGeographicChart {
                semi_axes: [3.0, 2.0, 1.0],
                polar_cap: 0.15,
            },
            0.8,
            0.7,
        );
    }

    #[test]
    fn graph_derivatives_follow_the_coefficients() {
        let mut h = Series::zero();
        h.add_term([3, 0], 0.25);
        h.add_term([1, 2], -0.5);
        let g = MongeGraph::new(h, 1.0);
        let jet = g.taylor(0.0, 0.0, 3).unwrap();
        assert_eq!(jet.deriv(3, 0)[2], 0.25 * 6.0);
        assert_eq!(jet.deriv(1, 2)[2], -0.5 * 2.0);
        assert_eq!(jet.deriv(2, 1)[2], 0.0);
        // shifted center picks up the chain of the cubic
        let jet2 = g.taylor(0.2, 0.1, 2).unwrap();
        assert!((jet2.deriv(2, 0)[2] - (0.25 * 6.0 * 0.2)).abs() < 1e-14);
    }

    #[test]
    fn sphere_normal_curvature_is_the_inverse_radius() {
        let chart = EllipsoidGraphChart {
            semi_axes: [2.0, 2.0, 2.0],
            axis: 2,
            sign: 1.0,
        };
        let jet = chart.taylor(0.4, -0.3, 2).unwrap();
        let (ee, _, gg) = jet.first_form();
        let (e2, _, g2) = jet.second_form();
        assert!((e2 / ee - g2 / gg).abs() < 1e-12);
        assert!(((e2 / ee).abs() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn triaxial_ellipsoid_has_exactly_four_d1_umbilics() {
        let surf = Surface::ellipsoid([3.0, 2.0, 1.0]);
        let scan = find_umbilics(&surf, 48, &tol());
        assert!(scan.non_isolated_charts.is_empty());
        assert_eq!(scan.umbilics.len(), 4, "umbilic count");
        // classical closed form: x^2 = 45/8, y = 0, z^2 = 3/8
        let x0 = (45.0f64 / 8.0).sqrt();
        let z0 = (3.0f64 / 8.0).sqrt();
        for rec in &scan.umbilics {
            let [x, y, z] = rec.position;
            assert!((x.abs() - x0).abs() < 1e-9, "x = {x}");
            assert!(y.abs() < 1e-9, "y = {y}");
            assert!((z.abs() - z0).abs() < 1e-9, "z = {z}");
            assert!(rec.residual <= tol().eps_residual);
            assert_eq!(rec.class.tag, UmbilicTag::D1);
        }
        // count is stable under grid refinement
        let scan2 = find_umbilics(&surf, 96, &tol());
        assert_eq!(scan2.umbilics.len(), 4);
    }

    #[test]
    fn geographic_chart_finds_the_same_four_umbilics() {
        let surf = Surface::ellipsoid_geographic([3.0, 2.0, 1.0]);
        let scan = find_umbilics(&surf, 48, &tol());
        assert_eq!(scan.umbilics.len(), 4);
        let theta = 0.659_058_035_826_f64;
        for rec in &scan.umbilics {
            let th = rec.u;
            assert!(
                (th - theta).abs() < 1e-9 || (th - (std::f64::consts::PI - theta)).abs() < 1e-9,
                "theta = {th}"
            );
            assert_eq!(rec.class.tag, UmbilicTag::D1);
        }
    }

    #[test]
    fn sphere_scan_reports_non_isolated_charts() {
        let surf = Surface::ellipsoid([1.5, 1.5, 1.5]);
        let scan = find_umbilics(&surf, 16, &tol());
        assert_eq!(scan.non_isolated_charts.len(), 6);
        assert!(scan.umbilics.is_empty());
    }

    #[test]
    fn torus_has_no_umbilics() {
        let surf = Surface::torus(2.0, 0.5);
        let scan = find_umbilics(&surf, 32, &tol());
        assert!(scan.umbilics.is_empty());
        assert!(scan.non_isolated_charts.is_empty());
    }

    #[test]
    fn constructed_graph_has_a_single_umbilic_at_the_origin() {
        let raw = RawMongeJet5 {
            k: Scalar::from_int(1),
            a: Scalar::from_int(4),
            b: Scalar::from_int(1),
            ..RawMongeJet5::default()
        };
        // halfwidth 0.4: this cubic graph has a second umbilic out at (1/2, 0)
        let surf = Surface::from_jet(&raw, 0.4);
        let scan = find_umbilics(&surf, 32, &tol());
        assert_eq!(scan.umbilics.len(), 1);
        let rec = &scan.umbilics[0];
        assert!(rec.u.abs() < 1e-10 && rec.v.abs() < 1e-10);
        assert_eq!(rec.class.tag, UmbilicTag::D1);
        assert!((rec.adapted.jet.a.to_f64() - 4.0).abs() < 1e-9);
        assert!(rec.adapted.angle.abs() < 1e-12);
    }

    #[test]
    fn adapted_jet_height_matches_through_the_frame_maps() {
        // a graph with a u^2 v term forces a nontrivial rotation
        let raw = RawMongeJet5 {
            k: Scalar::from_int(1),
            a: Scalar::from_int(2),
            bprime: Scalar::from_int(1),
            b: Scalar::from_int(1),
            c: Scalar::ratio(1, 2),
            B: Scalar::from_int(1),
            ..RawMongeJet5::default()
        };
        let graph = MongeGraph::from_raw_jet(&raw, 1.0);
        let ad = adapted_monge_jet(&graph, 0.0, 0.0, &tol()).unwrap();
        assert!(ad.angle != 0.0);
        assert!(ad.jet.height_poly().to_f64().coeff([2, 1]).abs() < 1e-12);
        let h_raw = raw_height_poly(&raw).to_f64();
        let h_ad = ad.jet.height_poly().to_f64();
        for (du, dv) in [(0.01, 0.0), (0.0, 0.01), (0.007, -0.004), (-0.01, 0.013)] {
            let w = ad.chart_to_adapted * Vector2::new(du, dv);
            let direct = h_raw.eval(&[du, dv]);
            let mapped = h_ad.eval(&[w[0], w[1]]);
            assert!(
                (direct - mapped).abs() < 1e-10,
                "height mismatch at ({du},{dv}): {direct} vs {mapped}"
            );
        }
        // round trip of the frame maps
        let rt = ad.to_chart * ad.chart_to_adapted;
        assert!((rt - Matrix2::identity()).norm() < 1e-12);
    }

    #[test]
    fn adapted_jet_rejects_non_umbilic_points() {
        let chart = EllipsoidGraphChart {
            semi_axes: [3.0, 2.0, 1.0],
            axis: 0,
            sign: 1.0,
        };
        let err = adapted_monge_jet(&chart, 0.5, 0.1, &tol());
        assert!(matches!(err, Err(SurfaceError::NotUmbilic { .. })));
    }

    /// A chart post-composed with a rigid rotation of 3-space.
    struct Rotated<'a> {
        inner: &'a dyn ParametricSurface,
        rot: [[f64; 3]; 3],
    }

    impl ParametricSurface for Rotated<'_> {
        fn taylor(&self, u: f64, v: f64, order: u16) -> Result<SurfaceJet, SurfaceError> {
            let jet = self.inner.taylor(u, v, order)?;
            let comp = |r: &[f64; 3]| {
                jet.components[0]
                    .scale(&r[0])
                    .add(&jet.components[1].scale(&r[1]))
                    .add(&jet.components[2].scale(&r[2]))
            };
            Ok(SurfaceJet {
                order,
                components: [comp(&self.rot[0]), comp(&self.rot[1]), comp(&self.rot[2])],
            })
        }

        fn domain(&self) -> [[f64; 2]; 2] {
            self.inner.domain()
        }

        fn in_domain(&self, u: f64, v: f64) -> bool {
            self.inner.in_domain(u, v)
        }

        fn periods(&self) -> [Option<f64>; 2] {
            self.inner.periods()
        }
    }

    #[test]
    fn classification_is_invariant_under_rigid_rotation() {
        let raw = RawMongeJet5 {
            k: Scalar::from_int(1),
            a: Scalar::ratio(3, 2),
            b: Scalar::from_int(1),
            c: Scalar::from_int(1),
            B: Scalar::from_int(2),
            ..RawMongeJet5::default()
        };
        let graph = MongeGraph::from_raw_jet(&raw, 1.0);
        // rotation about (1,2,3)/|..| by 0.7 rad (Rodrigues)
        let axis = Vector3::new(1.0, 2.0, 3.0).normalize();
        let (s, c) = (0.7f64.sin(), 0.7f64.cos());
        let mut rot = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let kron = if i == j { 1.0 } else { 0.0 };
                let eps: f64 = match (i, j) {
                    (0, 1) => -axis[2],
                    (0, 2) => axis[1],
                    (1, 0) => axis[2],
                    (1, 2) => -axis[0],
                    (2, 0) => -axis[1],
                    (2, 1) => axis[0],
                    _ => 0.0,
                };
                rot[i][j] = c * kron + s * eps + (1.0 - c) * axis[i] * axis[j];
            }
        }
        let rotated = Rotated {
            inner: &graph,
            rot,
        };
        let base = adapted_monge_jet(&graph, 0.0, 0.0, &tol()).unwrap();
        let moved = adapted_monge_jet(&rotated, 0.0, 0.0, &tol()).unwrap();
        let cb = classify(&base.jet, &tol());
        let cm = classify(&moved.jet, &tol());
        assert_eq!(cb.tag, cm.tag);
        // tangent rotation preserves b(b-a) and the fold discriminant
        let inv = |j: &MongeJet5| {
            let (a, b, c) = (j.a.to_f64(), j.b.to_f64(), j.c.to_f64());
            (b * (b - a), c * c - 4.0 * b * (a - 2.0 * b))
        };
        let (t0, d0) = inv(&base.jet);
        let (t1, d1) = inv(&moved.jet);
        assert!((t0 - t1).abs() < 1e-9 * (1.0 + t0.abs()));
        assert!((d0 - d1).abs() < 1e-9 * (1.0 + d0.abs()));
    }

    #[test]
    fn out_of_domain_taylor_is_an_error() {
        let chart = EllipsoidGraphChart {
            semi_axes: [3.0, 2.0, 1.0],
            axis: 2,
            sign: -1.0,
        };
        assert!(matches!(
            chart.taylor(2.9, 0.0, 2),
            Err(SurfaceError::OutOfDomain { .. })
        ));
        assert!(chart.in_domain(0.5, 0.5));
        assert!(!chart.in_domain(2.8, 0.4));
    }

    #[test]
    fn surface_documents_parse_and_validate() {
        let s = Surface::from_json_str(
            r#"{"type": "ellipsoid", "semi_axes": [3, 2, 1]}"#,
        )
        .unwrap();
        assert_eq!(s.charts.len(), 6);
        let s = Surface::from_json_str(
            r#"{"type": "ellipsoid", "semi_axes": [3, 2, 1], "chart": "geographic"}"#,
        )
        .unwrap();
        assert_eq!(s.charts.len(), 1);
        let s = Surface::from_json_str(
            r#"{"type": "monge", "jet": {"k": 1, "a": "3/2", "b": 1},
                "extra_terms": [{"i": 6, "j": 0, "coefficient": "1/720"}],
                "halfwidth": 0.5}"#,
        )
        .unwrap();
        let jet = s.charts[0].taylor(0.0, 0.0, 3).unwrap();
        assert!((jet.deriv(3, 0)[2] - 1.5).abs() < 1e-15);
        assert!(Surface::from_json_str(r#"{"type": "torus", "major_radius": 2, "minor_radius": 0.5}"#).is_ok());
        assert!(Surface::from_json_str(r#"{"type": "plane"}"#).is_err());
        assert!(Surface::from_json_str(
            r#"{"type": "torus", "major_radius": 0.5, "minor_radius": 2}"#
        )
        .is_err());
        assert!(Surface::from_json_str(r#"{"type": "monge", "jet": {"zz": 1}}"#).is_err());
    }
}
