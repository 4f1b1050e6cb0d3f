//! Two-parameter families of surfaces and their umbilic sheets.
//!
//! A family assigns a surface to each point of a rectangular parameter
//! domain. Scanning the family meshes its umbilic set over a lambda grid,
//! classifies every vertex, and extracts the codimension-1 curves and
//! codimension-2 isolated points where the classification transitions.

use crate::classifier::{classify, compute_invariants, InvariantReport, UmbilicClass, UmbilicTag};
use crate::jets::{MongeJet5, RawMongeJet5};
use crate::scalar::{Scalar, ToleranceContext};
use crate::surfaces::{
    adapted_monge_jet, find_umbilics, refine_umbilic, umbilicity_series, EllipsoidChartKind,
    Surface,
};
use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("no convergence after {iterations} iterations: {context}")]
    NoConvergence { iterations: usize, context: String },
    #[error("bad document: {0}")]
    BadDocument(String),
}

// ---------------------------------------------------------------------------
// Parameter expressions

/// Arithmetic over the two family parameters: numbers, lambda1, lambda2,
/// `+ - * /`, integer `^`, and parentheses.
#[derive(Debug, Clone)]
pub enum Expr {
    Const(f64),
    Lambda1,
    Lambda2,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

impl Expr {
    pub fn eval(&self, l1: f64, l2: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Lambda1 => l1,
            Expr::Lambda2 => l2,
            Expr::Neg(e) => -e.eval(l1, l2),
            Expr::Add(a, b) => a.eval(l1, l2) + b.eval(l1, l2),
            Expr::Sub(a, b) => a.eval(l1, l2) - b.eval(l1, l2),
            Expr::Mul(a, b) => a.eval(l1, l2) * b.eval(l1, l2),
            Expr::Div(a, b) => a.eval(l1, l2) / b.eval(l1, l2),
            Expr::Pow(a, n) => a.eval(l1, l2).powi(*n),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = Expr::Mul(Box::new(acc), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    acc = Expr::Div(Box::new(acc), Box::new(self.factor()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, String> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.factor()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, String> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let sign = if self.peek() == Some(b'-') {
                self.pos += 1;
                -1
            } else {
                1
            };
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err("expected integer exponent after ^".into());
            }
            let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let n: i32 = digits.parse().map_err(|_| "exponent out of range")?;
            return Ok(Expr::Pow(Box::new(base), sign * n));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, String> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err("expected )".into());
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self
                    .src
                    .get(self.pos)
                    .is_some_and(|&c| c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E')
                {
                    self.pos += 1;
                    // allow a sign right after the exponent marker
                    if matches!(self.src.get(self.pos - 1), Some(b'e') | Some(b'E'))
                        && matches!(self.src.get(self.pos), Some(b'+') | Some(b'-'))
                    {
                        self.pos += 1;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                text.parse::<f64>()
                    .map(Expr::Const)
                    .map_err(|_| format!("bad number {text:?}"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self
                    .src
                    .get(self.pos)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
                {
                    self.pos += 1;
                }
                match &self.src[start..self.pos] {
                    b"lambda1" => Ok(Expr::Lambda1),
                    b"lambda2" => Ok(Expr::Lambda2),
                    other => Err(format!(
                        "unknown identifier {:?}",
                        String::from_utf8_lossy(other)
                    )),
                }
            }
            _ => Err("expected number, lambda1, lambda2, or (".into()),
        }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, FamilyError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let e = p.expr().map_err(FamilyError::BadDocument)?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(FamilyError::BadDocument(format!(
            "trailing input at byte {} of {text:?}",
            p.pos
        )));
    }
    Ok(e)
}

/// A JSON leaf that is either a plain number or a lambda expression.
#[derive(Deserialize, Clone)]
#[serde(untagged)]
enum CoeffExpr {
    Number(f64),
    Text(String),
}

impl CoeffExpr {
    fn compile(&self) -> Result<Expr, FamilyError> {
        match self {
            CoeffExpr::Number(x) => Ok(Expr::Const(*x)),
            CoeffExpr::Text(t) => parse_expr(t),
        }
    }
}

// ---------------------------------------------------------------------------
// Family specification

/// A two-parameter family of surfaces over a rectangular lambda domain.
#[derive(Clone)]
pub struct FamilySpec {
    builder: Arc<dyn Fn(f64, f64) -> Surface + Send + Sync>,
    pub lambda_domain: [[f64; 2]; 2],
}

impl FamilySpec {
    pub fn new(
        lambda_domain: [[f64; 2]; 2],
        builder: impl Fn(f64, f64) -> Surface + Send + Sync + 'static,
    ) -> Self {
        assert!(lambda_domain.iter().all(|r| r[0] < r[1]));
        FamilySpec {
            builder: Arc::new(builder),
            lambda_domain,
        }
    }

    pub fn surface_at(&self, lambda1: f64, lambda2: f64) -> Surface {
        (self.builder)(lambda1, lambda2)
    }

    /// The transition model used throughout the tests: a cubic graph with
    /// a = 1 + lambda1, b = 1, c = lambda2 and the u^3 v quartic term, so
    /// the origin stays umbilic for every lambda while a - b = lambda1 and
    /// chi = lambda2 sweep the degenerate strata.
    pub fn model_transition_family(halfwidth: f64, lambda_domain: [[f64; 2]; 2]) -> Self {
        FamilySpec::new(lambda_domain, move |l1, l2| {
            let raw = RawMongeJet5 {
                a: Scalar::from(1.0 + l1),
                b: Scalar::from(1.0),
                c: Scalar::from(l2),
                B: Scalar::from(1.0),
                ..RawMongeJet5::default()
            };
            Surface::from_jet(&raw, halfwidth)
        })
    }

    pub fn from_json_str(text: &str) -> Result<FamilySpec, FamilyError> {
        let doc: FamilyDoc =
            serde_json::from_str(text).map_err(|e| FamilyError::BadDocument(e.to_string()))?;
        doc.build()
    }
}

#[derive(Deserialize, Default, Clone)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
struct JetExprDoc {
    k: Option<CoeffExpr>,
    a: Option<CoeffExpr>,
    bprime: Option<CoeffExpr>,
    b: Option<CoeffExpr>,
    c: Option<CoeffExpr>,
    A: Option<CoeffExpr>,
    B: Option<CoeffExpr>,
    C: Option<CoeffExpr>,
    D: Option<CoeffExpr>,
    E: Option<CoeffExpr>,
    a50: Option<CoeffExpr>,
    a41: Option<CoeffExpr>,
    a32: Option<CoeffExpr>,
    a23: Option<CoeffExpr>,
    a14: Option<CoeffExpr>,
    a05: Option<CoeffExpr>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
#[allow(clippy::large_enum_variant)]
enum FamilyDoc {
    Monge {
        jet: JetExprDoc,
        #[serde(default = "default_halfwidth")]
        halfwidth: f64,
        lambda_domain: [[f64; 2]; 2],
    },
    Ellipsoid {
        semi_axes: [CoeffExpr; 3],
        #[serde(default)]
        chart: EllipsoidChartKind,
        lambda_domain: [[f64; 2]; 2],
    },
    Torus {
        major_radius: CoeffExpr,
        minor_radius: CoeffExpr,
        lambda_domain: [[f64; 2]; 2],
    },
    Biquadratic {
        quadratic: [CoeffExpr; 2],
        quartic: [CoeffExpr; 3],
        #[serde(default = "default_halfwidth")]
        halfwidth: f64,
        lambda_domain: [[f64; 2]; 2],
    },
}

fn default_halfwidth() -> f64 {
    1.0
}

fn check_domain(lambda_domain: [[f64; 2]; 2]) -> Result<(), FamilyError> {
    let ordered = |r: &[f64; 2]| r[0].partial_cmp(&r[1]) == Some(std::cmp::Ordering::Less);
    if !lambda_domain.iter().all(ordered) {
        return Err(FamilyError::BadDocument(
            "lambda_domain ranges must have low < high".into(),
        ));
    }
    Ok(())
}

impl FamilyDoc {
    fn build(self) -> Result<FamilySpec, FamilyError> {
        match self {
            FamilyDoc::Monge {
                jet,
                halfwidth,
                lambda_domain,
            } => {
                check_domain(lambda_domain)?;
                if halfwidth <= 0.0 {
                    return Err(FamilyError::BadDocument("halfwidth must be positive".into()));
                }
                let compile =
                    |c: &Option<CoeffExpr>| c.as_ref().map(|c| c.compile()).transpose();
                let fields = [
                    compile(&jet.k)?,
                    compile(&jet.a)?,
                    compile(&jet.bprime)?,
                    compile(&jet.b)?,
                    compile(&jet.c)?,
                    compile(&jet.A)?,
                    compile(&jet.B)?,
                    compile(&jet.C)?,
                    compile(&jet.D)?,
                    compile(&jet.E)?,
                    compile(&jet.a50)?,
                    compile(&jet.a41)?,
                    compile(&jet.a32)?,
                    compile(&jet.a23)?,
                    compile(&jet.a14)?,
                    compile(&jet.a05)?,
                ];
                Ok(FamilySpec::new(lambda_domain, move |l1, l2| {
                    let at = |i: usize| {
                        Scalar::from(fields[i].as_ref().map_or(0.0, |e| e.eval(l1, l2)))
                    };
                    let raw = RawMongeJet5 {
                        k: at(0),
                        a: at(1),
                        bprime: at(2),
                        b: at(3),
                        c: at(4),
                        A: at(5),
                        B: at(6),
                        C: at(7),
                        D: at(8),
                        E: at(9),
                        a50: at(10),
                        a41: at(11),
                        a32: at(12),
                        a23: at(13),
                        a14: at(14),
                        a05: at(15),
                    };
                    Surface::from_jet(&raw, halfwidth)
                }))
            }
            FamilyDoc::Ellipsoid {
                semi_axes,
                chart,
                lambda_domain,
            } => {
                check_domain(lambda_domain)?;
                let axes = [
                    semi_axes[0].compile()?,
                    semi_axes[1].compile()?,
                    semi_axes[2].compile()?,
                ];
                validate_positive_on_corners(&axes, lambda_domain, "semi-axis")?;
                Ok(FamilySpec::new(lambda_domain, move |l1, l2| {
                    let ax = [
                        axes[0].eval(l1, l2),
                        axes[1].eval(l1, l2),
                        axes[2].eval(l1, l2),
                    ];
                    match chart {
                        EllipsoidChartKind::Graphs => Surface::ellipsoid(ax),
                        EllipsoidChartKind::Geographic => Surface::ellipsoid_geographic(ax),
                    }
                }))
            }
            FamilyDoc::Torus {
                major_radius,
                minor_radius,
                lambda_domain,
            } => {
                check_domain(lambda_domain)?;
                let rr = major_radius.compile()?;
                let r = minor_radius.compile()?;
                validate_positive_on_corners(
                    std::slice::from_ref(&r),
                    lambda_domain,
                    "minor radius",
                )?;
                let gap = Expr::Sub(Box::new(rr.clone()), Box::new(r.clone()));
                validate_positive_on_corners(
                    std::slice::from_ref(&gap),
                    lambda_domain,
                    "major radius minus minor radius",
                )?;
                Ok(FamilySpec::new(lambda_domain, move |l1, l2| {
                    Surface::torus(rr.eval(l1, l2), r.eval(l1, l2))
                }))
            }
            FamilyDoc::Biquadratic {
                quadratic,
                quartic,
                halfwidth,
                lambda_domain,
            } => {
                check_domain(lambda_domain)?;
                if halfwidth <= 0.0 {
                    return Err(FamilyError::BadDocument("halfwidth must be positive".into()));
                }
                let p = [quadratic[0].compile()?, quadratic[1].compile()?];
                let q = [
                    quartic[0].compile()?,
                    quartic[1].compile()?,
                    quartic[2].compile()?,
                ];
                Ok(FamilySpec::new(lambda_domain, move |l1, l2| {
                    Surface::biquadratic(
                        [p[0].eval(l1, l2), p[1].eval(l1, l2)],
                        [q[0].eval(l1, l2), q[1].eval(l1, l2), q[2].eval(l1, l2)],
                        halfwidth,
                    )
                }))
            }
        }
    }
}

fn validate_positive_on_corners(
    exprs: &[Expr],
    dom: [[f64; 2]; 2],
    what: &str,
) -> Result<(), FamilyError> {
    for l1 in [dom[0][0], (dom[0][0] + dom[0][1]) / 2.0, dom[0][1]] {
        for l2 in [dom[1][0], (dom[1][0] + dom[1][1]) / 2.0, dom[1][1]] {
            for e in exprs {
                if e.eval(l1, l2).partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                    return Err(FamilyError::BadDocument(format!(
                        "{what} must stay positive over the lambda domain"
                    )));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Umbilic sheet

#[derive(Clone, Debug)]
pub struct SheetGrid {
    /// Nodes per lambda axis.
    pub lambda_res: [usize; 2],
    /// Per-slice (u, v) scan resolution.
    pub uv_res: usize,
}

impl Default for SheetGrid {
    fn default() -> Self {
        SheetGrid {
            lambda_res: [33, 33],
            uv_res: 24,
        }
    }
}

/// One umbilic of one lambda slice.
#[derive(Clone, Debug, Serialize)]
pub struct SheetVertex {
    pub grid_index: [usize; 2],
    pub lambda: [f64; 2],
    pub chart: usize,
    pub u: f64,
    pub v: f64,
    pub position: [f64; 3],
    pub residual: f64,
    pub class: UmbilicClass,
    pub jet: MongeJet5,
    pub invariants: InvariantReport,
    /// Condition number of the 2x2 umbilicity Jacobian in (u, v);
    /// infinite on degenerate (codimension >= 1) vertices.
    pub jacobian_condition: f64,
}

#[derive(Serialize)]
pub struct UmbilicSheet {
    pub lambda_domain: [[f64; 2]; 2],
    pub lambda_res: [usize; 2],
    pub vertices: Vec<SheetVertex>,
    /// Vertex indices per lambda node, row-major over the grid.
    pub slices: Vec<Vec<usize>>,
    /// Lambda nodes where some chart was flagged non-isolated.
    pub non_isolated: Vec<[usize; 2]>,
}

impl UmbilicSheet {
    pub fn lambda_at(&self, i: usize, j: usize) -> [f64; 2] {
        let d = &self.lambda_domain;
        let n = &self.lambda_res;
        [
            d[0][0] + (d[0][1] - d[0][0]) * i as f64 / (n[0] - 1) as f64,
            d[1][0] + (d[1][1] - d[1][0]) * j as f64 / (n[1] - 1) as f64,
        ]
    }

    fn node(&self, i: usize, j: usize) -> &[usize] {
        &self.slices[i * self.lambda_res[1] + j]
    }
}

struct SliceScan {
    vertices: Vec<SheetVertex>,
    non_isolated: bool,
}

fn condition_number(surface: &Surface, chart: usize, u: f64, v: f64) -> f64 {
    let Ok(jet) = surface.charts[chart].taylor(u, v, 3) else {
        return f64::INFINITY;
    };
    let sys = umbilicity_series(&jet, 1);
    let jac = Matrix2::new(
        sys[0].coeff([1, 0]),
        sys[0].coeff([0, 1]),
        sys[1].coeff([1, 0]),
        sys[1].coeff([0, 1]),
    );
    let sv = jac.svd(false, false).singular_values;
    if sv[1] == 0.0 {
        f64::INFINITY
    } else {
        sv[0] / sv[1]
    }
}

fn scan_slice(
    family: &FamilySpec,
    grid_index: [usize; 2],
    lambda: [f64; 2],
    warm: &[(usize, f64, f64)],
    uv_res: usize,
    tol: &ToleranceContext,
) -> SliceScan {
    let surface = family.surface_at(lambda[0], lambda[1]);
    let scan = find_umbilics(&surface, uv_res, tol);
    let mut vertices: Vec<SheetVertex> = Vec::new();
    let mut push = |chart: usize, u: f64, v: f64, surface: &Surface| {
        let Ok(jet) = surface.charts[chart].taylor(u, v, 0) else {
            return;
        };
        let position = jet.position();
        if vertices.iter().any(|w| {
            (nalgebra::Vector3::from(w.position) - position).norm()
                < 1e-6 * (1.0 + position.norm())
        }) {
            return;
        }
        let Ok(adapted) = adapted_monge_jet(surface.charts[chart].as_ref(), u, v, tol) else {
            return;
        };
        let class = classify(&adapted.jet, tol);
        let invariants = compute_invariants(&adapted.jet);
        let residual = surface.charts[chart]
            .taylor(u, v, 2)
            .map(|j| crate::surfaces::normalized_umbilic_residual(&j))
            .unwrap_or(f64::INFINITY);
        vertices.push(SheetVertex {
            grid_index,
            lambda,
            chart,
            u,
            v,
            position: position.into(),
            residual,
            class,
            jet: adapted.jet,
            invariants,
            jacobian_condition: condition_number(surface, chart, u, v),
        });
    };
    for rec in &scan.umbilics {
        push(rec.chart, rec.u, rec.v, &surface);
    }
    // continuation: polish the neighbors' umbilics into this slice, which
    // catches roots the coarse seeding grid straddles too tightly
    for &(chart, u, v) in warm {
        if chart >= surface.charts.len() || scan.non_isolated_charts.contains(&chart) {
            continue;
        }
        if let Some((ru, rv, _)) = refine_umbilic(surface.charts[chart].as_ref(), u, v) {
            push(chart, ru, rv, &surface);
        }
    }
    SliceScan {
        vertices,
        non_isolated: !scan.non_isolated_charts.is_empty(),
    }
}

/// Meshes the umbilic set of the family over a lambda grid.
///
/// Every lambda node gets a full seeded scan; nodes are processed in
/// anti-diagonal waves so each slice is also warm-started from its two
/// already-finished neighbors.
pub fn umbilic_sheet(family: &FamilySpec, grid: &SheetGrid, tol: &ToleranceContext) -> UmbilicSheet {
    let [n1, n2] = grid.lambda_res;
    assert!(n1 >= 2 && n2 >= 2);
    let mut sheet = UmbilicSheet {
        lambda_domain: family.lambda_domain,
        lambda_res: grid.lambda_res,
        vertices: Vec::new(),
        slices: vec![Vec::new(); n1 * n2],
        non_isolated: Vec::new(),
    };
    let mut cells: Vec<Option<SliceScan>> = (0..n1 * n2).map(|_| None).collect();
    for wave in 0..(n1 + n2 - 1) {
        let todo: Vec<[usize; 2]> = (0..n1)
            .filter_map(|i| {
                let j = wave.checked_sub(i)?;
                (j < n2).then_some([i, j])
            })
            .collect();
        let scans: Vec<([usize; 2], SliceScan)> = todo
            .par_iter()
            .map(|&[i, j]| {
                let mut warm: Vec<(usize, f64, f64)> = Vec::new();
                if i > 0 {
                    if let Some(prev) = &cells[(i - 1) * n2 + j] {
                        warm.extend(prev.vertices.iter().map(|w| (w.chart, w.u, w.v)));
                    }
                }
                if j > 0 {
                    if let Some(prev) = &cells[i * n2 + (j - 1)] {
                        warm.extend(prev.vertices.iter().map(|w| (w.chart, w.u, w.v)));
                    }
                }
                let lambda = sheet.lambda_at(i, j);
                ([i, j], scan_slice(family, [i, j], lambda, &warm, grid.uv_res, tol))
            })
            .collect();
        for ([i, j], scan) in scans {
            cells[i * n2 + j] = Some(scan);
        }
    }
    for (idx, cell) in cells.into_iter().enumerate() {
        let cell = cell.unwrap();
        if cell.non_isolated {
            sheet
                .non_isolated
                .push([idx / n2, idx % n2]);
        }
        for w in cell.vertices {
            sheet.slices[idx].push(sheet.vertices.len());
            sheet.vertices.push(w);
        }
    }
    sheet
}

/// CSV dump of the sheet: columns u, v, lambda1, lambda2, tag.
pub fn sheet_csv(sheet: &UmbilicSheet) -> String {
    let mut out = String::from("u,v,lambda1,lambda2,tag\n");
    for w in &sheet.vertices {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            w.u, w.v, w.lambda[0], w.lambda[1], w.class.tag
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Stratification

/// The defining equations of a stratum, as functions of lambda evaluated
/// at the tracked umbilic of each slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumTarget {
    /// Fiber cubic acquires a multiple root (codim 1).
    DeltaDelta1,
    /// a = b locus with chi nonzero (codim 1).
    AMinusB,
    /// c = 0 and delta1 = 0 (codim 2).
    CAndDelta1,
    /// a = b and chi = 0 (codim 2).
    AMinusBAndChi,
    /// a = 0 and b = 0 (codim 2).
    AAndB,
}

impl StratumTarget {
    fn dimension(&self) -> usize {
        match self {
            StratumTarget::DeltaDelta1 | StratumTarget::AMinusB => 1,
            _ => 2,
        }
    }

    fn equations(&self, inv: &InvariantReport, jet: &MongeJet5) -> [f64; 2] {
        let ab = (&jet.a - &jet.b).to_f64();
        match self {
            StratumTarget::DeltaDelta1 => {
                [inv.delta.to_f64() * inv.delta1.to_f64(), 0.0]
            }
            StratumTarget::AMinusB => [ab, 0.0],
            StratumTarget::CAndDelta1 => [jet.c.to_f64(), inv.delta1.to_f64()],
            StratumTarget::AMinusBAndChi => [ab, inv.chi.to_f64()],
            StratumTarget::AAndB => [jet.a.to_f64(), jet.b.to_f64()],
        }
    }
}

/// One refined point of a stratum, with its re-classified tag.
#[derive(Clone, Debug, Serialize)]
pub struct StratumPoint {
    pub lambda: [f64; 2],
    pub chart: usize,
    pub u: f64,
    pub v: f64,
    pub target: StratumTarget,
    pub tag: UmbilicTag,
    /// Largest |defining equation| at the refined point.
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StratumCurve {
    pub tag: UmbilicTag,
    pub points: Vec<StratumPoint>,
    /// Whether the polyline closes back on itself.
    pub closed: bool,
}

#[derive(Serialize)]
pub struct Strata {
    pub codim1: Vec<StratumCurve>,
    pub codim2: Vec<StratumPoint>,
    /// Sheet vertex indices whose (u, v) umbilicity Jacobian is close to
    /// singular (condition number above 1e8); strata through them are
    /// reported as found, not certified transversal.
    pub degenerate_vertices: Vec<usize>,
}

/// Tracks the umbilic of the slice at `lambda` from a warm start and
/// evaluates the target equations there.
fn equations_at(
    family: &FamilySpec,
    chart: usize,
    warm: (f64, f64),
    lambda: [f64; 2],
    target: StratumTarget,
    tol: &ToleranceContext,
) -> Option<([f64; 2], (f64, f64), MongeJet5)> {
    let surface = family.surface_at(lambda[0], lambda[1]);
    if chart >= surface.charts.len() {
        return None;
    }
    let (u, v, _) = refine_umbilic(surface.charts[chart].as_ref(), warm.0, warm.1)?;
    let adapted = adapted_monge_jet(surface.charts[chart].as_ref(), u, v, tol).ok()?;
    let inv = compute_invariants(&adapted.jet);
    Some((target.equations(&inv, &adapted.jet), (u, v), adapted.jet))
}

/// Newton-polishes a stratum candidate in lambda.
///
/// Codim-1 targets keep `candidate.lambda[1 - axis]`... codim-1 candidates
/// are refined along the grid edge direction given by `axis`; codim-2
/// targets move freely in both parameters. The umbilic is re-tracked at
/// every trial lambda from the candidate's (u, v).
pub fn refine_stratum_point(
    family: &FamilySpec,
    chart: usize,
    warm_uv: (f64, f64),
    lambda0: [f64; 2],
    target: StratumTarget,
    axis: usize,
    tol: &ToleranceContext,
) -> Result<StratumPoint, FamilyError> {
    const MAX_ITERS: usize = 50;
    const RES_TOL: f64 = 1e-10;
    let mut lambda = lambda0;
    let mut warm = warm_uv;
    let dim = target.dimension();
    for it in 0..MAX_ITERS {
        let Some((g, uv, _)) = equations_at(family, chart, warm, lambda, target, tol) else {
            return Err(FamilyError::NoConvergence {
                iterations: it,
                context: "umbilic lost while tracking the stratum".into(),
            });
        };
        warm = uv;
        let res = g[0].abs().max(if dim == 2 { g[1].abs() } else { 0.0 });
        if res < RES_TOL {
            let surface = family.surface_at(lambda[0], lambda[1]);
            let adapted = adapted_monge_jet(surface.charts[chart].as_ref(), uv.0, uv.1, tol)
                .map_err(|e| FamilyError::NoConvergence {
                    iterations: it,
                    context: e.to_string(),
                })?;
            let class = classify(&adapted.jet, tol);
            return Ok(StratumPoint {
                lambda,
                chart,
                u: uv.0,
                v: uv.1,
                target,
                tag: class.tag,
                residual: res,
            });
        }
        // finite-difference Jacobian in the moving parameters
        let mut step = [0.0f64; 2];
        if dim == 1 {
            let h = 1e-6 * (1.0 + lambda[axis].abs());
            let mut lp = lambda;
            lp[axis] += h;
            let mut lm = lambda;
            lm[axis] -= h;
            let (gp, _, _) = equations_at(family, chart, warm, lp, target, tol).ok_or(
                FamilyError::NoConvergence {
                    iterations: it,
                    context: "umbilic lost at a difference stencil".into(),
                },
            )?;
            let (gm, _, _) = equations_at(family, chart, warm, lm, target, tol).ok_or(
                FamilyError::NoConvergence {
                    iterations: it,
                    context: "umbilic lost at a difference stencil".into(),
                },
            )?;
            let dg = (gp[0] - gm[0]) / (2.0 * h);
            if dg == 0.0 {
                return Err(FamilyError::NoConvergence {
                    iterations: it,
                    context: "singular stratum Jacobian".into(),
                });
            }
            step[axis] = g[0] / dg;
        } else {
            let mut jac = Matrix2::zeros();
            for col in 0..2 {
                let h = 1e-6 * (1.0 + lambda[col].abs());
                let mut lp = lambda;
                lp[col] += h;
                let mut lm = lambda;
                lm[col] -= h;
                let (gp, _, _) = equations_at(family, chart, warm, lp, target, tol).ok_or(
                    FamilyError::NoConvergence {
                        iterations: it,
                        context: "umbilic lost at a difference stencil".into(),
                    },
                )?;
                let (gm, _, _) = equations_at(family, chart, warm, lm, target, tol).ok_or(
                    FamilyError::NoConvergence {
                        iterations: it,
                        context: "umbilic lost at a difference stencil".into(),
                    },
                )?;
                jac[(0, col)] = (gp[0] - gm[0]) / (2.0 * h);
                jac[(1, col)] = (gp[1] - gm[1]) / (2.0 * h);
            }
            let rhs = Vector2::new(g[0], g[1]);
            let Some(inv) = jac.try_inverse() else {
                return Err(FamilyError::NoConvergence {
                    iterations: it,
                    context: "singular stratum Jacobian".into(),
                });
            };
            let s = inv * rhs;
            step = [s[0], s[1]];
        }
        lambda[0] -= step[0];
        lambda[1] -= step[1];
    }
    Err(FamilyError::NoConvergence {
        iterations: MAX_ITERS,
        context: format!("target {target:?} residual stayed above {RES_TOL}"),
    })
}

fn straddles(f0: f64, f1: f64) -> bool {
    (f0 <= 0.0 && 0.0 <= f1 || f1 <= 0.0 && 0.0 <= f0) && !(f0 == 0.0 && f1 == 0.0)
}

/// Matches each vertex of node `a` to its mutual nearest neighbor of the
/// same chart in node `b`.
fn matched_pairs(sheet: &UmbilicSheet, a: &[usize], b: &[usize]) -> Vec<(usize, usize)> {
    let nearest = |from: usize, pool: &[usize]| -> Option<usize> {
        pool.iter()
            .copied()
            .filter(|&t| sheet.vertices[t].chart == sheet.vertices[from].chart)
            .min_by(|&x, &y| {
                let d = |t: usize| {
                    let w = &sheet.vertices[t];
                    let f = &sheet.vertices[from];
                    (w.u - f.u).hypot(w.v - f.v)
                };
                d(x).total_cmp(&d(y))
            })
    };
    a.iter()
        .copied()
        .filter_map(|va| {
            let vb = nearest(va, b)?;
            (nearest(vb, a) == Some(va)).then_some((va, vb))
        })
        .collect()
}

/// Scale-aware nonzero test for a weighted invariant.
fn clearly_nonzero(x: &Scalar, scale: f64, weight: i32, tol: &ToleranceContext) -> bool {
    !x.is_zero_scaled(scale.powi(weight), tol)
}

/// Extracts the codimension-1 curves and codimension-2 points of the sheet.
///
/// Candidates come from sign changes of the stratum invariants along mesh
/// edges (codim 1) and simultaneous sign changes on mesh plaquettes
/// (codim 2); every candidate is Newton-refined on its defining equations
/// and re-classified at the refined parameter.
pub fn stratify_sheet(
    family: &FamilySpec,
    sheet: &UmbilicSheet,
    tol: &ToleranceContext,
) -> Strata {
    let [n1, n2] = sheet.lambda_res;
    let mut codim1_raw: Vec<(usize, usize, StratumPoint)> = Vec::new(); // (edge cell i, j)
    let mut codim2: Vec<StratumPoint> = Vec::new();
    let vert = |i: usize| &sheet.vertices[i];

    // --- codim-1 sweep over grid edges
    let mut edge_candidates: Vec<(usize, usize, usize, StratumTarget, usize, usize)> = Vec::new();
    for i in 0..n1 {
        for j in 0..n2 {
            for (axis, (i2, j2)) in [(0, (i + 1, j)), (1, (i, j + 1))] {
                if i2 >= n1 || j2 >= n2 {
                    continue;
                }
                for (va, vb) in matched_pairs(sheet, sheet.node(i, j), sheet.node(i2, j2)) {
                    let (wa, wb) = (vert(va), vert(vb));
                    let (ia, ib) = (&wa.invariants, &wb.invariants);
                    let dd = |w: &InvariantReport| w.delta.to_f64() * w.delta1.to_f64();
                    let ab = |w: &SheetVertex| (&w.jet.a - &w.jet.b).to_f64();
                    if straddles(ab(wa), ab(wb))
                        && clearly_nonzero(&ia.chi, ia.scale, 5, tol)
                        && clearly_nonzero(&ib.chi, ib.scale, 5, tol)
                    {
                        edge_candidates.push((va, vb, axis, StratumTarget::AMinusB, i, j));
                    }
                    if straddles(dd(ia), dd(ib))
                        && wa.class.tag != UmbilicTag::Degenerate
                        && wb.class.tag != UmbilicTag::Degenerate
                    {
                        edge_candidates.push((va, vb, axis, StratumTarget::DeltaDelta1, i, j));
                    }
                }
            }
        }
    }
    for (va, _vb, axis, target, ci, cj) in edge_candidates {
        let wa = vert(va);
        let mid = {
            let mut l = wa.lambda;
            let other = sheet.lambda_at(
                ci + if axis == 0 { 1 } else { 0 },
                cj + if axis == 1 { 1 } else { 0 },
            );
            l[axis] = (l[axis] + other[axis]) / 2.0;
            l
        };
        if let Ok(p) = refine_stratum_point(family, wa.chart, (wa.u, wa.v), mid, target, axis, tol)
        {
            codim1_raw.push((ci, cj, p));
        }
    }

    // --- codim-2 sweep over grid plaquettes
    type PairProbe = fn(&SheetVertex) -> [f64; 2];
    let pair_tests: [(StratumTarget, PairProbe); 3] = [
        (StratumTarget::CAndDelta1, |w| {
            [w.jet.c.to_f64(), w.invariants.delta1.to_f64()]
        }),
        (StratumTarget::AMinusBAndChi, |w| {
            [(&w.jet.a - &w.jet.b).to_f64(), w.invariants.chi.to_f64()]
        }),
        (StratumTarget::AAndB, |w| {
            [w.jet.a.to_f64(), w.jet.b.to_f64()]
        }),
    ];
    for i in 0..n1 - 1 {
        for j in 0..n2 - 1 {
            // track one vertex chain around the plaquette
            let Some(&(v00, v10)) =
                matched_pairs(sheet, sheet.node(i, j), sheet.node(i + 1, j)).first()
            else {
                continue;
            };
            let Some(&(_, v01)) =
                matched_pairs(sheet, sheet.node(i, j), sheet.node(i, j + 1)).first()
            else {
                continue;
            };
            let Some(&(_, v11)) =
                matched_pairs(sheet, sheet.node(i + 1, j), sheet.node(i + 1, j + 1)).first()
            else {
                continue;
            };
            let corners = [v00, v10, v01, v11];
            for (target, eval) in &pair_tests {
                let vals: Vec<[f64; 2]> = corners.iter().map(|&v| eval(vert(v))).collect();
                let crosses = |k: usize| {
                    let lo = vals.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max);
                    lo <= 0.0 && 0.0 <= hi && !(lo == 0.0 && hi == 0.0)
                };
                if !(crosses(0) && crosses(1)) {
                    continue;
                }
                if *target == StratumTarget::AAndB {
                    let ok = corners.iter().all(|&v| {
                        let w = vert(v);
                        clearly_nonzero(&w.invariants.cB, w.invariants.scale, 5, tol)
                    });
                    if !ok {
                        continue;
                    }
                }
                let w = vert(v00);
                let l0 = sheet.lambda_at(i, j);
                let l1 = sheet.lambda_at(i + 1, j + 1);
                let mid = [(l0[0] + l1[0]) / 2.0, (l0[1] + l1[1]) / 2.0];
                if let Ok(p) =
                    refine_stratum_point(family, w.chart, (w.u, w.v), mid, *target, 0, tol)
                {
                    let l_len = (sheet.lambda_domain[0][1] - sheet.lambda_domain[0][0])
                        .hypot(sheet.lambda_domain[1][1] - sheet.lambda_domain[1][0]);
                    let dup = codim2.iter().any(|q| {
                        (q.lambda[0] - p.lambda[0]).hypot(q.lambda[1] - p.lambda[1])
                            < 1e-6 * l_len
                            && q.target == p.target
                    });
                    if !dup {
                        codim2.push(p);
                    }
                }
            }
        }
    }

    // --- link codim-1 edge points into polylines over plaquette adjacency
    let codim1 = link_stratum_curves(sheet, codim1_raw);

    let degenerate_vertices = sheet
        .vertices
        .iter()
        .enumerate()
        .filter(|(_, w)| w.jacobian_condition > 1e8)
        .map(|(i, _)| i)
        .collect();
    Strata {
        codim1,
        codim2,
        degenerate_vertices,
    }
}

/// Chains refined edge points into curves: points on edges of a common
/// plaquette are neighbors.
fn link_stratum_curves(
    sheet: &UmbilicSheet,
    raw: Vec<(usize, usize, StratumPoint)>,
) -> Vec<StratumCurve> {
    let [_, n2] = sheet.lambda_res;
    let d = &sheet.lambda_domain;
    let hx = (d[0][1] - d[0][0]) / (sheet.lambda_res[0] - 1) as f64;
    let hy = (d[1][1] - d[1][0]) / (n2 - 1) as f64;
    // drop near-duplicate refinements of the same geometric point
    let mut points: Vec<StratumPoint> = Vec::new();
    for (_, _, p) in raw {
        let dup = points.iter().any(|q| {
            q.target == p.target
                && (q.lambda[0] - p.lambda[0]).hypot(q.lambda[1] - p.lambda[1])
                    < 1e-6 * hx.hypot(hy)
        });
        if !dup {
            points.push(p);
        }
    }
    let n = points.len();
    // adjacency: same target, lambda distance below ~1.5 grid cells
    let reach = 1.6 * hx.hypot(hy);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for x in 0..n {
        for y in x + 1..n {
            if points[x].target == points[y].target
                && (points[x].lambda[0] - points[y].lambda[0])
                    .hypot(points[x].lambda[1] - points[y].lambda[1])
                    <= reach
            {
                adj[x].push(y);
                adj[y].push(x);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut curves = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        // gather the connected component
        let mut comp = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < comp.len() {
            let x = comp[head];
            head += 1;
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    comp.push(y);
                }
            }
        }
        // order the component by walking from an endpoint (or anywhere on
        // a cycle) to its farthest neighbor chain
        let degree = |x: usize| adj[x].iter().filter(|y| comp.contains(y)).count();
        let first = comp
            .iter()
            .copied()
            .find(|&x| degree(x) <= 1)
            .unwrap_or(comp[0]);
        let mut path = vec![first];
        let mut used = std::collections::HashSet::new();
        used.insert(first);
        loop {
            let last = *path.last().unwrap();
            let next = adj[last]
                .iter()
                .copied()
                .filter(|y| !used.contains(y))
                .min_by(|&x, &y| {
                    let dist = |t: usize| {
                        (points[t].lambda[0] - points[last].lambda[0])
                            .hypot(points[t].lambda[1] - points[last].lambda[1])
                    };
                    dist(x).total_cmp(&dist(y))
                });
            match next {
                Some(y) => {
                    used.insert(y);
                    path.push(y);
                }
                None => break,
            }
        }
        let closed = path.len() > 2 && adj[*path.last().unwrap()].contains(&path[0]);
        // majority tag of the member points names the curve
        let mut tags: Vec<UmbilicTag> = path.iter().map(|&x| points[x].tag).collect();
        tags.sort_by_key(|t| format!("{t:?}"));
        let tag = tags[tags.len() / 2];
        curves.push(StratumCurve {
            tag,
            points: path.iter().map(|&x| points[x].clone()).collect(),
            closed,
        });
    }
    curves
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> ToleranceContext {
        ToleranceContext::default()
    }

    // asymmetric domain so no grid node sits exactly on a stratum; the
    // u^3 v term spawns satellite umbilics at u^2 - lambda2 u - 2 lambda1
    // = 0, so the halfwidth stays below their distance (>= 0.026 on these
    // lambda ranges away from the transition)
    const DOMAIN: [[f64; 2]; 2] = [[-0.013, 0.011], [-0.009, 0.011]];

    fn model_family() -> FamilySpec {
        FamilySpec::model_transition_family(0.02, DOMAIN)
    }

    #[test]
    fn expressions_parse_and_evaluate() {
        let e = parse_expr("1 + lambda1").unwrap();
        assert_eq!(e.eval(0.25, 9.0), 1.25);
        let e = parse_expr("2*lambda2^3 - lambda1/4").unwrap();
        assert_eq!(e.eval(8.0, 2.0), 14.0);
        let e = parse_expr("-(lambda1 - 1)*(lambda2 + 1)").unwrap();
        assert_eq!(e.eval(3.0, 1.0), -4.0);
        let e = parse_expr("1.5e-2").unwrap();
        assert_eq!(e.eval(0.0, 0.0), 0.015);
        let e = parse_expr("(1 + lambda1)^-1").unwrap();
        assert_eq!(e.eval(1.0, 0.0), 0.5);
        assert!(parse_expr("lambda3").is_err());
        assert!(parse_expr("1 +").is_err());
        assert!(parse_expr("2 2").is_err());
        assert!(parse_expr("lambda1^x").is_err());
    }

    #[test]
    fn model_family_keeps_the_origin_umbilic_on_every_slice() {
        let fam = model_family();
        let grid = SheetGrid {
            lambda_res: [7, 7],
            uv_res: 16,
        };
        let sheet = umbilic_sheet(&fam, &grid, &tol());
        assert!(sheet.non_isolated.is_empty());
        for (idx, slice) in sheet.slices.iter().enumerate() {
            assert_eq!(slice.len(), 1, "slice {idx} vertex count");
            let w = &sheet.vertices[slice[0]];
            assert!(w.u.abs() < 1e-9 && w.v.abs() < 1e-9);
            assert!(w.residual <= tol().eps_residual);
            // a - b = lambda1 and chi = lambda2, exactly
            let ab = (&w.jet.a - &w.jet.b).to_f64();
            assert!((ab - w.lambda[0]).abs() < 1e-12);
            assert!((w.invariants.chi.to_f64() - w.lambda[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn model_family_strata_are_the_d1_23_line_and_one_d2_3_point() {
        let fam = model_family();
        let sheet = umbilic_sheet(&fam, &SheetGrid::default(), &tol());
        let strata = stratify_sheet(&fam, &sheet, &tol());

        let d123: Vec<&StratumCurve> = strata
            .codim1
            .iter()
            .filter(|c| c.tag == UmbilicTag::D1_23)
            .collect();
        assert_eq!(d123.len(), 1, "one connected D1_23 curve");
        let curve = d123[0];
        assert!(curve.points.len() >= sheet.lambda_res[1] - 2);
        let mut l2_min = f64::INFINITY;
        let mut l2_max = f64::NEG_INFINITY;
        for p in &curve.points {
            assert!(p.lambda[0].abs() < 1e-9, "on the lambda1 = 0 line");
            assert_eq!(p.tag, UmbilicTag::D1_23);
            l2_min = l2_min.min(p.lambda[1]);
            l2_max = l2_max.max(p.lambda[1]);
        }
        assert!(l2_min < 0.0 && l2_max > 0.0, "curve spans both chi signs");

        assert_eq!(strata.codim2.len(), 1, "a single codim-2 point");
        let p = &strata.codim2[0];
        assert_eq!(p.target, StratumTarget::AMinusBAndChi);
        assert_eq!(p.tag, UmbilicTag::D2_3);
        assert!(p.lambda[0].abs() < 1e-8 && p.lambda[1].abs() < 1e-8);
        assert!(p.residual < 1e-10);
    }

    #[test]
    fn codim2_point_is_stable_under_grid_refinement() {
        let fam = model_family();
        let coarse = umbilic_sheet(
            &fam,
            &SheetGrid {
                lambda_res: [17, 17],
                uv_res: 16,
            },
            &tol(),
        );
        let fine = umbilic_sheet(
            &fam,
            &SheetGrid {
                lambda_res: [33, 33],
                uv_res: 16,
            },
            &tol(),
        );
        let pc = &stratify_sheet(&fam, &coarse, &tol()).codim2[0];
        let pf = &stratify_sheet(&fam, &fine, &tol()).codim2[0];
        let moved = (pc.lambda[0] - pf.lambda[0]).hypot(pc.lambda[1] - pf.lambda[1]);
        assert!(moved < 1e-9, "moved {moved}");
    }

    #[test]
    fn constant_ellipsoid_family_is_a_product_sheet() {
        let fam = FamilySpec::new([[-1.0, 1.0], [-1.0, 1.0]], |_, _| {
            Surface::ellipsoid([3.0, 2.0, 1.0])
        });
        let grid = SheetGrid {
            lambda_res: [3, 3],
            uv_res: 48,
        };
        let sheet = umbilic_sheet(&fam, &grid, &tol());
        for slice in &sheet.slices {
            assert_eq!(slice.len(), 4);
            for &w in slice {
                assert_eq!(sheet.vertices[w].class.tag, UmbilicTag::D1);
            }
        }
        let strata = stratify_sheet(&fam, &sheet, &tol());
        assert!(strata.codim1.is_empty());
        assert!(strata.codim2.is_empty());
        assert!(strata.degenerate_vertices.is_empty());
        // generic vertices: well-conditioned umbilic systems
        assert!(sheet
            .vertices
            .iter()
            .all(|w| w.jacobian_condition < 1e8));
    }

    #[test]
    fn sphere_family_reports_non_isolated_slices() {
        let fam = FamilySpec::from_json_str(
            r#"{"type": "ellipsoid",
                "semi_axes": ["1 + 0.1*lambda1", "1 + 0.1*lambda1", "1 + 0.1*lambda1"],
                "lambda_domain": [[-1, 1], [-1, 1]]}"#,
        )
        .unwrap();
        let grid = SheetGrid {
            lambda_res: [3, 2],
            uv_res: 16,
        };
        let sheet = umbilic_sheet(&fam, &grid, &tol());
        assert_eq!(sheet.non_isolated.len(), 6, "every slice is degenerate");
        assert!(sheet.vertices.is_empty());
        let strata = stratify_sheet(&fam, &sheet, &tol());
        assert!(strata.codim1.is_empty() && strata.codim2.is_empty());
    }

    #[test]
    fn transversal_a_equals_2b_crossing_yields_one_d1_2_curve() {
        // a = 2 + lambda1, b = 1, c = 1: delta1 = lambda1, delta = 1 - 4 lambda1
        let fam = FamilySpec::from_json_str(
            r#"{"type": "monge",
                "jet": {"a": "2 + lambda1", "b": 1, "c": 1},
                "halfwidth": 0.4,
                "lambda_domain": [[-0.053, 0.047], [-0.045, 0.055]]}"#,
        )
        .unwrap();
        let sheet = umbilic_sheet(
            &fam,
            &SheetGrid {
                lambda_res: [17, 9],
                uv_res: 16,
            },
            &tol(),
        );
        let strata = stratify_sheet(&fam, &sheet, &tol());
        let d12: Vec<&StratumCurve> = strata
            .codim1
            .iter()
            .filter(|c| c.tag == UmbilicTag::D1_2)
            .collect();
        assert_eq!(d12.len(), 1);
        for p in &d12[0].points {
            assert!(p.lambda[0].abs() < 1e-9);
            assert_eq!(p.tag, UmbilicTag::D1_2);
        }
        assert!(strata.codim2.is_empty());
    }

    #[test]
    fn stratum_refinement_respects_the_spec_contract() {
        let fam = model_family();
        // seed near the codim-2 point converges to the origin
        let p = refine_stratum_point(
            &fam,
            0,
            (0.0, 0.0),
            [1e-3, -2e-3],
            StratumTarget::AMinusBAndChi,
            0,
            &tol(),
        )
        .unwrap();
        assert!(p.lambda[0].abs() < 1e-10 && p.lambda[1].abs() < 1e-10);
        assert_eq!(p.tag, UmbilicTag::D2_3);

        // exact-on-stratum seed comes back unchanged
        let q = refine_stratum_point(
            &fam,
            0,
            (0.0, 0.0),
            [0.0, 0.005],
            StratumTarget::AMinusB,
            0,
            &tol(),
        )
        .unwrap();
        assert_eq!(q.lambda, [0.0, 0.005]);
        assert_eq!(q.tag, UmbilicTag::D1_23);

        // a family that never meets the stratum cannot converge
        let far = FamilySpec::from_json_str(
            r#"{"type": "monge",
                "jet": {"a": "3 + lambda1", "b": 1, "c": 1},
                "halfwidth": 0.4,
                "lambda_domain": [[-0.05, 0.05], [-0.05, 0.05]]}"#,
        )
        .unwrap();
        let err = refine_stratum_point(
            &far,
            0,
            (0.0, 0.0),
            [0.01, 0.01],
            StratumTarget::AMinusBAndChi,
            0,
            &tol(),
        );
        assert!(matches!(err, Err(FamilyError::NoConvergence { .. })));
        // and its sheet has no strata at all
        let sheet = umbilic_sheet(
            &far,
            &SheetGrid {
                lambda_res: [5, 5],
                uv_res: 16,
            },
            &tol(),
        );
        let strata = stratify_sheet(&far, &sheet, &tol());
        assert!(strata.codim1.is_empty() && strata.codim2.is_empty());
    }

    #[test]
    fn family_documents_validate() {
        assert!(FamilySpec::from_json_str(r#"{"type": "monge"}"#).is_err());
        assert!(FamilySpec::from_json_str(
            r#"{"type": "monge", "jet": {"a": "lambda7"},
                "lambda_domain": [[0, 1], [0, 1]]}"#
        )
        .is_err());
        assert!(FamilySpec::from_json_str(
            r#"{"type": "ellipsoid", "semi_axes": ["lambda1", 1, 1],
                "lambda_domain": [[-1, 1], [-1, 1]]}"#
        )
        .is_err());
        assert!(FamilySpec::from_json_str(
            r#"{"type": "torus", "major_radius": 2, "minor_radius": 1,
                "lambda_domain": [[1, 0], [0, 1]]}"#
        )
        .is_err());
        let fam = FamilySpec::from_json_str(
            r#"{"type": "torus", "major_radius": "2 + lambda1", "minor_radius": 0.5,
                "lambda_domain": [[-0.5, 0.5], [0, 1]]}"#,
        )
        .unwrap();
        let s = fam.surface_at(0.25, 0.0);
        assert_eq!(s.charts.len(), 1);
    }

    #[test]
    fn sheet_csv_has_one_row_per_vertex() {
        let fam = model_family();
        let sheet = umbilic_sheet(
            &fam,
            &SheetGrid {
                lambda_res: [3, 3],
                uv_res: 16,
            },
            &tol(),
        );
        let csv = sheet_csv(&sheet);
        assert_eq!(csv.lines().count(), 1 + sheet.vertices.len());
        assert!(csv.starts_with("u,v,lambda1,lambda2,tag\n"));
    }
}
