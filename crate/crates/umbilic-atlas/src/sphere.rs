//! Stratification of the unit sphere of cubic coefficients (a, b, c).
//!
//! Away from the zero sets of delta1 = a - 2b, tau = b(b - a), and
//! delta = c^2 - 4b(a - 2b) every point of the sphere is a Darbouxian
//! cubic jet; the map samples an equirectangular grid, classifies each
//! cell center, and extracts the three zero sets as marching-squares
//! segments for the overlay.

use std::collections::BTreeMap;
use umbilic_core::classifier::{classify, UmbilicTag};
use umbilic_core::jets::MongeJet5;
use umbilic_core::scalar::{Scalar, ToleranceContext};

pub struct SphereCell {
    /// Longitude and latitude of the cell center.
    pub phi: f64,
    pub psi: f64,
    pub abc: [f64; 3],
    /// delta1, tau, delta at the center.
    pub forms: [f64; 3],
    pub tag: UmbilicTag,
}

pub struct SphereMap {
    /// Latitude cells; longitude has twice as many.
    pub rows: usize,
    pub cols: usize,
    /// Row-major, northernmost row first.
    pub cells: Vec<SphereCell>,
    /// Zero-set segments of delta1, tau, delta in (phi, psi) coordinates.
    pub contours: [Vec<[[f64; 2]; 2]>; 3],
}

fn abc_at(phi: f64, psi: f64) -> [f64; 3] {
    [
        psi.cos() * phi.cos(),
        psi.cos() * phi.sin(),
        psi.sin(),
    ]
}

fn forms_at(abc: [f64; 3]) -> [f64; 3] {
    let [a, b, c] = abc;
    [a - 2.0 * b, b * (b - a), c * c - 4.0 * b * (a - 2.0 * b)]
}

pub fn stratified_sphere(resolution: usize, tol: &ToleranceContext) -> SphereMap {
    use std::f64::consts::{FRAC_PI_2, PI};
    let rows = resolution;
    let cols = 2 * resolution;
    let phi_at = |i: f64| -PI + 2.0 * PI * i / cols as f64;
    let psi_at = |j: f64| FRAC_PI_2 - PI * j / rows as f64;

    let mut cells = Vec::with_capacity(rows * cols);
    for j in 0..rows {
        for i in 0..cols {
            let (phi, psi) = (phi_at(i as f64 + 0.5), psi_at(j as f64 + 0.5));
            let abc = abc_at(phi, psi);
            let jet = MongeJet5 {
                a: Scalar::Float(abc[0]),
                b: Scalar::Float(abc[1]),
                c: Scalar::Float(abc[2]),
                ..MongeJet5::default()
            };
            cells.push(SphereCell {
                phi,
                psi,
                abc,
                forms: forms_at(abc),
                tag: classify(&jet, tol).tag,
            });
        }
    }

    // node grid for the contour overlay
    let mut nodes = vec![[0.0f64; 3]; (cols + 1) * (rows + 1)];
    for j in 0..=rows {
        for i in 0..=cols {
            nodes[j * (cols + 1) + i] = forms_at(abc_at(phi_at(i as f64), psi_at(j as f64)));
        }
    }
    let contours = std::array::from_fn(|k| {
        let mut segments = Vec::new();
        for j in 0..rows {
            for i in 0..cols {
                let f = [
                    nodes[j * (cols + 1) + i][k],
                    nodes[j * (cols + 1) + i + 1][k],
                    nodes[(j + 1) * (cols + 1) + i + 1][k],
                    nodes[(j + 1) * (cols + 1) + i][k],
                ];
                let x = [phi_at(i as f64), phi_at(i as f64 + 1.0)];
                let y = [psi_at(j as f64), psi_at(j as f64 + 1.0)];
                cell_segments(f, x, y, &mut segments);
            }
        }
        segments
    });

    SphereMap {
        rows,
        cols,
        cells,
        contours,
    }
}

/// Marching squares on one cell; corner order 00, 10, 11, 01 with
/// x = (x0, x1), y = (y0, y1) the corner coordinates.
fn cell_segments(f: [f64; 4], x: [f64; 2], y: [f64; 2], out: &mut Vec<[[f64; 2]; 2]>) {
    let inside = |v: f64| v < 0.0;
    let corners = [
        [x[0], y[0]],
        [x[1], y[0]],
        [x[1], y[1]],
        [x[0], y[1]],
    ];
    // edge k joins corner k and corner (k+1) % 4
    let mut crossings: Vec<[f64; 2]> = Vec::with_capacity(4);
    let mut edges: Vec<usize> = Vec::with_capacity(4);
    for k in 0..4 {
        let (f0, f1) = (f[k], f[(k + 1) % 4]);
        if inside(f0) != inside(f1) {
            let t = f0 / (f0 - f1);
            let (p0, p1) = (corners[k], corners[(k + 1) % 4]);
            crossings.push([p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])]);
            edges.push(k);
        }
    }
    match crossings.len() {
        2 => out.push([crossings[0], crossings[1]]),
        4 => {
            // saddle cell: the center sample decides the pairing
            let center = (f[0] + f[1] + f[2] + f[3]) / 4.0;
            // crossings come in edge order 0,1,2,3; pair each crossing with
            // the neighbor that bounds a region matching the center sign
            if inside(center) == inside(f[0]) {
                out.push([crossings[0], crossings[3]]);
                out.push([crossings[1], crossings[2]]);
            } else {
                out.push([crossings[0], crossings[1]]);
                out.push([crossings[2], crossings[3]]);
            }
            let _ = edges;
        }
        _ => {}
    }
}

impl SphereMap {
    pub fn tag_histogram(&self) -> BTreeMap<String, usize> {
        let mut hist = BTreeMap::new();
        for cell in &self.cells {
            *hist.entry(cell.tag.to_string()).or_insert(0) += 1;
        }
        hist
    }
}

pub fn sphere_csv(map: &SphereMap) -> String {
    let mut out = String::from("phi,psi,a,b,c,delta1,tau,delta,tag\n");
    for cell in &map.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            cell.phi,
            cell.psi,
            cell.abc[0],
            cell.abc[1],
            cell.abc[2],
            cell.forms[0],
            cell.forms[1],
            cell.forms[2],
            cell.tag
        ));
    }
    out
}
