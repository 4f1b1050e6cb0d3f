//! Classification of umbilic points up to codimension two.
//!
//! The decision tree works on the cubic part (a, b, c) of an adapted jet and,
//! on the degenerate strata, on the higher invariants chi and xi. Every zero
//! test is either exact (rational entries) or scale-free: a quantity of
//! homogeneity weight w is compared against eps_zero * scale^w, where scale is
//! the jet magnitude in curvature units.

use crate::jets::MongeJet5;
use crate::scalar::{Scalar, ToleranceContext};
use serde::Serialize;
use std::fmt;

/// The classified umbilic types plus the catch-all for higher codimension.
#[allow(non_camel_case_types)]
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum UmbilicTag {
    D1,
    D2,
    D3,
    D1_2,
    D1_23,
    D2_1,
    D2_2P,
    D2_3,
    D2_2H,
    #[serde(rename = "DEGENERATE")]
    Degenerate,
}

impl UmbilicTag {
    /// Codimension of the type in the space of jets; 3 stands for "3 or more"
    /// (the DEGENERATE strata are not separated further).
    pub fn codimension(self) -> u8 {
        match self {
            UmbilicTag::D1 | UmbilicTag::D2 | UmbilicTag::D3 => 0,
            UmbilicTag::D1_2 | UmbilicTag::D1_23 => 1,
            UmbilicTag::D2_1 | UmbilicTag::D2_2P | UmbilicTag::D2_3 | UmbilicTag::D2_2H => 2,
            UmbilicTag::Degenerate => 3,
        }
    }
}

impl fmt::Display for UmbilicTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            UmbilicTag::D1 => "D1",
            UmbilicTag::D2 => "D2",
            UmbilicTag::D3 => "D3",
            UmbilicTag::D1_2 => "D1_2",
            UmbilicTag::D1_23 => "D1_23",
            UmbilicTag::D2_1 => "D2_1",
            UmbilicTag::D2_2P => "D2_2P",
            UmbilicTag::D2_3 => "D2_3",
            UmbilicTag::D2_2H => "D2_2H",
            UmbilicTag::Degenerate => "DEGENERATE",
        };
        f.write_str(s)
    }
}

/// One guard evaluation along the decision path.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostic {
    pub condition: String,
    pub value: Scalar,
    pub verdict: String,
}

/// The decided type with the guard trail that produced it.
#[derive(Clone, Debug, Serialize)]
pub struct UmbilicClass {
    pub tag: UmbilicTag,
    /// Names the violated or undecidable stratum when tag is DEGENERATE.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub codimension: u8,
    pub diagnostics: Vec<Diagnostic>,
}

/// All classification invariants of a normalized jet.
///
/// `scale` is the jet magnitude used for scale-free zero tests downstream
/// (each invariant has a homogeneity weight: delta1 and the cubic entries
/// weigh 2, tau/delta weigh 4, chi/cB/aD weigh 5, xi weighs 8).
#[allow(non_snake_case)]
#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    pub T: Scalar,
    pub delta1: Scalar,
    pub tau: Scalar,
    pub delta: Scalar,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_ab: Option<Scalar>,
    pub chi: Scalar,
    pub xi: Scalar,
    pub cB: Scalar,
    pub aD: Scalar,
    pub scale: f64,
}

/// Populate every invariant from the jet entries.
///
/// T = tau = b(b-a), delta1 = a-2b, delta = c^2 - 4b(a-2b),
/// chi = cB - (C - A + 2k^3) b,
/// xi = 12 k^2 b^3 + (a32 - a50) b^2 + (3B^2 - 3BD - c a41) b + 3cB(C - k^3).
/// ratio_ab is present only when b is not strictly zero.
pub fn compute_invariants(jet: &MongeJet5) -> InvariantReport {
    let b_minus_a = &jet.b - &jet.a;
    let t = &jet.b * &b_minus_a;
    let two = Scalar::from_int(2);
    let three = Scalar::from_int(3);
    let delta1 = &jet.a - &(&two * &jet.b);
    let delta = &(&jet.c * &jet.c) - &(&(&Scalar::from_int(4) * &jet.b) * &delta1);
    let ratio_ab = if jet.b.is_zero_strict() {
        None
    } else {
        Some(&jet.a / &jet.b)
    };
    let k3 = jet.k.powi(3);
    let c_b = &jet.c * &jet.B;
    let chi = &c_b - &(&(&(&jet.C - &jet.A) + &(&two * &k3)) * &jet.b);
    let b2 = &jet.b * &jet.b;
    let b3 = &b2 * &jet.b;
    let k2 = &jet.k * &jet.k;
    let xi_1 = &(&Scalar::from_int(12) * &k2) * &b3;
    let xi_2 = &(&jet.a32 - &jet.a50) * &b2;
    let xi_3 = &(&(&(&three * &jet.B) * &jet.B) - &(&(&three * &jet.B) * &jet.D))
        - &(&jet.c * &jet.a41);
    let xi_4 = &(&three * &c_b) * &(&jet.C - &k3);
    let xi = &(&(&xi_1 + &xi_2) + &(&xi_3 * &jet.b)) + &xi_4;
    InvariantReport {
        T: t.clone(),
        delta1,
        tau: t,
        delta,
        ratio_ab,
        chi,
        xi,
        cB: c_b,
        aD: &jet.a * &jet.D,
        scale: jet.scale(),
    }
}

/// Sign vector of the stratifying invariants and the strata the jet lies on.
#[derive(Clone, Debug, Serialize)]
pub struct StrataMembership {
    pub delta1: i8,
    pub tau: i8,
    pub delta: i8,
    pub chi: i8,
    pub xi: i8,
    pub strata: Vec<String>,
}

/// Tolerance-aware signs of (delta1, tau, delta, chi, xi) with the vanishing
/// ones reported as strata.
pub fn strata_membership(report: &InvariantReport, tol: &ToleranceContext) -> StrataMembership {
    let s = report.scale;
    let w = |k: i32| s.powi(k);
    let entries = [
        ("delta1", &report.delta1, w(2)),
        ("tau", &report.tau, w(4)),
        ("delta", &report.delta, w(4)),
        ("chi", &report.chi, w(5)),
        ("xi", &report.xi, w(8)),
    ];
    let signs: Vec<i8> = entries
        .iter()
        .map(|(_, v, scale)| v.signum_scaled(*scale, tol))
        .collect();
    let strata = entries
        .iter()
        .zip(&signs)
        .filter(|(_, sg)| **sg == 0)
        .map(|((name, _, _), _)| format!("{name}=0"))
        .collect();
    StrataMembership {
        delta1: signs[0],
        tau: signs[1],
        delta: signs[2],
        chi: signs[3],
        xi: signs[4],
        strata,
    }
}

struct Guards<'a> {
    report: InvariantReport,
    tol: &'a ToleranceContext,
    trail: Vec<Diagnostic>,
}

impl<'a> Guards<'a> {
    /// Sign of `value`, whose homogeneity weight is `weight`, recorded in the
    /// diagnostic trail.
    fn sign(&mut self, name: &str, value: &Scalar, weight: i32) -> i8 {
        let sg = value.signum_scaled(self.report.scale.powi(weight), self.tol);
        self.trail.push(Diagnostic {
            condition: name.to_string(),
            value: value.clone(),
            verdict: match sg {
                0 => "zero".to_string(),
                1 => "positive".to_string(),
                _ => "negative".to_string(),
            },
        });
        sg
    }

    fn done(self, tag: UmbilicTag, reason: Option<&str>) -> UmbilicClass {
        UmbilicClass {
            tag,
            reason: reason.map(str::to_string),
            codimension: tag.codimension(),
            diagnostics: self.trail,
        }
    }
}

/// Decide the umbilic type of a normalized jet.
///
/// Tree: cubic part zero is stratum Q. With b(b-a) != 0 the generic types are
/// decided by delta and a/b; the boundary delta=0 or a=2b splits into D2_1
/// (c=0, the more degenerate case, wins) and D1_2. On a=b != 0 the invariant
/// chi separates D1_23 from the codimension-two pair D2_2p/D2_3 decided by
/// the sign of b*xi; xi=0 is stratum Z and B=0 is flagged as the W stratum
/// diagnostic without blocking the xi decision. The hyperbolic-form stratum
/// D2_2h is a=b=0 with cB != 0, or the mirror chart b=c=0 with aD != 0.
pub fn classify(jet: &MongeJet5, tol: &ToleranceContext) -> UmbilicClass {
    let mut g = Guards {
        report: compute_invariants(jet),
        tol,
        trail: Vec::new(),
    };
    let a_sign = g.sign("a", &jet.a, 2);
    let b_sign = g.sign("b", &jet.b, 2);
    let c_sign = g.sign("c", &jet.c, 2);
    if a_sign == 0 && b_sign == 0 && c_sign == 0 {
        return g.done(UmbilicTag::Degenerate, Some("cubic part zero: stratum Q"));
    }

    if b_sign != 0 {
        let a_minus_b = &jet.a - &jet.b;
        let ab_sign = g.sign("a-b", &a_minus_b, 2);
        if ab_sign != 0 {
            // Generic Darbouxian region: T = b(b-a) != 0.
            let delta_sign = g.sign("delta", &g.report.delta.clone(), 4);
            if delta_sign < 0 {
                return g.done(UmbilicTag::D1, None);
            }
            // a/b < 1 tested as a sign product to avoid the division.
            let ratio_test = &a_minus_b * &jet.b;
            let ratio_sign = g.sign("(a-b)*b", &ratio_test, 4);
            if ratio_sign < 0 {
                return g.done(UmbilicTag::D3, None);
            }
            let delta1_sign = g.sign("delta1", &g.report.delta1.clone(), 2);
            if delta_sign > 0 && delta1_sign != 0 {
                return g.done(UmbilicTag::D2, None);
            }
            // Boundary: delta = 0 or a = 2b.
            if c_sign == 0 {
                if delta1_sign == 0 {
                    return g.done(UmbilicTag::D2_1, None);
                }
                // delta = c^2 - 4b*delta1 = -4b*delta1 cannot vanish here
                // exactly; reaching this means the tolerance calls are
                // mutually inconsistent.
                return g.done(
                    UmbilicTag::Degenerate,
                    Some("boundary with c=0 but a!=2b: inconsistent zero tests"),
                );
            }
            return g.done(UmbilicTag::D1_2, None);
        }
        // a = b != 0.
        let chi_sign = g.sign("chi", &g.report.chi.clone(), 5);
        if chi_sign != 0 {
            return g.done(UmbilicTag::D1_23, None);
        }
        // chi = 0: the xi sign decides; B = 0 additionally flags stratum W.
        if g.sign("B", &jet.B, 3) == 0 {
            g.trail.push(Diagnostic {
                condition: "stratum W flag".to_string(),
                value: jet.B.clone(),
                verdict: "a=b, B=0: stratum W".to_string(),
            });
        }
        let bxi = &jet.b * &g.report.xi.clone();
        let bxi_sign = g.sign("b*xi", &bxi, 10);
        return match bxi_sign {
            -1 => g.done(UmbilicTag::D2_2P, None),
            1 => g.done(UmbilicTag::D2_3, None),
            _ => g.done(UmbilicTag::Degenerate, Some("a=b, chi=0, xi=0: stratum Z")),
        };
    }

    // b = 0.
    if a_sign == 0 {
        let cb_sign = g.sign("c*B", &g.report.cB.clone(), 5);
        if cb_sign != 0 {
            return g.done(UmbilicTag::D2_2H, None);
        }
        return g.done(
            UmbilicTag::Degenerate,
            Some("a=b=0, cB=0: beyond codimension two"),
        );
    }
    if c_sign == 0 {
        let ad_sign = g.sign("a*D", &g.report.aD.clone(), 5);
        if ad_sign != 0 {
            return g.done(UmbilicTag::D2_2H, None);
        }
        return g.done(
            UmbilicTag::Degenerate,
            Some("b=c=0, aD=0: beyond codimension two"),
        );
    }
    g.done(
        UmbilicTag::Degenerate,
        Some("b=0 with a!=0 and c!=0: outside the classified strata"),
    )
}

/// One reference jet per classified type, exact rational entries. The cubic
/// types vary only (a, b, c); the codimension-two types need a quartic or
/// quintic coefficient to land on the right side of the chi/xi inequalities.
pub fn reference_jets() -> Vec<(MongeJet5, UmbilicTag)> {
    let s = Scalar::from_int;
    let cubic = |a: Scalar, b: Scalar, c: Scalar| MongeJet5 {
        a,
        b,
        c,
        ..MongeJet5::default()
    };
    vec![
        (cubic(s(4), s(1), s(0)), UmbilicTag::D1),
        (cubic(Scalar::ratio(3, 2), s(1), s(1)), UmbilicTag::D2),
        (cubic(s(0), s(1), s(0)), UmbilicTag::D3),
        (cubic(s(2), s(1), s(1)), UmbilicTag::D1_2),
        (cubic(s(2), s(1), s(0)), UmbilicTag::D2_1),
        (
            MongeJet5 {
                a: s(1),
                b: s(1),
                c: s(1),
                B: s(1),
                ..MongeJet5::default()
            },
            UmbilicTag::D1_23,
        ),
        (
            MongeJet5 {
                a: s(1),
                b: s(1),
                c: s(1),
                a32: s(1),
                ..MongeJet5::default()
            },
            UmbilicTag::D2_3,
        ),
        (
            MongeJet5 {
                a: s(1),
                b: s(1),
                c: s(1),
                a32: s(-1),
                ..MongeJet5::default()
            },
            UmbilicTag::D2_2P,
        ),
        (
            MongeJet5 {
                c: s(1),
                B: s(1),
                ..MongeJet5::default()
            },
            UmbilicTag::D2_2H,
        ),
    ]
}
