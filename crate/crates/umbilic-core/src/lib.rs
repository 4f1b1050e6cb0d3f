//! Classification and phase-portrait analysis of umbilic points on smooth
//! surfaces in 3-space.
//!
//! The crate is organized around a pipeline:
//!
//! * [`jets`]: adapted Monge jets of order 5, frame-rotation normalization,
//!   fundamental forms, and the degree-3 expansions of the curvature-line
//!   equation coefficients L, M, N.
//! * [`classifier`]: the algebraic invariants (delta, delta1, tau, chi, xi, ...)
//!   and the decision tree assigning one of the umbilic types D1, D2, D3,
//!   D1_2, D1_23, D2_1, D2_2P, D2_3, D2_2H up to codimension two.
//! * [`liecartan`]: the Lie-Cartan suspension of the curvature-line equation in
//!   both projective charts, its singular points, linearizations, Hessian/Morse
//!   analysis, the center-curve degeneracy test, and the weighted blow-up used
//!   for the hyperbolic codimension-two point.
//! * [`surfaces`]: order-5 Taylor evaluation of parametric immersions, built-in
//!   surfaces, umbilic detection, and extraction of the adapted Monge jet at a
//!   detected umbilic.
//! * [`tracer`]: numerical integration of the two principal foliations,
//!   separatrix census, and the umbilic index.
//! * [`family`]: scanning a two-parameter family of immersions for the
//!   stratified umbilic sheet (codimension-1 curves, codimension-2 points).
//!
//! Scalars are either exact rationals or `f64` (see [`scalar::Scalar`]); the
//! classification logic runs in both modes, with floating-point zero tests
//! routed through [`scalar::ToleranceContext`].

pub mod classifier;
pub mod family;
pub mod liecartan;
pub mod jets;
pub mod poly;
pub mod scalar;
pub mod surfaces;
pub mod taylor;
pub mod tracer;
