//! Adaptive mixed discontinuous Galerkin solver for the Oseen eigenvalue
//! problem
//!
//! ```text
//!   -mu * lap(u) + (beta . grad) u + grad p = lambda * u   in Omega
//!                                    div u  = 0            in Omega
//!                                        u  = 0            on the boundary
//! ```
//!
//! with `beta` a divergence-free convection field. The velocity is
//! discretized with broken `P_k` elements (componentwise), the pressure with
//! broken `P_{k-1}`, coupled by a symmetric interior-penalty form with an
//! extra convective jump term that makes the formulation adjoint consistent.
//! The discrete problem is a real generalized eigenproblem
//! `K x = lambda * Mhat x` over a saddle-point matrix `K` and a velocity mass
//! matrix `Mhat`, solved by shift-invert Arnoldi on top of a sparse LU.
//!
//! The crate covers the full adaptive pipeline: structured simplicial meshes
//! for four benchmark domains, conforming bisection refinement, residual
//! a-posteriori indicators for primal and adjoint eigenpairs, Doerfler
//! marking, and the solve-estimate-mark-refine loop, plus the experiment
//! drivers (uniform convergence tables, adaptive error traces, SVG plots)
//! used by the companion CLI.

pub mod adaptivity;
pub mod assembly;
pub mod dg_space;
pub mod eigensolver;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod mesh;
pub mod quadrature;
pub mod sparse;

pub use error::{Error, Result};

/// Complex scalar used for eigenvalues and eigenvector coefficients.
pub type Complex = num_complex::Complex64;
