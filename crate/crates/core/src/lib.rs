#![cfg_attr(not(feature = "std"), no_std)]
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::redundant_guards,
    clippy::should_implement_trait,
    clippy::type_complexity
)]
//! Flow-based Sobolev and Besov tools for step-2 bracket-generating frames.

extern crate alloc;

pub mod basis;
pub mod domain;
pub mod error;
pub mod expr;
pub mod field;
pub mod flows;
pub mod geometry;
pub mod linalg;
pub mod mpoly;
pub mod norms;
pub mod ode;
pub mod poly;
pub mod quad;
pub mod scalar;
pub mod traceops;

pub use basis::{check_step2, complete_basis, Basis, Step2Check};
pub use error::{Error, Result};
pub use expr::Expr;
pub use field::{lie_bracket, VectorField};
pub use geometry::Aabb;
pub use ode::{FlowMethod, FlowSolverConfig};
pub use scalar::{Bump, ExprField, ScalarField, SharedField, Smoothness};
