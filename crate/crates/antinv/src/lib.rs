//! Construction and verification toolkit for almost complex structures and
//! their closed anti-invariant 2-forms.
//!
//! The crate has two halves:
//!
//! * an exact layer of symbolic scalar expressions ([`symexpr`]), graded
//!   exterior algebra over a coframe ([`forms`]), and endomorphism fields with
//!   Nijenhuis/projection machinery ([`acs`]), used to verify identities such
//!   as closedness of explicit form families on ℝ⁴ ([`r4family`]), on the
//!   Kodaira–Thurston nilmanifold ([`nilmanifold`]), and on 6-dimensional
//!   product charts ([`product6d`]);
//! * a numerical layer ([`kernel`]) that discretizes the first-order
//!   closedness system on a periodic grid and estimates the dimension of its
//!   solution space from the singular spectrum.
//!
//! Symbolic identity claims are backed by seeded-random sampling
//! ([`symexpr::is_zero`]); numerical claims are backed by a dense spectral
//! oracle cross-checking the matrix-free estimator. The [`verification`]
//! module bundles the full battery of built-in checks.

// Index loops mirror the tensor index notation throughout the numeric code,
// and the expression constructors are deliberately named after the algebra.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::should_implement_trait)]

pub mod acs;
pub mod forms;
pub mod kernel;
pub mod nilmanifold;
pub mod product6d;
pub mod r4family;
pub mod symexpr;
pub mod verification;
