//! Network slicing optimization toolkit.
//!
//! `slicekit` builds, solves, validates, and benchmarks mixed-integer linear
//! programs for the joint VNF placement and traffic routing problem: a set of
//! services, each with an ordered chain of virtual network functions, must be
//! mapped onto the cloud nodes of a substrate network and their traffic routed
//! over (possibly) multiple paths, subject to node/link capacities and
//! end-to-end delay and reliability requirements.
//!
//! The crate is organized around five subsystems:
//!
//! - [`instance`]: substrate network and service request types, a seeded
//!   random instance generator, and JSON instance I/O.
//! - [`formulation`]: translates an [`instance::Instance`] into a generic
//!   mixed-binary linear [`formulation::Model`] under one of two builders
//!   (the path-flow MILP or the McCormick-linearized baseline), plus variant
//!   flags for single-path and no-reliability comparisons, LP relaxation,
//!   and LP-format text export.
//! - [`solver`]: an embedded bounded-variable simplex core, a deterministic
//!   branch-and-bound driver, an external-solver adapter speaking the LP text
//!   format, and solution decoding into placement/routing views.
//! - [`validator`]: an independent, formulation-free checker that a decoded
//!   solution satisfies the problem semantics on the instance, including the
//!   product-form reliability requirement.
//! - [`harness`]: batch experiment runner with CSV output and gnuplot scripts.

pub mod formulation;
pub mod harness;
pub mod instance;
pub mod solver;
pub mod validator;
