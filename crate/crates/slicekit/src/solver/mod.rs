//! Embedded LP and mixed-binary solving.
//!
//! [`solve_lp`] runs the bounded-variable simplex on a continuous model;
//! [`branch_and_bound`] drives it over a mixed-binary model.

mod branch_bound;
mod decode;
mod external;
mod simplex;

pub use branch_bound::{branch_and_bound, SolveLimits, SolveResult, SolveStatus, INT_TOL};
pub use decode::{
    decode_solution, decode_solution_map, DecodeError, DecodedFlow, DecodedPath, DecodedService,
    DecodedSolution, USE_TOL,
};
pub use external::{external_solve, ExternalError};
pub use simplex::{solve_lp, solve_lp_with, LpOptions, LpResult, LpStatus};

