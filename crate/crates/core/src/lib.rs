//! Left-invariant metrics on concrete groups.
//!
//! The crate is organised around four layers:
//!
//! * [`group`] and [`linalg`]: group arithmetic for matrix, free, lattice and
//!   finite groups, plus the dense kernels they need (operator norm, matrix
//!   square root, exponential, logarithm).
//! * [`metric`] and [`construct`]: compatible left-invariant metrics as
//!   evaluable handles, and the filtration constructions (cube law and
//!   square law chain infima, bi-invariantisation, `sqrt d`, restriction).
//! * [`certify`] and [`oneparam`]: power-growth minimality checks with
//!   replayable witnesses, and one-parameter subgroups built from root chains.
//! * [`coarse`]: word metrics, path refinement and quasi-isometry fits.

// `!(x <= y)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod certify;
pub mod coarse;
pub mod construct;
pub mod error;
pub mod filtration;
pub mod group;
pub mod linalg;
pub mod metric;
pub mod oneparam;
pub mod sample;
pub mod table;

pub use certify::{Certificate, Condition, Verdict, Witness};
pub use error::{Error, Result};
pub use filtration::{Filtration, GrowthLaw};
pub use group::{Element, ElementKey, Group, GroupKind};
pub use linalg::CMat;
pub use metric::{Metric, MetricMeta, Provenance};
pub use oneparam::{DyadicParam, RootChain};
pub use table::CayleyTable;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative slack used when comparing two floating point bounds.
pub(crate) fn le_tol(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + 1e-12 * rhs.abs().max(lhs.abs()) + 1e-15
}
