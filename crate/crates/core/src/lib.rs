//! Parameterization of nonlinear dynamic systems `x' = A x + G f(x, u) + B u`
//! into Lipschitz, one-sided-Lipschitz, and quadratically inner-bounded
//! function classes, with certified constants from interval branch-and-bound,
//! observer synthesis by matrix-inequality feasibility, and fixed-step
//! co-simulation for validation.

pub mod bounds;
pub mod expr;
pub mod globopt;
pub mod interval;
pub mod lmi;
pub mod matfun;
pub mod sim;

pub use bounds::{GammaReport, Method};
pub use expr::{Expr, SystemModel};
pub use globopt::{BnbConfig, Enclosure};
pub use interval::{Interval, IntervalBox};
pub use matfun::{Mat, SymMatrix};
