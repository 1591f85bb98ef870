//! Value-function approximations for partially observable Markov decision
//! processes.
//!
//! Every method works on the belief simplex of a finite [`Pomdp`]:
//!
//! - [`exact`]: the exact Bellman backup over alpha-vector sets, with
//!   incremental pruning, and value iteration built on it.
//! - [`bounds`]: MDP, QMDP and fast informed upper bounds and the
//!   unobservable lower bound.
//! - [`grid`]: interpolation over belief grids, including the sawtooth upper
//!   bound and adaptive grid growth.
//! - [`point`]: point-based backups and monotone lower-bound improvement.
//! - [`fsm`]: finite-state controllers, their evaluation and policy
//!   iteration.
//! - [`fit`]: least-squares fitting of parametric value functions.
//! - [`harness`] and [`compare`]: simulation, scoring and method
//!   comparison.
//!
//! ```
//! use pomdp_vfa::bounds::{fib_fixed_point, solve_fomdp, MdpMode};
//! use pomdp_vfa::maze::{build_maze20, MazeSpec};
//! use pomdp_vfa::{Belief, ValueFunction};
//!
//! let m = build_maze20(&MazeSpec::default())?;
//! let b = Belief::uniform(m.num_states());
//! let mdp = solve_fomdp(&m, 1e-6).value(&b, MdpMode::Mdp);
//! let fib = fib_fixed_point(&m, 1e-6).value(&b);
//! assert!(fib <= mdp);
//! # Ok::<(), pomdp_vfa::Error>(())
//! ```

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod compare;
pub mod error;
pub mod exact;
pub mod fit;
pub mod fsm;
pub mod grid;
pub mod harness;
pub mod io;
pub mod lp;
pub mod maze;
pub mod mdp;
pub mod model;
pub mod point;
pub mod pwlc;
pub mod value;

pub use error::{Error, Result};
pub use model::{Belief, Pomdp};
pub use pwlc::{AlphaVector, PwlcFn};
pub use value::ValueFunction;

// The guide's code listings run as doctests: one empty module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/exact.md")]
    mod exact {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/point-backups.md")]
    mod point_backups {}
    #[doc = include_str!("../../../book/src/controllers.md")]
    mod controllers {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
