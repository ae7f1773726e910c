//! Loop-type-driven construction and execution of hierarchical event-driven
//! tasks from tiled loop trees.

pub mod range_expr;
pub mod runtime;
pub mod loop_tree;
pub mod dependence;
pub mod edt;
pub mod sym;
pub mod kernels;
pub mod harness;

pub use range_expr::{Env, Expr};
pub use sym::Sym;
