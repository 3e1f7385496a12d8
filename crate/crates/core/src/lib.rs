pub mod diag;
pub mod sexpr;
pub mod cpsa;
pub mod context;
pub mod gateway;
pub mod candidate;
pub mod eval;
pub mod dataset;
pub mod pipeline;
#[cfg(feature = "testkit")]
pub mod testkit;
#[cfg(feature = "testkit")]
pub mod fixtures;
