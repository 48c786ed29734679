//! Shared plumbing behind the `ckmforge` binary: task/method parsing,
//! reconstruction dispatch, the benchmark harness, the self-test suite, and
//! small image/report writers. The binary in `main.rs` is a thin argument
//! layer over these.

pub mod bench;
pub mod pool;
pub mod recon;
pub mod selftest;
pub mod tasks;
pub mod triptych;

/// Scale disclaimer printed by `selftest` and echoed into benchmark output:
/// the published tables are out of reach on a desk machine by design.
pub const DESK_SCALE_DISCLAIMER: &str = "NOTE: published-table numbers are not reproducible at \
desk scale; they require 200k-400k-iteration GPU training on licensed corpora. Everything here \
runs property-based checks and toy-scale experiments on synthetic maps instead.";
