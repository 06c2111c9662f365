//! Per-tensor floating-point format search for a batched motion-generation
//! pipeline.
//!
//! A planar-arm motion generator (batched inverse-kinematics optimization,
//! trajectory seeding and trajectory optimization, all driven by L-BFGS)
//! exposes five intermediate tensors. Quantize-dequantize hooks inject the
//! representational error of an arbitrary minifloat format at each tensor,
//! and a two-phase search — per-tensor binary search followed by a
//! constrained NSGA-II — finds the narrowest per-tensor formats that keep
//! task success at the full-precision baseline.
//!
//! Start from the runnable examples:
//!
//! - `quantize_values` — the minifloat codec and the 21-format space
//! - `data_movement` — register packing and tensor-size accounting
//! - `gradient_check` — the arm testbed's costs against finite differences
//! - `lbfgs_rosenbrock` — the optimizer on a classic benchmark
//! - `plan_motion` — one end-to-end motion-generation run
//! - `per_tensor_search` — phase 1, per-tensor bitwidth minima
//! - `combinatorial_search` — phase 2, NSGA-II over the reduced space
//!
//! The `varprec` binary wraps the same entry points as subcommands
//! (`baseline`, `search-per-tensor`, `search-combinatorial`, `report`,
//! `eval-config`).

pub mod arm;
pub mod config;
pub mod fpcodec;
pub mod lbfgs;
pub mod orchestrate;
pub mod pipeline;
pub mod report;
pub mod search;
pub mod streams;
