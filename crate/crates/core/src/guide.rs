//! The user guide, compiled so its examples stay honest.
//!
//! The book in `book/` (render with `mdbook build book`) is the narrative
//! companion to the API docs. mdbook cannot run example code against the
//! crate, so each chapter is also included here verbatim as the
//! documentation of an empty module: `cargo test --doc` then executes every
//! fenced Rust block exactly as the book renders it, and the text cannot
//! drift from the library. One module per chapter keeps doc-test failures
//! attributable to a file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/grid.md")]
pub mod grid_and_interior {}

#[doc = include_str!("../../../book/src/operators.md")]
pub mod deforming_the_laplacian {}

#[doc = include_str!("../../../book/src/dynamics.md")]
pub mod heat_and_wave_flows {}

#[doc = include_str!("../../../book/src/sensitivity.md")]
pub mod differentiating_the_flow {}

#[doc = include_str!("../../../book/src/adjoint.md")]
pub mod duality_and_unique_continuation {}

#[doc = include_str!("../../../book/src/control.md")]
pub mod steering_to_a_target {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod command_line {}
