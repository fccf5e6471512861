//! Doctest shims for the book chapters: every fenced Rust block in
//! `book/src/*.md` compiles and runs under `cargo test --doc`, keeping the
//! guide in sync with the library.

#[doc = include_str!("../../../book/src/index.md")]
pub mod index {}

#[doc = include_str!("../../../book/src/games.md")]
pub mod games {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/simulators.md")]
pub mod simulators {}

#[doc = include_str!("../../../book/src/coverage.md")]
pub mod coverage {}

#[doc = include_str!("../../../book/src/local-learner.md")]
pub mod local_learner {}

#[doc = include_str!("../../../book/src/random-access.md")]
pub mod random_access {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
