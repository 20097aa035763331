//! Doctests for the guide chapters.
//!
//! mdbook cannot resolve external crates when it tests snippets, so each
//! chapter is attached to an empty module here and `cargo test --doc` runs
//! its code blocks. Paths in snippets are relative to this crate.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/quickstart.md")]
pub mod quickstart {}
#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
#[doc = include_str!("../../../book/src/base.md")]
pub mod base {}
#[doc = include_str!("../../../book/src/recovery.md")]
pub mod recovery {}
#[doc = include_str!("../../../book/src/adversaries.md")]
pub mod adversaries {}
#[doc = include_str!("../../../book/src/traces.md")]
pub mod traces {}
#[doc = include_str!("../../../book/src/bounds.md")]
pub mod bounds {}
