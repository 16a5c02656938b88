//! The guide in `book/` is plain mdbook, which cannot build listings that
//! depend on workspace crates. Each chapter is included here as module docs
//! instead, so `cargo test` runs every listing as a doctest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/kernels.md")]
pub mod kernels {}

#[doc = include_str!("../../../book/src/measures.md")]
pub mod measures {}

#[doc = include_str!("../../../book/src/systems.md")]
pub mod systems {}

#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}

#[doc = include_str!("../../../book/src/rdp.md")]
pub mod rdp {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
