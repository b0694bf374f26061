//! Compiles every code block in the guide under `book/` as a doctest, so
//! `cargo test --workspace` fails whenever the book drifts from the
//! library. One module per chapter keeps failures attributable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/tiles.md")]
pub mod tiles {}

#[doc = include_str!("../../../book/src/batch.md")]
pub mod batch {}

#[doc = include_str!("../../../book/src/streaming.md")]
pub mod streaming {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}

#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
