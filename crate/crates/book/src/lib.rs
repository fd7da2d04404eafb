//! Compiles the guide's code listings as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/descriptors.md")]
pub mod descriptors {}
#[doc = include_str!("../../../book/src/classifiers.md")]
pub mod classifiers {}
#[doc = include_str!("../../../book/src/fusion.md")]
pub mod fusion {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
