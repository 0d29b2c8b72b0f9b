//! Every chapter of the guide is a module here so that `cargo test --doc`
//! compiles and runs its code listings. A failing doc-test names the chapter
//! module it came from.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/network.md")]
pub mod network {}
#[doc = include_str!("../../../book/src/pair.md")]
pub mod pair {}
#[doc = include_str!("../../../book/src/stream.md")]
pub mod stream {}
#[doc = include_str!("../../../book/src/pool.md")]
pub mod pool {}
#[doc = include_str!("../../../book/src/ntk.md")]
pub mod ntk {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
