pub mod bridge;
pub mod costs;
pub mod coupling;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod kernels;
pub mod measures;
pub mod quad;
pub mod rng;
pub mod sde;

pub use error::{Error, Result};
pub use grid::{SampledPath, TimeGrid};
pub use kernels::KernelParams;
pub use rng::PathSeed;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/bridge.md")]
    mod bridge {}
    #[doc = include_str!("../../../book/src/coupling.md")]
    mod coupling {}
    #[doc = include_str!("../../../book/src/costs.md")]
    mod costs {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
