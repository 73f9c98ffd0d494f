//! Differentiable physically based shading and staged per-pixel material
//! estimation.

pub mod error;
pub mod estimator;
pub mod gradients;
pub mod io;
pub mod image;
pub mod lighting;
pub mod losses;
pub mod material;
pub mod math;
pub mod metrics;
pub mod rng;
pub mod scenegen;
pub mod shader;

pub use error::{Error, PfmError, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/materials.md")]
    mod materials {}
    #[doc = include_str!("../../../book/src/lighting.md")]
    mod lighting {}
    #[doc = include_str!("../../../book/src/shading.md")]
    mod shading {}
    #[doc = include_str!("../../../book/src/gradients.md")]
    mod gradients {}
    #[doc = include_str!("../../../book/src/losses.md")]
    mod losses {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
