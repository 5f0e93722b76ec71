pub mod dataio;
pub mod error;
pub mod field;
pub mod geometry;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod masks;
pub mod reduce;
pub mod synth;
pub mod toymatcher;

pub use error::{Error, Result};
pub use field::PixelField;
pub use geometry::CameraRig;
pub use losses::{LossBreakdown, LossConfig};
pub use masks::ObjectMask;

/// Version of this library, recorded in CLI provenance files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/losses.md")]
    mod losses {}
    #[doc = include_str!("../../../book/src/gradcheck.md")]
    mod gradcheck {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/dataio.md")]
    mod dataio {}
    #[doc = include_str!("../../../book/src/synth.md")]
    mod synth {}
    #[doc = include_str!("../../../book/src/toymatcher.md")]
    mod toymatcher {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
