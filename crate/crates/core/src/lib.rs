pub mod dag;
pub mod density;
pub mod error;
pub mod eval;
pub mod features;
pub mod inference;
pub mod lingam;
pub mod nuts;
pub mod params;
pub mod posterior;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/structure.md")]
    mod structure {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
}
