pub mod afdc;
pub mod cost;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/fractional-dilation.md")]
    struct FractionalDilation;
    #[doc = include_str!("../../../book/src/batching.md")]
    struct Batching;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/cost.md")]
    struct Cost;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
