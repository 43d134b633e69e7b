pub mod codec;
pub mod deblock;
pub mod error;
pub mod frame;
pub mod mganet;
pub mod partition;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
pub use frame::LumaFrame;
