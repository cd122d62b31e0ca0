pub mod config;
pub mod error;
pub mod evaluation;
mod fft2;
pub mod flow;
pub mod frame_io;
pub mod low_level;
pub mod mid_level;
pub mod pipeline;
pub mod raster;
pub mod segmentation;
pub mod spatiotemporal;
pub mod synth;

pub use error::{Error, Result};
