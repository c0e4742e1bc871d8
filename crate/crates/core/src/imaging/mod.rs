//! Image ingestion and serialization, resampling for the dual-resolution
//! space, and synthetic speckled pair generation.

mod filter;
mod io;
mod synth;

pub use filter::{check_rate, downsample, gaussian_blur, gaussian_kernel, RateCheck, MIN_LOWRES_SIDE};
pub use io::{load_image, save_image, sidecar_path, FileFormat};
pub use synth::{
    apply_speckle, speckle_field, synth_pair, textured_scene, warp_image, SynthPair, SynthSpec,
    MIN_OVERLAP,
};
