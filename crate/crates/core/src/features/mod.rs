//! Scale-invariant feature detection, description and ratio-test matching.

mod matching;
mod sift;

pub use matching::{match_features, FeatureMatch, DEFAULT_RATIO};
pub use sift::{
    detect_and_describe, detect_and_describe_with, octave_count, Feature, SiftConfig,
    DESCRIPTOR_LEN, MIN_DETECT_SIDE,
};
