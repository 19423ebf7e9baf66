//! Shared inputs for the benchmarks.

use homograde_core::oracle::{natural_scene, statistic_transfer};
use homograde_core::{extract_profile, ExtractOptions, ImageRGB, TransferProfile};

/// Source scene and a statistic-matched recoloring of it.
pub fn exemplar_pair(width: usize, height: usize, seed: u64) -> (ImageRGB, ImageRGB) {
    let src = natural_scene(width, height, seed);
    let tgt = statistic_transfer(&src, &natural_scene(width, height, seed + 1));
    (src, tgt)
}

pub fn graded_profile() -> TransferProfile {
    let (src, tgt) = exemplar_pair(256, 192, 40);
    extract_profile(&src, &tgt, &ExtractOptions::default()).expect("bench exemplar is well posed")
}
