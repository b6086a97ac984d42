use super::FeatureMap;
use crate::error::{shape_err, Result};

/// Interleaves channel pairs into frequency for one frame:
/// `dst[c'][2f + p] = src[p * c + c'][f]`, keeping the first `out_bins` bins.
/// `src` is `[2c][bins]`, `dst` is `[c][out_bins]`.
pub fn shuffle_frame(src: &[f64], channels: usize, bins: usize, dst: &mut [f64], out_bins: usize) {
    debug_assert!(out_bins <= 2 * bins);
    for c in 0..channels {
        let row = &mut dst[c * out_bins..(c + 1) * out_bins];
        for (k, d) in row.iter_mut().enumerate() {
            let (f, p) = (k / 2, k % 2);
            *d = src[(p * channels + c) * bins + f];
        }
    }
}

/// `[2c x t x f] -> [c x t x 2f]`.
pub fn pixel_shuffle_freq(x: &FeatureMap) -> Result<FeatureMap> {
    if !x.channels().is_multiple_of(2) {
        return Err(shape_err!("pixel shuffle needs an even channel count, got {}", x.channels()));
    }
    let c = x.channels() / 2;
    let f = x.bins();
    Ok(FeatureMap::from_fn(c, x.frames(), 2 * f, |ch, t, k| x.get((k % 2) * c + ch, t, k / 2)))
}

/// `[c x t x 2f] -> [2c x t x f]`, the inverse of [`pixel_shuffle_freq`].
pub fn pixel_unshuffle_freq(x: &FeatureMap) -> Result<FeatureMap> {
    if !x.bins().is_multiple_of(2) {
        return Err(shape_err!("pixel unshuffle needs an even bin count, got {}", x.bins()));
    }
    let c = x.channels();
    Ok(FeatureMap::from_fn(2 * c, x.frames(), x.bins() / 2, |ch, t, f| x.get(ch % c, t, 2 * f + ch / c)))
}

/// Keeps the first `bins` frequency bins.
pub fn crop_freq(x: &FeatureMap, bins: usize) -> Result<FeatureMap> {
    if bins > x.bins() {
        return Err(shape_err!("cannot crop {} bins to {bins}", x.bins()));
    }
    Ok(FeatureMap::from_fn(x.channels(), x.frames(), bins, |c, t, f| x.get(c, t, f)))
}
