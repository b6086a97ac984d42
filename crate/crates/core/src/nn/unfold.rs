use super::{FeatureMap, Tensor};

/// Delay-unfolds along time: `out[c][t][d][f] = x[c][t - d][f]`, zero before
/// the first frame.
pub fn unfold_time(x: &FeatureMap, d_max: usize) -> Tensor {
    let (c, t, f) = x.shape();
    let mut data = vec![0.0; c * t * d_max * f];
    for ch in 0..c {
        for tt in 0..t {
            for d in 0..d_max.min(tt + 1) {
                let start = ((ch * t + tt) * d_max + d) * f;
                data[start..start + f].copy_from_slice(x.row(ch, tt - d));
            }
        }
    }
    Tensor { shape: vec![c, t, d_max, f], data }
}
