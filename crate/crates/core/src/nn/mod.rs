//! Neural primitives. Each stateful op has an offline form over a whole
//! [`FeatureMap`] and a per-frame streaming form; both share the same inner
//! loops and therefore agree bit for bit.

mod activation;
mod conv;
mod gru;
mod linear;
mod norm;
mod shuffle;
mod softmax;
mod unfold;

pub use activation::{elu, elu_in_place, sigmoid};
pub use conv::{causal_conv2d, conv2d_stream_step, Conv2d, ConvSpec, ConvStreamState};
pub use gru::{Gru, GruState};
pub use linear::{linear, Linear};
pub use norm::{batch_norm_infer, BatchNorm, BN_EPS};
pub use shuffle::{crop_freq, pixel_shuffle_freq, pixel_unshuffle_freq, shuffle_frame};
pub use softmax::{softmax_axis, softmax_in_place};
pub use unfold::unfold_time;

use crate::error::{shape_err, Result};

/// Real tensor laid out `[channel][frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    frames: usize,
    bins: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, frames: usize, bins: usize) -> Self {
        Self { channels, frames, bins, data: vec![0.0; channels * frames * bins] }
    }

    pub fn from_vec(channels: usize, frames: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * frames * bins {
            return Err(shape_err!(
                "feature map data has {} values, expected {channels} x {frames} x {bins}",
                data.len()
            ));
        }
        Ok(Self { channels, frames, bins, data })
    }

    /// Builds a map from a closure over `(c, t, f)`.
    pub fn from_fn(channels: usize, frames: usize, bins: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(channels * frames * bins);
        for c in 0..channels {
            for t in 0..frames {
                for b in 0..bins {
                    data.push(f(c, t, b));
                }
            }
        }
        Self { channels, frames, bins, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.frames, self.bins)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, t: usize, f: usize) -> f64 {
        self.data[(c * self.frames + t) * self.bins + f]
    }

    #[inline]
    pub fn set(&mut self, c: usize, t: usize, f: usize, v: f64) {
        self.data[(c * self.frames + t) * self.bins + f] = v;
    }

    /// The `bins` values of channel `c` at frame `t`.
    pub fn row(&self, c: usize, t: usize) -> &[f64] {
        let start = (c * self.frames + t) * self.bins;
        &self.data[start..start + self.bins]
    }

    pub fn row_mut(&mut self, c: usize, t: usize) -> &mut [f64] {
        let start = (c * self.frames + t) * self.bins;
        &mut self.data[start..start + self.bins]
    }

    /// Copies frame `t` into `out` as `[channel][bin]`.
    pub fn read_frame(&self, t: usize, out: &mut [f64]) {
        for c in 0..self.channels {
            out[c * self.bins..(c + 1) * self.bins].copy_from_slice(self.row(c, t));
        }
    }

    /// Overwrites frame `t` from a `[channel][bin]` slice.
    pub fn write_frame(&mut self, t: usize, src: &[f64]) {
        for c in 0..self.channels {
            let bins = self.bins;
            self.row_mut(c, t).copy_from_slice(&src[c * bins..(c + 1) * bins]);
        }
    }

    /// Frame `t` as a standalone single-frame map.
    pub fn frame(&self, t: usize) -> FeatureMap {
        let mut out = FeatureMap::zeros(self.channels, 1, self.bins);
        self.read_frame(t, &mut out.data);
        out
    }

    /// Stacks single-frame maps along time.
    pub fn concat_frames(frames: &[FeatureMap]) -> Result<FeatureMap> {
        let Some(first) = frames.first() else {
            return Err(shape_err!("cannot concatenate zero frames"));
        };
        let (c, b) = (first.channels, first.bins);
        let total: usize = frames.iter().map(|f| f.frames).sum();
        let mut out = FeatureMap::zeros(c, total, b);
        let mut t0 = 0;
        for f in frames {
            if f.channels != c || f.bins != b {
                return Err(shape_err!("frame shapes differ in concatenation"));
            }
            for t in 0..f.frames {
                for ch in 0..c {
                    out.row_mut(ch, t0 + t).copy_from_slice(f.row(ch, t));
                }
            }
            t0 += f.frames;
        }
        Ok(out)
    }

    /// Channel-wise concatenation (`self` first).
    pub fn concat_channels(&self, other: &FeatureMap) -> Result<FeatureMap> {
        if self.frames != other.frames || self.bins != other.bins {
            return Err(shape_err!("channel concat needs equal (t, f): {:?} vs {:?}", self.shape(), other.shape()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        FeatureMap::from_vec(self.channels + other.channels, self.frames, self.bins, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dense N-d tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err!("tensor {shape:?} needs {n} values, got {}", data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.index(idx)]
    }
}
