//! Audio to time-frequency conversion and back.
//!
//! Everything in here runs at 24 kHz with a 480-point DFT, a 480-sample
//! square-root Hann window and a 240-sample hop, so one spectrum frame
//! is produced every 10 ms with 241 bins.

mod compress;
mod resample;
mod stft;
pub mod wav;

pub use compress::{compress, compress_bin, decompress, decompress_bin, DEFAULT_COMPRESS_EXPONENT};
pub use resample::{resample, Decimator, Interpolator, RESAMPLER_TAPS};
pub use stft::{istft, stft, StreamingIstft, StreamingStft};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Result};

/// Network sample rate.
pub const SAMPLE_RATE: u32 = 24_000;
/// Full-band rate accepted at the edges of the pipeline.
pub const FULLBAND_RATE: u32 = 48_000;

/// Mono PCM audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        check_rate(sample_rate)?;
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(config_err!("audio sample {i} is not finite"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

pub(crate) fn check_rate(rate: u32) -> Result<()> {
    if rate == SAMPLE_RATE || rate == FULLBAND_RATE {
        Ok(())
    } else {
        Err(config_err!("unsupported sample rate {rate} Hz (expected {SAMPLE_RATE} or {FULLBAND_RATE})"))
    }
}

/// Framing parameters for the analysis/synthesis filterbank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub dft_len: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { window_len: 480, hop: 240, dft_len: 480 }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.window_len != self.dft_len {
            return Err(config_err!(
                "stft.window_len ({}) must equal stft.dft_len ({})",
                self.window_len,
                self.dft_len
            ));
        }
        if !self.window_len.is_multiple_of(2) || self.hop * 2 != self.window_len {
            return Err(config_err!("stft.hop ({}) must be half of stft.window_len ({})", self.hop, self.window_len));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.dft_len / 2 + 1
    }

    /// Leading zero padding that lets frame 0 exist at t = 0.
    pub fn lead_pad(&self) -> usize {
        self.window_len - self.hop
    }

    /// Periodic square-root Hann window. Its square overlap-adds to one at 50% overlap.
    pub fn window(&self) -> Vec<f64> {
        let n = self.window_len as f64;
        (0..self.window_len)
            .map(|i| {
                let phase = 2.0 * std::f64::consts::PI * i as f64 / n;
                (0.5 - 0.5 * phase.cos()).sqrt()
            })
            .collect()
    }
}

/// Complex time-frequency grid, row-major `[frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self { frames, bins, data: vec![Complex64::new(0.0, 0.0); frames * bins] }
    }

    pub fn from_vec(frames: usize, bins: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != frames * bins {
            return Err(shape_err!("spectrum data has {} values, expected {frames} x {bins}", data.len()));
        }
        Ok(Self { frames, bins, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        self.data[t * self.bins + f]
    }

    pub fn set(&mut self, t: usize, f: usize, v: Complex64) {
        self.data[t * self.bins + f] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}
