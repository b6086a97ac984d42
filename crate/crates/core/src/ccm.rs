//! Complex convolving mask: builds per-bin complex deep-filter kernels from a
//! real three-component decoder output and applies them causally to the
//! microphone spectrum.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::ComplexSpectrum;
use crate::error::{config_err, shape_err, Result};
use crate::nn::FeatureMap;

const HALF_SQRT3: f64 = 0.866_025_403_784_438_6;

/// Kernel extent: `m` past frames plus the current one, and `2n + 1` bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcmConfig {
    pub m: usize,
    pub n: usize,
}

impl Default for CcmConfig {
    fn default() -> Self {
        Self { m: 2, n: 1 }
    }
}

impl CcmConfig {
    /// Kernel taps per bin, `(m + 1)(2n + 1)`.
    pub fn taps(&self) -> usize {
        (self.m + 1) * (2 * self.n + 1)
    }

    /// Real input channels required, three per tap.
    pub fn channels(&self) -> usize {
        3 * self.taps()
    }

    /// Tap index of the current-frame, zero-offset coefficient.
    pub fn identity_tap(&self) -> usize {
        self.m * (2 * self.n + 1) + self.n
    }
}

/// Complex value from the three basis weights at one tap.
#[inline]
fn combine(x0: f64, x1: f64, x2: f64) -> Complex64 {
    Complex64::new(x0 - 0.5 * x1 - 0.5 * x2, HALF_SQRT3 * x1 - HALF_SQRT3 * x2)
}

/// Kernel coefficients laid out `[tap][frame][bin]`, taps ordered with the
/// time offset outer (most recent last) and frequency offset inner.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMaskKernel {
    cfg: CcmConfig,
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
}

impl ComplexMaskKernel {
    pub fn zeros(cfg: CcmConfig, frames: usize, bins: usize) -> Self {
        Self { cfg, frames, bins, data: vec![Complex64::new(0.0, 0.0); cfg.taps() * frames * bins] }
    }

    /// Passes the spectrum through unchanged.
    pub fn identity(cfg: CcmConfig, frames: usize, bins: usize) -> Self {
        let mut k = Self::zeros(cfg, frames, bins);
        let tap = cfg.identity_tap();
        for t in 0..frames {
            for f in 0..bins {
                k.set(tap, t, f, Complex64::new(1.0, 0.0));
            }
        }
        k
    }

    pub fn config(&self) -> CcmConfig {
        self.cfg
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Coefficient for time offset `i = a - m` and bin offset `j = b - n`.
    pub fn get(&self, tap: usize, t: usize, f: usize) -> Complex64 {
        self.data[(tap * self.frames + t) * self.bins + f]
    }

    pub fn set(&mut self, tap: usize, t: usize, f: usize, v: Complex64) {
        self.data[(tap * self.frames + t) * self.bins + f] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Builds the complex kernel from `3 (m + 1)(2n + 1)` real channels. Channel
/// `comp * taps + k` holds basis component `comp` of tap `k`.
pub fn ccm_build(x: &FeatureMap, cfg: CcmConfig) -> Result<ComplexMaskKernel> {
    if x.channels() != cfg.channels() {
        return Err(config_err!(
            "mask input has {} channels, (m, n) = ({}, {}) needs {}",
            x.channels(),
            cfg.m,
            cfg.n,
            cfg.channels()
        ));
    }
    let taps = cfg.taps();
    let mut out = ComplexMaskKernel::zeros(cfg, x.frames(), x.bins());
    for k in 0..taps {
        for t in 0..x.frames() {
            let (r0, r1, r2) = (x.row(k, t), x.row(taps + k, t), x.row(2 * taps + k, t));
            for f in 0..x.bins() {
                out.set(k, t, f, combine(r0[f], r1[f], r2[f]));
            }
        }
    }
    Ok(out)
}

/// One output frame of the deep filter. `past(a)` yields the spectrum frame
/// at time offset `a - m` or `None` before the stream start; `mask(k, f)`
/// yields the kernel coefficient.
#[inline]
fn filter_frame<'a>(
    cfg: CcmConfig,
    bins: usize,
    past: impl Fn(usize) -> Option<&'a [Complex64]>,
    mask: impl Fn(usize, usize) -> Complex64,
    out: &mut [Complex64],
) {
    let width = 2 * cfg.n + 1;
    for (f, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..=cfg.m {
            let Some(frame) = past(a) else { continue };
            for b in 0..width {
                let src = f + b;
                if src < cfg.n || src - cfg.n >= bins {
                    continue;
                }
                acc += frame[src - cfg.n] * mask(a * width + b, f);
            }
        }
        *o = acc;
    }
}

/// Causal deep filtering of `mic` with per-bin kernels.
pub fn ccm_apply(mic: &ComplexSpectrum, kernel: &ComplexMaskKernel, cfg: CcmConfig) -> Result<ComplexSpectrum> {
    if kernel.cfg != cfg || kernel.frames != mic.frames() || kernel.bins != mic.bins() {
        return Err(shape_err!(
            "mask kernel ({} x {}) does not match spectrum ({} x {})",
            kernel.frames,
            kernel.bins,
            mic.frames(),
            mic.bins()
        ));
    }
    let bins = mic.bins();
    let mut out = ComplexSpectrum::zeros(mic.frames(), bins);
    for t in 0..mic.frames() {
        filter_frame(
            cfg,
            bins,
            |a| (t + a).checked_sub(cfg.m).map(|s| mic.frame(s)),
            |k, f| kernel.get(k, t, f),
            out.frame_mut(t),
        );
    }
    Ok(out)
}

/// Streaming deep filter that builds the kernel on the fly from the raw
/// mask channels. Matches `ccm_build` followed by `ccm_apply` bit for bit.
#[derive(Debug, Clone)]
pub struct CcmStreamState {
    cfg: CcmConfig,
    bins: usize,
    frames_seen: usize,
    /// The last `m + 1` spectrum frames, oldest first.
    history: Vec<Complex64>,
    kernel: Vec<Complex64>,
}

impl CcmStreamState {
    pub fn new(cfg: CcmConfig, bins: usize) -> Self {
        Self {
            cfg,
            bins,
            frames_seen: 0,
            history: vec![Complex64::new(0.0, 0.0); (cfg.m + 1) * bins],
            kernel: vec![Complex64::new(0.0, 0.0); cfg.taps() * bins],
        }
    }

    pub fn reset(&mut self) {
        self.frames_seen = 0;
        self.history.fill(Complex64::new(0.0, 0.0));
    }

    /// `mask` is `[channel][bin]` with `cfg.channels()` channels; `mic` and
    /// `out` hold one spectrum frame.
    pub fn step(&mut self, mask: &[f64], mic: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let (cfg, bins) = (self.cfg, self.bins);
        if mask.len() != cfg.channels() * bins || mic.len() != bins || out.len() != bins {
            return Err(shape_err!("mask frame sizes do not match {bins} bins"));
        }
        let taps = cfg.taps();
        for k in 0..taps {
            let rows = |comp: usize| &mask[(comp * taps + k) * bins..(comp * taps + k + 1) * bins];
            let (r0, r1, r2) = (rows(0), rows(1), rows(2));
            for f in 0..bins {
                self.kernel[k * bins + f] = combine(r0[f], r1[f], r2[f]);
            }
        }
        self.history.copy_within(bins.., 0);
        let tail = self.history.len() - bins;
        self.history[tail..].copy_from_slice(mic);
        let t = self.frames_seen;
        let (history, kernel) = (&self.history, &self.kernel);
        filter_frame(
            cfg,
            bins,
            |a| (t + a >= cfg.m).then(|| &history[a * bins..(a + 1) * bins]),
            |k, f| kernel[k * bins + f],
            out,
        );
        self.frames_seen += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_needs_27_channels() {
        let cfg = CcmConfig::default();
        assert_eq!(cfg.channels(), 27);
        assert_eq!(cfg.identity_tap(), 7);
    }

    #[test]
    fn basis_cancels() {
        let z = combine(1.0, 1.0, 1.0);
        assert_eq!(z, Complex64::new(0.0, 0.0));
        assert_eq!(combine(0.7, 0.0, 0.0), Complex64::new(0.7, 0.0));
    }
}
