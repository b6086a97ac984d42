//! 2:1 polyphase resampling between 48 kHz and 24 kHz.
//!
//! Both directions share one 128-tap Kaiser-windowed sinc prototype (64 taps
//! per phase) with its cutoff at 11 kHz, centred in the 10-12 kHz transition
//! band. The filters are causal, so the offline functions and the streaming
//! structs produce identical samples.

use super::{check_rate, AudioBuffer, FULLBAND_RATE, SAMPLE_RATE};
use crate::error::{config_err, Error, Result};
use crate::kernels::dot;

/// Prototype length.
pub const RESAMPLER_TAPS: usize = 128;
const CUTOFF_HZ: f64 = 11_000.0;
const KAISER_BETA: f64 = 8.3;

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Lowpass prototype at 48 kHz, unity DC gain.
pub(crate) fn prototype() -> Vec<f64> {
    let n = RESAMPLER_TAPS;
    let center = (n - 1) as f64 / 2.0;
    let fc = CUTOFF_HZ / FULLBAND_RATE as f64;
    let norm = bessel_i0(KAISER_BETA);
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 - center;
            let arg = 2.0 * std::f64::consts::PI * fc * x;
            let sinc = if x == 0.0 { 1.0 } else { arg.sin() / arg };
            let r = x / center;
            let win = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
            2.0 * fc * sinc * win
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// Streaming 48 kHz -> 24 kHz decimator.
pub struct Decimator {
    taps_rev: Vec<f64>,
    buf: Vec<f64>,
    max_block: usize,
}

impl Decimator {
    /// `max_block` bounds the (even) number of input samples per call.
    pub fn new(max_block: usize) -> Self {
        let mut taps_rev = prototype();
        taps_rev.reverse();
        Self { taps_rev, buf: vec![0.0; RESAMPLER_TAPS - 1 + max_block], max_block }
    }

    /// Consumes `input.len()` samples and writes `input.len() / 2` samples.
    pub fn process(&mut self, input: &[f32], out: &mut [f32]) -> Result<()> {
        if !input.len().is_multiple_of(2) || input.len() > self.max_block {
            return Err(Error::Contract(format!(
                "decimator block must be even and at most {} samples, got {}",
                self.max_block,
                input.len()
            )));
        }
        if out.len() != input.len() / 2 {
            return Err(Error::Contract("decimator output must be half the input".into()));
        }
        let hist = RESAMPLER_TAPS - 1;
        for (b, &x) in self.buf[hist..].iter_mut().zip(input) {
            *b = x as f64;
        }
        for (m, y) in out.iter_mut().enumerate() {
            // output m ends on input sample 2m + 1 of this block
            *y = dot(&self.taps_rev, &self.buf[2 * m + 1..2 * m + 1 + RESAMPLER_TAPS]) as f32;
        }
        self.buf.copy_within(input.len()..input.len() + hist, 0);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.buf.fill(0.0);
    }
}

/// Streaming 24 kHz -> 48 kHz interpolator.
pub struct Interpolator {
    phases_rev: [Vec<f64>; 2],
    buf: Vec<f64>,
    max_block: usize,
}

impl Interpolator {
    /// `max_block` bounds the number of input samples per call.
    pub fn new(max_block: usize) -> Self {
        let h = prototype();
        let mut even: Vec<f64> = h.iter().step_by(2).map(|v| 2.0 * v).collect();
        let mut odd: Vec<f64> = h.iter().skip(1).step_by(2).map(|v| 2.0 * v).collect();
        even.reverse();
        odd.reverse();
        Self { phases_rev: [even, odd], buf: vec![0.0; RESAMPLER_TAPS / 2 - 1 + max_block], max_block }
    }

    /// Consumes `input.len()` samples and writes `2 * input.len()` samples.
    pub fn process(&mut self, input: &[f32], out: &mut [f32]) -> Result<()> {
        if input.len() > self.max_block {
            return Err(Error::Contract(format!(
                "interpolator block must be at most {} samples, got {}",
                self.max_block,
                input.len()
            )));
        }
        if out.len() != input.len() * 2 {
            return Err(Error::Contract("interpolator output must be twice the input".into()));
        }
        let per_phase = RESAMPLER_TAPS / 2;
        let hist = per_phase - 1;
        for (b, &x) in self.buf[hist..].iter_mut().zip(input) {
            *b = x as f64;
        }
        for m in 0..input.len() {
            let window = &self.buf[m..m + per_phase];
            out[2 * m] = dot(&self.phases_rev[0], window) as f32;
            out[2 * m + 1] = dot(&self.phases_rev[1], window) as f32;
        }
        self.buf.copy_within(input.len()..input.len() + hist, 0);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.buf.fill(0.0);
    }
}

/// Offline resampling between 24 kHz and 48 kHz. Downsampling an odd-length
/// buffer yields `(len + 1) / 2` samples; upsampling doubles the length.
pub fn resample(input: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    check_rate(target_rate)?;
    let from = input.sample_rate();
    match (from, target_rate) {
        (a, b) if a == b => Ok(input.clone()),
        (FULLBAND_RATE, SAMPLE_RATE) => {
            let mut samples = input.samples().to_vec();
            if samples.len() % 2 == 1 {
                samples.push(0.0);
            }
            let mut dec = Decimator::new(samples.len());
            let mut out = vec![0.0f32; samples.len() / 2];
            dec.process(&samples, &mut out)?;
            AudioBuffer::new(out, SAMPLE_RATE)
        }
        (SAMPLE_RATE, FULLBAND_RATE) => {
            let mut int = Interpolator::new(input.len());
            let mut out = vec![0.0f32; input.len() * 2];
            int.process(input.samples(), &mut out)?;
            AudioBuffer::new(out, FULLBAND_RATE)
        }
        (a, b) => Err(config_err!("unsupported resampling pair {a} -> {b} Hz")),
    }
}
