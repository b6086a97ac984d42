use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{AudioBuffer, ComplexSpectrum, StftConfig, SAMPLE_RATE};
use crate::error::{shape_err, Error, Result};

/// Windowed forward DFT of one frame. Holds all scratch so analysis never allocates.
pub(crate) struct FrameAnalyzer {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    bins: usize,
}

impl FrameAnalyzer {
    pub(crate) fn new(cfg: &StftConfig) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(cfg.dft_len);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Self { window: cfg.window(), buf: vec![Complex64::default(); cfg.dft_len], scratch, fft, bins: cfg.bins() }
    }

    /// `frame` holds `window_len` samples; `out` receives `bins` values.
    pub(crate) fn analyze(&mut self, frame: impl Iterator<Item = f64>, out: &mut [Complex64]) {
        for ((b, x), w) in self.buf.iter_mut().zip(frame).zip(&self.window) {
            *b = Complex64::new(x * w, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        out.copy_from_slice(&self.buf[..self.bins]);
    }
}

/// Inverse DFT of one half spectrum followed by the synthesis window.
pub(crate) struct FrameSynthesizer {
    window: Vec<f64>,
    ifft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    bins: usize,
}

impl FrameSynthesizer {
    pub(crate) fn new(cfg: &StftConfig) -> Self {
        let ifft = FftPlanner::new().plan_fft_inverse(cfg.dft_len);
        let scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
        Self { window: cfg.window(), buf: vec![Complex64::default(); cfg.dft_len], scratch, ifft, bins: cfg.bins() }
    }

    /// Writes `window_len` windowed time samples into `out`.
    pub(crate) fn synthesize(&mut self, spec: &[Complex64], out: &mut [f64]) {
        let n = self.buf.len();
        self.buf[..self.bins].copy_from_slice(spec);
        for k in self.bins..n {
            self.buf[k] = spec[n - k].conj();
        }
        self.ifft.process_with_scratch(&mut self.buf, &mut self.scratch);
        let scale = 1.0 / n as f64;
        for ((o, b), w) in out.iter_mut().zip(&self.buf).zip(&self.window) {
            *o = b.re * scale * w;
        }
    }
}

fn require_rate(buf: &AudioBuffer) -> Result<()> {
    if buf.sample_rate() != SAMPLE_RATE {
        return Err(Error::Config(format!("stft expects {SAMPLE_RATE} Hz audio, got {} Hz", buf.sample_rate())));
    }
    Ok(())
}

/// Causal STFT. The signal is prefixed with `window_len - hop` zeros so frame `t`
/// ends at sample `(t + 1) * hop`; a trailing partial hop produces no frame.
pub fn stft(input: &AudioBuffer, cfg: &StftConfig) -> Result<ComplexSpectrum> {
    cfg.validate()?;
    require_rate(input)?;
    let samples = input.samples();
    let frames = samples.len() / cfg.hop;
    let pad = cfg.lead_pad();
    let mut spec = ComplexSpectrum::zeros(frames, cfg.bins());
    let mut analyzer = FrameAnalyzer::new(cfg);
    for t in 0..frames {
        // padded index p maps to sample p - pad
        let start = t * cfg.hop;
        let frame = (start..start + cfg.window_len).map(|p| if p < pad { 0.0 } else { samples[p - pad] as f64 });
        analyzer.analyze(frame, spec.frame_mut(t));
    }
    Ok(spec)
}

/// Overlap-add inverse of [`stft`]. Returns `frames * hop` samples aligned with the
/// original signal; the last hop only receives one frame and is therefore incomplete.
pub fn istft(spec: &ComplexSpectrum, cfg: &StftConfig) -> Result<AudioBuffer> {
    cfg.validate()?;
    if spec.bins() != cfg.bins() {
        return Err(shape_err!("istft expects {} bins, got {}", cfg.bins(), spec.bins()));
    }
    let frames = spec.frames();
    let pad = cfg.lead_pad();
    let mut padded = vec![0.0f64; frames * cfg.hop + pad];
    let mut synth = FrameSynthesizer::new(cfg);
    let mut seg = vec![0.0f64; cfg.window_len];
    for t in 0..frames {
        synth.synthesize(spec.frame(t), &mut seg);
        let start = t * cfg.hop;
        let end = (start + cfg.window_len).min(padded.len());
        for (o, s) in padded[start..end].iter_mut().zip(&seg) {
            *o += *s;
        }
    }
    let out: Vec<f32> = padded[pad..].iter().map(|&x| x as f32).collect();
    AudioBuffer::new(out, SAMPLE_RATE)
}

/// Frame-by-frame analysis: one hop of new samples in, one spectrum frame out.
pub struct StreamingStft {
    cfg: StftConfig,
    history: Vec<f64>,
    analyzer: FrameAnalyzer,
}

impl StreamingStft {
    pub fn new(cfg: &StftConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg: *cfg, history: vec![0.0; cfg.window_len], analyzer: FrameAnalyzer::new(cfg) })
    }

    pub fn process(&mut self, hop: &[f32], out: &mut [Complex64]) -> Result<()> {
        if hop.len() != self.cfg.hop {
            return Err(Error::Contract(format!("expected {} samples per hop, got {}", self.cfg.hop, hop.len())));
        }
        if out.len() != self.cfg.bins() {
            return Err(shape_err!("output frame needs {} bins", self.cfg.bins()));
        }
        let keep = self.cfg.window_len - self.cfg.hop;
        self.history.copy_within(self.cfg.hop.., 0);
        for (h, &x) in self.history[keep..].iter_mut().zip(hop) {
            *h = x as f64;
        }
        self.analyzer.analyze(self.history.iter().copied(), out);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.history.fill(0.0);
    }
}

/// Frame-by-frame overlap-add synthesis. Output hop `k` completes the samples of
/// input hop `k - 1`, i.e. the stream lags the analysis input by one hop.
pub struct StreamingIstft {
    cfg: StftConfig,
    overlap: Vec<f64>,
    seg: Vec<f64>,
    synth: FrameSynthesizer,
}

impl StreamingIstft {
    pub fn new(cfg: &StftConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: *cfg,
            overlap: vec![0.0; cfg.window_len],
            seg: vec![0.0; cfg.window_len],
            synth: FrameSynthesizer::new(cfg),
        })
    }

    pub fn process(&mut self, frame: &[Complex64], out: &mut [f32]) -> Result<()> {
        if frame.len() != self.cfg.bins() {
            return Err(shape_err!("istft expects {} bins, got {}", self.cfg.bins(), frame.len()));
        }
        if out.len() != self.cfg.hop {
            return Err(Error::Contract(format!("output hop must hold {} samples", self.cfg.hop)));
        }
        self.synth.synthesize(frame, &mut self.seg);
        for (o, s) in self.overlap.iter_mut().zip(&self.seg) {
            *o += *s;
        }
        for (y, &x) in out.iter_mut().zip(&self.overlap[..self.cfg.hop]) {
            *y = x as f32;
        }
        self.overlap.copy_within(self.cfg.hop.., 0);
        let tail = self.cfg.window_len - self.cfg.hop;
        self.overlap[tail..].fill(0.0);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.overlap.fill(0.0);
    }
}
