//! Real-time frame-by-frame processing around a [`Model`].

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::dsp::{
    resample, AudioBuffer, Decimator, Interpolator, StreamingIstft, StreamingStft, FULLBAND_RATE, SAMPLE_RATE,
};
use crate::error::{config_err, Error, Result};
use crate::model::{Model, ModelStreamState};

/// Wall time spent in the two halves of the most recent frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameTiming {
    /// STFT, iSTFT and resampling.
    pub dsp: Duration,
    /// Everything between spectrum in and masked spectrum out.
    pub neural: Duration,
}

/// Streaming state for one audio stream: every buffer is allocated up front.
pub struct EngineState {
    stft_mic: StreamingStft,
    stft_far: StreamingStft,
    istft: StreamingIstft,
    model: ModelStreamState,
    mic_spec: Vec<Complex64>,
    far_spec: Vec<Complex64>,
    out_spec: Vec<Complex64>,
    frame_counter: u64,
    timing: FrameTiming,
}

/// Resamplers and 24 kHz buffers for the 48 kHz path.
struct Fullband {
    down_mic: Decimator,
    down_far: Decimator,
    up: Interpolator,
    mic24: Vec<f32>,
    far24: Vec<f32>,
    out24: Vec<f32>,
}

/// A model plus its streaming state. Consumes one hop (10 ms) of microphone
/// and far-end audio per call and emits one hop of enhanced audio.
pub struct Engine {
    model: Arc<Model>,
    state: EngineState,
    fullband: Fullband,
}

impl Engine {
    pub fn new(model: Arc<Model>) -> Result<Self> {
        let cfg = model.config();
        let (hop, bins) = (cfg.stft.hop, cfg.stft.bins());
        let zero = Complex64::new(0.0, 0.0);
        let state = EngineState {
            stft_mic: StreamingStft::new(&cfg.stft)?,
            stft_far: StreamingStft::new(&cfg.stft)?,
            istft: StreamingIstft::new(&cfg.stft)?,
            model: model.stream_state()?,
            mic_spec: vec![zero; bins],
            far_spec: vec![zero; bins],
            out_spec: vec![zero; bins],
            frame_counter: 0,
            timing: FrameTiming::default(),
        };
        let fullband = Fullband {
            down_mic: Decimator::new(2 * hop),
            down_far: Decimator::new(2 * hop),
            up: Interpolator::new(hop),
            mic24: vec![0.0; hop],
            far24: vec![0.0; hop],
            out24: vec![0.0; hop],
        };
        Ok(Self { model, state, fullband })
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    /// Samples per call at 24 kHz.
    pub fn hop(&self) -> usize {
        self.model.config().stft.hop
    }

    pub fn frame_counter(&self) -> u64 {
        self.state.frame_counter
    }

    /// Delay distribution computed for the most recent frame.
    pub fn last_delay_row(&self) -> &[f64] {
        self.state.model.delay_row()
    }

    pub fn last_timing(&self) -> FrameTiming {
        self.state.timing
    }

    /// Output sample `n` equals sample `n - hop` of the offline pipeline; the
    /// first hop is silent.
    pub fn output_lag_samples(&self) -> usize {
        self.hop()
    }

    /// Input-to-playout latency in samples: the overlap-add lag plus the hop
    /// that must be buffered before a call can run. A sample arriving at time
    /// `k` is played back at `k + 2 * hop` (20 ms at the default framing).
    pub fn algorithmic_delay_samples(&self) -> usize {
        self.output_lag_samples() + self.hop()
    }

    /// Restores the state of a freshly constructed engine.
    pub fn reset(&mut self) {
        let s = &mut self.state;
        s.stft_mic.reset();
        s.stft_far.reset();
        s.istft.reset();
        s.model.reset();
        self.fullband.down_mic.reset();
        self.fullband.down_far.reset();
        self.fullband.up.reset();
        s.frame_counter = 0;
        s.timing = FrameTiming::default();
    }

    fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
        if got != want {
            return Err(Error::Contract(format!("{name} frame must have {want} samples, got {got}")));
        }
        Ok(())
    }

    /// One 24 kHz hop in, one hop out.
    pub fn process_frame(&mut self, mic: &[f32], far: &[f32], out: &mut [f32]) -> Result<()> {
        let hop = self.hop();
        Self::check_len("mic", mic.len(), hop)?;
        Self::check_len("far-end", far.len(), hop)?;
        Self::check_len("output", out.len(), hop)?;
        run_hop(&self.model, &mut self.state, mic, far, out)
    }

    /// One 48 kHz frame (two hops' worth of samples) in and out, resampled
    /// around [`Engine::process_frame`].
    pub fn process_frame_48k(&mut self, mic: &[f32], far: &[f32], out: &mut [f32]) -> Result<()> {
        let n = 2 * self.hop();
        Self::check_len("mic", mic.len(), n)?;
        Self::check_len("far-end", far.len(), n)?;
        Self::check_len("output", out.len(), n)?;
        let fb = &mut self.fullband;
        let t0 = Instant::now();
        fb.down_mic.process(mic, &mut fb.mic24)?;
        fb.down_far.process(far, &mut fb.far24)?;
        let before = t0.elapsed();
        run_hop(&self.model, &mut self.state, &fb.mic24, &fb.far24, &mut fb.out24)?;
        let t1 = Instant::now();
        fb.up.process(&fb.out24, out)?;
        self.state.timing.dsp += before + t1.elapsed();
        Ok(())
    }
}

fn run_hop(model: &Model, s: &mut EngineState, mic: &[f32], far: &[f32], out: &mut [f32]) -> Result<()> {
    let t0 = Instant::now();
    s.stft_mic.process(mic, &mut s.mic_spec)?;
    s.stft_far.process(far, &mut s.far_spec)?;
    let t1 = Instant::now();
    model.step_spectrum(&mut s.model, &s.mic_spec, &s.far_spec, &mut s.out_spec)?;
    let t2 = Instant::now();
    s.istft.process(&s.out_spec, out)?;
    if s.frame_counter == 0 {
        // The first hop covers time before the stream started.
        out.fill(0.0);
    }
    let t3 = Instant::now();
    s.timing = FrameTiming { dsp: (t1 - t0) + (t3 - t2), neural: t2 - t1 };
    s.frame_counter += 1;
    Ok(())
}

/// Offline enhancement at 24 or 48 kHz. 48 kHz inputs are resampled to the
/// model rate and back; the output has the mic's rate and length.
pub fn enhance_offline(model: &Model, mic: &AudioBuffer, far: &AudioBuffer) -> Result<AudioBuffer> {
    Ok(enhance_offline_detailed(model, mic, far)?.0)
}

pub fn enhance_offline_detailed(
    model: &Model,
    mic: &AudioBuffer,
    far: &AudioBuffer,
) -> Result<(AudioBuffer, crate::align::DelayDistribution)> {
    if mic.sample_rate() != far.sample_rate() {
        return Err(config_err!("mic is {} Hz but far-end is {} Hz", mic.sample_rate(), far.sample_rate()));
    }
    match mic.sample_rate() {
        SAMPLE_RATE => model.forward_offline_detailed(mic, far),
        FULLBAND_RATE => {
            let (out, delays) =
                model.forward_offline_detailed(&resample(mic, SAMPLE_RATE)?, &resample(far, SAMPLE_RATE)?)?;
            let mut up = resample(&out, FULLBAND_RATE)?.into_samples();
            up.resize(mic.len(), 0.0);
            Ok((AudioBuffer::new(up, FULLBAND_RATE)?, delays))
        }
        other => Err(config_err!("unsupported sample rate {other} Hz")),
    }
}

/// Adapts arbitrary chunk sizes to the engine's one-hop contract. Output
/// samples become available once a whole hop has been buffered.
pub struct ChunkFifo {
    engine: Engine,
    mic: VecDeque<f32>,
    far: VecDeque<f32>,
    mic_hop: Vec<f32>,
    far_hop: Vec<f32>,
    out_hop: Vec<f32>,
}

impl ChunkFifo {
    pub fn new(engine: Engine) -> Self {
        let hop = engine.hop();
        Self {
            engine,
            mic: VecDeque::with_capacity(2 * hop),
            far: VecDeque::with_capacity(2 * hop),
            mic_hop: vec![0.0; hop],
            far_hop: vec![0.0; hop],
            out_hop: vec![0.0; hop],
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Buffers equal-length chunks and appends every completed output hop to
    /// `out`.
    pub fn push(&mut self, mic: &[f32], far: &[f32], out: &mut Vec<f32>) -> Result<()> {
        if mic.len() != far.len() {
            return Err(Error::Contract(format!(
                "mic and far-end chunks differ in length ({} vs {})",
                mic.len(),
                far.len()
            )));
        }
        self.mic.extend(mic);
        self.far.extend(far);
        let hop = self.engine.hop();
        while self.mic.len() >= hop {
            for (dst, src) in self.mic_hop.iter_mut().zip(self.mic.drain(..hop)) {
                *dst = src;
            }
            for (dst, src) in self.far_hop.iter_mut().zip(self.far.drain(..hop)) {
                *dst = src;
            }
            self.engine.process_frame(&self.mic_hop, &self.far_hop, &mut self.out_hop)?;
            out.extend_from_slice(&self.out_hop);
        }
        Ok(())
    }
}

/// Per-frame timing summary.
#[derive(Debug, Clone, Serialize)]
pub struct RtfReport {
    pub frames: usize,
    pub frame_ms: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    /// Mean frame time divided by the frame duration.
    pub rtf: f64,
    pub dsp_mean_ms: f64,
    pub neural_mean_ms: f64,
}

/// Times `engine` on synthetic noise: one second of warm-up, then at least
/// `seconds` of audio.
pub fn measure_rtf(engine: &mut Engine, seconds: f64) -> Result<RtfReport> {
    let hop = engine.hop();
    let frame_secs = hop as f64 / SAMPLE_RATE as f64;
    let warmup = (1.0 / frame_secs).ceil() as usize;
    let frames = ((seconds / frame_secs).ceil() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut noise = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.random_range(-0.1f32..0.1)).collect() };
    let (mic, far) = (noise(hop * 64), noise(hop * 64));
    let mut out = vec![0.0f32; hop];
    let block = |i: usize| (i % 64) * hop..(i % 64 + 1) * hop;

    engine.reset();
    for i in 0..warmup {
        engine.process_frame(&mic[block(i)], &far[block(i)], &mut out)?;
    }
    let mut totals = Vec::with_capacity(frames);
    let (mut dsp, mut neural) = (Duration::ZERO, Duration::ZERO);
    for i in 0..frames {
        let start = Instant::now();
        engine.process_frame(&mic[block(i)], &far[block(i)], &mut out)?;
        totals.push(start.elapsed());
        let t = engine.last_timing();
        dsp += t.dsp;
        neural += t.neural;
    }
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let mean_ms = totals.iter().map(|&d| ms(d)).sum::<f64>() / frames as f64;
    let mut sorted: Vec<f64> = totals.iter().map(|&d| ms(d)).collect();
    sorted.sort_by(f64::total_cmp);
    let p95_ms = sorted[((frames as f64 * 0.95).ceil() as usize).clamp(1, frames) - 1];
    let max_ms = sorted[frames - 1];
    let frame_ms = frame_secs * 1e3;
    Ok(RtfReport {
        frames,
        frame_ms,
        mean_ms,
        p95_ms,
        max_ms,
        rtf: mean_ms / frame_ms,
        dsp_mean_ms: ms(dsp) / frames as f64,
        neural_mean_ms: ms(neural) / frames as f64,
    })
}
