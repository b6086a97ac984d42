//! Cross-attention alignment of far-end features to the microphone path.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Result};
use crate::kernels::{axpy, axpy4, dot, dot4};
use crate::nn::{softmax_in_place, Conv2d, ConvSpec, ConvStreamState, FeatureMap};

/// Time taps of the time-delay convolution.
pub const TDMAP_KERNEL_T: usize = 5;
/// Delay taps of the time-delay convolution.
pub const TDMAP_KERNEL_D: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub mic_channels: usize,
    pub far_channels: usize,
    /// Similarity channels produced by the query and key projections.
    pub h: usize,
    /// Number of candidate delays in frames, `0..d_max`.
    pub d_max: usize,
    /// Divide the frequency dot product by `sqrt(bins)`.
    pub scale_dot: bool,
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.d_max == 0 || self.mic_channels == 0 || self.far_channels == 0 {
            return Err(config_err!("alignment h, d_max and channel counts must be positive"));
        }
        Ok(())
    }

    pub fn q_spec(&self) -> ConvSpec {
        ConvSpec::pointwise(self.mic_channels, self.h)
    }

    pub fn k_spec(&self) -> ConvSpec {
        ConvSpec::pointwise(self.far_channels, self.h)
    }

    /// Convolution over `(time, delay)` with a single output map.
    pub fn tdmap_spec(&self) -> ConvSpec {
        ConvSpec {
            in_channels: self.h,
            out_channels: 1,
            kernel_t: TDMAP_KERNEL_T,
            kernel_f: TDMAP_KERNEL_D,
            stride_f: 1,
            pad_f: (1, 1),
        }
    }
}

/// Per-frame probabilities over candidate delays, `[frames x d_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDistribution {
    frames: usize,
    d_max: usize,
    probs: Vec<f64>,
}

impl DelayDistribution {
    pub fn from_vec(frames: usize, d_max: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != frames * d_max {
            return Err(shape_err!("delay distribution needs {frames} x {d_max} values"));
        }
        Ok(Self { frames, d_max, probs })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.probs[t * self.d_max..(t + 1) * self.d_max]
    }

    pub fn data(&self) -> &[f64] {
        &self.probs
    }

    /// Most likely delay at frame `t`; ties go to the smallest delay.
    pub fn argmax(&self, t: usize) -> usize {
        argmax(self.row(t))
    }
}

/// Index of the largest value, first one on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct AlignBlock {
    cfg: AlignConfig,
    q: Conv2d,
    k: Conv2d,
    tdmap: Conv2d,
}

impl AlignBlock {
    pub fn new(cfg: AlignConfig, q: Conv2d, k: Conv2d, tdmap: Conv2d) -> Result<Self> {
        cfg.validate()?;
        if *q.spec() != cfg.q_spec() || *k.spec() != cfg.k_spec() || *tdmap.spec() != cfg.tdmap_spec() {
            return Err(shape_err!("alignment projections do not match the configuration"));
        }
        Ok(Self { cfg, q, k, tdmap })
    }

    pub fn config(&self) -> &AlignConfig {
        &self.cfg
    }

    fn dot_scale(&self, bins: usize) -> f64 {
        if self.cfg.scale_dot {
            1.0 / (bins as f64).sqrt()
        } else {
            1.0
        }
    }

    /// Similarity map for one frame: `z[h][d] = <Q(h, t), K(h, t - d)>`.
    fn similarity<'a>(
        &self,
        q: impl Fn(usize) -> &'a [f64],
        k_past: impl Fn(usize, usize) -> Option<&'a [f64]>,
        scale: f64,
        z: &mut [f64],
    ) {
        let d_max = self.cfg.d_max;
        for h in 0..self.cfg.h {
            let qh = q(h);
            let zh = &mut z[h * d_max..(h + 1) * d_max];
            for (g, zg) in zh.chunks_mut(4).enumerate() {
                let rows: [Option<&[f64]>; 4] =
                    std::array::from_fn(|i| (i < zg.len()).then(|| k_past(h, 4 * g + i)).flatten());
                if let [Some(a), Some(b), Some(c), Some(d)] = rows {
                    for (zv, v) in zg.iter_mut().zip(dot4([a, b, c, d], qh)) {
                        *zv = v * scale;
                    }
                    continue;
                }
                for (zv, kh) in zg.iter_mut().zip(rows) {
                    *zv = kh.map_or(0.0, |kh| dot(kh, qh) * scale);
                }
            }
        }
    }

    /// Weighted sum of delayed far-end frames into `out`. `far_past(d)` is the
    /// whole `[c][bin]` frame `d` steps back, or `None` before the start.
    fn mix<'a>(&self, probs: &[f64], far_past: impl Fn(usize) -> Option<&'a [f64]>, out: &mut [f64]) {
        out.fill(0.0);
        for (g, pg) in probs.chunks(4).enumerate() {
            let rows: [Option<&[f64]>; 4] =
                std::array::from_fn(|i| (i < pg.len()).then(|| far_past(4 * g + i)).flatten());
            if let [Some(a), Some(b), Some(c), Some(d)] = rows {
                axpy4([pg[0], pg[1], pg[2], pg[3]], [a, b, c, d], out);
                continue;
            }
            for (&p, src) in pg.iter().zip(rows) {
                if let Some(src) = src {
                    axpy(p, src, out);
                }
            }
        }
    }

    /// Offline alignment over a whole utterance.
    pub fn forward(&self, mic: &FeatureMap, far: &FeatureMap) -> Result<(FeatureMap, DelayDistribution)> {
        let cfg = &self.cfg;
        if mic.frames() != far.frames() || mic.bins() != far.bins() {
            return Err(shape_err!(
                "alignment needs equal frames and bins: mic {:?}, far {:?}",
                mic.shape(),
                far.shape()
            ));
        }
        if far.channels() != cfg.far_channels {
            return Err(shape_err!("alignment expects {} far-end channels, got {}", cfg.far_channels, far.channels()));
        }
        let (frames, bins) = (mic.frames(), mic.bins());
        let q = self.q.forward(mic)?;
        let k = self.k.forward(far)?;
        let scale = self.dot_scale(bins);

        let mut z = FeatureMap::zeros(cfg.h, frames, cfg.d_max);
        let mut z_frame = vec![0.0; cfg.h * cfg.d_max];
        for t in 0..frames {
            self.similarity(|h| q.row(h, t), |h, d| t.checked_sub(d).map(|s| k.row(h, s)), scale, &mut z_frame);
            z.write_frame(t, &z_frame);
        }
        let mut probs = self.tdmap.forward(&z)?.into_data();
        for row in probs.chunks_exact_mut(cfg.d_max) {
            softmax_in_place(row);
        }

        let frame_len = cfg.far_channels * bins;
        let mut far_frames = vec![0.0; frames * frame_len];
        for (t, dst) in far_frames.chunks_exact_mut(frame_len).enumerate() {
            far.read_frame(t, dst);
        }
        let mut aligned = FeatureMap::zeros(cfg.far_channels, frames, bins);
        let mut out_frame = vec![0.0; frame_len];
        for t in 0..frames {
            self.mix(
                &probs[t * cfg.d_max..(t + 1) * cfg.d_max],
                |d| t.checked_sub(d).map(|s| &far_frames[s * frame_len..(s + 1) * frame_len]),
                &mut out_frame,
            );
            aligned.write_frame(t, &out_frame);
        }
        Ok((aligned, DelayDistribution::from_vec(frames, cfg.d_max, probs)?))
    }

    pub fn stream_state(&self, bins: usize) -> Result<AlignStreamState> {
        let cfg = &self.cfg;
        Ok(AlignStreamState {
            bins,
            frames_seen: 0,
            q_state: self.q.stream_state(bins)?,
            k_state: self.k.stream_state(bins)?,
            tdmap_state: self.tdmap.stream_state(cfg.d_max)?,
            q: vec![0.0; cfg.h * bins],
            k_ring: vec![0.0; cfg.d_max * cfg.h * bins],
            far_ring: vec![0.0; cfg.d_max * cfg.far_channels * bins],
            z: vec![0.0; cfg.h * cfg.d_max],
            probs: vec![0.0; cfg.d_max],
        })
    }

    /// Aligns one frame. `mic_frame` and `far_frame` are `[c][bin]`; the
    /// aligned far-end frame is written to `out` and the delay row is left in
    /// the state.
    pub fn step(
        &self,
        state: &mut AlignStreamState,
        mic_frame: &[f64],
        far_frame: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let cfg = &self.cfg;
        let bins = state.bins;
        let far_len = cfg.far_channels * bins;
        if mic_frame.len() != cfg.mic_channels * bins || far_frame.len() != far_len || out.len() != far_len {
            return Err(shape_err!("alignment frame sizes do not match {bins} bins"));
        }
        let d_max = cfg.d_max;
        let slot = state.frames_seen % d_max;
        let k_len = cfg.h * bins;

        self.q.step(&mut state.q_state, mic_frame, &mut state.q)?;
        self.k.step(&mut state.k_state, far_frame, &mut state.k_ring[slot * k_len..(slot + 1) * k_len])?;
        state.far_ring[slot * far_len..(slot + 1) * far_len].copy_from_slice(far_frame);

        let t = state.frames_seen;
        let scale = self.dot_scale(bins);
        let ring_slot = |d: usize| (t >= d).then(|| (t - d) % d_max);
        {
            let (q, k_ring) = (&state.q, &state.k_ring);
            self.similarity(
                |h| &q[h * bins..(h + 1) * bins],
                |h, d| {
                    ring_slot(d).map(|s| {
                        let start = s * k_len + h * bins;
                        &k_ring[start..start + bins]
                    })
                },
                scale,
                &mut state.z,
            );
        }
        self.tdmap.step(&mut state.tdmap_state, &state.z, &mut state.probs)?;
        softmax_in_place(&mut state.probs);
        let far_ring = &state.far_ring;
        self.mix(&state.probs, |d| ring_slot(d).map(|s| &far_ring[s * far_len..(s + 1) * far_len]), out);
        state.frames_seen += 1;
        Ok(())
    }
}

/// Key and far-end histories plus time-delay convolution state.
#[derive(Debug, Clone)]
pub struct AlignStreamState {
    bins: usize,
    frames_seen: usize,
    q_state: ConvStreamState,
    k_state: ConvStreamState,
    tdmap_state: ConvStreamState,
    q: Vec<f64>,
    k_ring: Vec<f64>,
    far_ring: Vec<f64>,
    z: Vec<f64>,
    probs: Vec<f64>,
}

impl AlignStreamState {
    /// Delay probabilities from the most recent step.
    pub fn delay_row(&self) -> &[f64] {
        &self.probs
    }

    pub fn reset(&mut self) {
        self.frames_seen = 0;
        self.q_state.reset();
        self.k_state.reset();
        self.tdmap_state.reset();
        self.k_ring.fill(0.0);
        self.far_ring.fill(0.0);
        self.probs.fill(0.0);
    }
}

pub fn align_forward(
    mic: &FeatureMap,
    far: &FeatureMap,
    block: &AlignBlock,
) -> Result<(FeatureMap, DelayDistribution)> {
    block.forward(mic, far)
}

/// Streams one frame of each input through `block`.
pub fn align_stream_step(
    mic_frame: &FeatureMap,
    far_frame: &FeatureMap,
    state: &mut AlignStreamState,
    block: &AlignBlock,
) -> Result<(FeatureMap, Vec<f64>)> {
    if mic_frame.frames() != 1 || far_frame.frames() != 1 {
        return Err(shape_err!("streaming alignment takes single frames"));
    }
    let mut out = FeatureMap::zeros(block.cfg.far_channels, 1, far_frame.bins());
    block.step(state, mic_frame.data(), far_frame.data(), out.data_mut())?;
    Ok((out, state.delay_row().to_vec()))
}
