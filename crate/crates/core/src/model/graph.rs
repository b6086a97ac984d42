use rustfft::num_complex::Complex64;

use super::config::ModelConfig;
use super::layout::tensor_layout;
use crate::align::{AlignBlock, AlignStreamState, DelayDistribution};
use crate::ccm::{ccm_apply, ccm_build, CcmStreamState};
use crate::dsp::{compress_bin, istft, stft, AudioBuffer, ComplexSpectrum, SAMPLE_RATE};
use crate::error::{config_err, shape_err, Error, Result};
use crate::nn::{
    crop_freq, elu_in_place, pixel_shuffle_freq, shuffle_frame, BatchNorm, Conv2d, ConvSpec, ConvStreamState,
    FeatureMap, Gru, GruState, Linear, BN_EPS,
};
use crate::weights::WeightStore;

fn add_in_place(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

struct Loader<'a> {
    store: &'a WeightStore,
}

impl Loader<'_> {
    fn tensor(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let t = self.store.get(name).ok_or_else(|| Error::Load(format!("missing tensor '{name}'")))?;
        if t.shape() != shape {
            return Err(Error::Load(format!("tensor '{name}' has shape {:?}, expected {shape:?}", t.shape())));
        }
        Ok(t.to_f64())
    }

    fn conv(&self, prefix: &str, spec: ConvSpec) -> Result<Conv2d> {
        let w = self.tensor(
            &format!("{prefix}.weight"),
            &[spec.out_channels, spec.in_channels, spec.kernel_t, spec.kernel_f],
        )?;
        let b = self.tensor(&format!("{prefix}.bias"), &[spec.out_channels])?;
        Conv2d::new(spec, w, b)
    }

    fn bn(&self, prefix: &str, c: usize) -> Result<BatchNorm> {
        let get = |s: &str| self.tensor(&format!("{prefix}.{s}"), &[c]);
        let (gamma, beta, mean, var) = (get("gamma")?, get("beta")?, get("mean")?, get("var")?);
        BatchNorm::new(&gamma, &beta, &mean, &var, BN_EPS)
            .map_err(|e| Error::Load(format!("batch norm '{prefix}': {e}")))
    }

    fn residual(&self, prefix: &str, c: usize) -> Result<Residual> {
        Ok(Residual {
            conv: self.conv(&format!("{prefix}.res.conv"), ModelConfig::same_spec(c, c))?,
            bn: self.bn(&format!("{prefix}.res.bn"), c)?,
        })
    }

    fn encoder(&self, prefix: &str, cin: usize, cout: usize, residual: bool) -> Result<EncoderBlock> {
        Ok(EncoderBlock {
            conv: self.conv(&format!("{prefix}.conv"), ModelConfig::down_spec(cin, cout))?,
            bn: self.bn(&format!("{prefix}.bn"), cout)?,
            residual: residual.then(|| self.residual(prefix, cout)).transpose()?,
        })
    }
}

/// `x + ELU(BN(conv(x)))` with a shape-preserving convolution.
#[derive(Debug, Clone)]
struct Residual {
    conv: Conv2d,
    bn: BatchNorm,
}

#[derive(Debug, Clone)]
struct ResidualState {
    conv: ConvStreamState,
    tmp: Vec<f64>,
}

impl Residual {
    fn forward(&self, x: &mut FeatureMap) -> Result<()> {
        let mut r = self.conv.forward(x)?;
        self.bn.apply(r.data_mut());
        elu_in_place(r.data_mut(), 1.0);
        add_in_place(x.data_mut(), r.data());
        Ok(())
    }

    fn state(&self, bins: usize) -> Result<ResidualState> {
        Ok(ResidualState { conv: self.conv.stream_state(bins)?, tmp: vec![0.0; self.conv.spec().out_channels * bins] })
    }

    fn step(&self, st: &mut ResidualState, x: &mut [f64]) -> Result<()> {
        self.conv.step(&mut st.conv, x, &mut st.tmp)?;
        self.bn.apply(&mut st.tmp);
        elu_in_place(&mut st.tmp, 1.0);
        add_in_place(x, &st.tmp);
        Ok(())
    }
}

/// Downsampling conv, batch norm, ELU, optional residual.
#[derive(Debug, Clone)]
struct EncoderBlock {
    conv: Conv2d,
    bn: BatchNorm,
    residual: Option<Residual>,
}

#[derive(Debug, Clone)]
struct EncoderState {
    conv: ConvStreamState,
    residual: Option<ResidualState>,
}

impl EncoderBlock {
    fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        let mut y = self.conv.forward(x)?;
        self.bn.apply(y.data_mut());
        elu_in_place(y.data_mut(), 1.0);
        if let Some(res) = &self.residual {
            res.forward(&mut y)?;
        }
        Ok(y)
    }

    fn state(&self, in_bins: usize) -> Result<EncoderState> {
        let conv = self.conv.stream_state(in_bins)?;
        let out_bins = conv.out_bins();
        Ok(EncoderState { conv, residual: self.residual.as_ref().map(|r| r.state(out_bins)).transpose()? })
    }

    fn step(&self, st: &mut EncoderState, input: &[f64], out: &mut [f64]) -> Result<()> {
        self.conv.step(&mut st.conv, input, out)?;
        self.bn.apply(out);
        elu_in_place(out, 1.0);
        if let (Some(res), Some(rs)) = (&self.residual, &mut st.residual) {
            res.step(rs, out)?;
        }
        Ok(())
    }
}

/// Skip projection, optional residual, sub-pixel upsampling and, except for
/// the last block, batch norm and ELU.
#[derive(Debug, Clone)]
struct DecoderBlock {
    skip: Conv2d,
    residual: Option<Residual>,
    subpixel: Conv2d,
    bn: Option<BatchNorm>,
    out_channels: usize,
    out_bins: usize,
}

#[derive(Debug, Clone)]
struct DecoderState {
    skip: ConvStreamState,
    residual: Option<ResidualState>,
    subpixel: ConvStreamState,
    summed: Vec<f64>,
    upsampled: Vec<f64>,
}

impl DecoderBlock {
    fn forward(&self, x: &FeatureMap, enc: &FeatureMap) -> Result<FeatureMap> {
        let mut s = skip_project(enc, x, &self.skip)?;
        if let Some(res) = &self.residual {
            res.forward(&mut s)?;
        }
        let up = pixel_shuffle_freq(&self.subpixel.forward(&s)?)?;
        let mut y = crop_freq(&up, self.out_bins)?;
        if let Some(bn) = &self.bn {
            bn.apply(y.data_mut());
            elu_in_place(y.data_mut(), 1.0);
        }
        Ok(y)
    }

    fn state(&self, in_bins: usize) -> Result<DecoderState> {
        let cin = self.skip.spec().out_channels;
        Ok(DecoderState {
            skip: self.skip.stream_state(in_bins)?,
            residual: self.residual.as_ref().map(|r| r.state(in_bins)).transpose()?,
            subpixel: self.subpixel.stream_state(in_bins)?,
            summed: vec![0.0; cin * in_bins],
            upsampled: vec![0.0; 2 * self.out_channels * in_bins],
        })
    }

    fn step(&self, st: &mut DecoderState, input: &[f64], enc: &[f64], out: &mut [f64]) -> Result<()> {
        self.skip.step(&mut st.skip, enc, &mut st.summed)?;
        for (s, x) in st.summed.iter_mut().zip(input) {
            *s += x;
        }
        if let (Some(res), Some(rs)) = (&self.residual, &mut st.residual) {
            res.step(rs, &mut st.summed)?;
        }
        self.subpixel.step(&mut st.subpixel, &st.summed, &mut st.upsampled)?;
        let in_bins = st.upsampled.len() / (2 * self.out_channels);
        shuffle_frame(&st.upsampled, self.out_channels, in_bins, out, self.out_bins);
        if let Some(bn) = &self.bn {
            bn.apply(out);
            elu_in_place(out, 1.0);
        }
        Ok(())
    }
}

/// Adds a point-wise projection of encoder features to decoder features.
pub fn skip_project(enc: &FeatureMap, dec: &FeatureMap, proj: &Conv2d) -> Result<FeatureMap> {
    if enc.frames() != dec.frames() || enc.bins() != dec.bins() {
        return Err(shape_err!(
            "skip connection needs equal (t, f): encoder {:?}, decoder {:?}",
            enc.shape(),
            dec.shape()
        ));
    }
    if proj.spec().out_channels != dec.channels() {
        return Err(shape_err!(
            "skip projection yields {} channels, decoder has {}",
            proj.spec().out_channels,
            dec.channels()
        ));
    }
    let p = proj.forward(enc)?;
    let data = dec.data().iter().zip(p.data()).map(|(x, s)| x + s).collect();
    FeatureMap::from_vec(dec.channels(), dec.frames(), dec.bins(), data)
}

/// Output shape of one named stage of a forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub name: String,
    pub shape: (usize, usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockTrace {
    pub entries: Vec<TraceEntry>,
}

impl BlockTrace {
    fn push(&mut self, name: impl Into<String>, shape: (usize, usize, usize)) {
        self.entries.push(TraceEntry { name: name.into(), shape });
    }

    /// Shapes implied by `cfg` for an input of `frames` frames.
    pub fn from_config(cfg: &ModelConfig, frames: usize) -> Self {
        let ladder = cfg.freq_ladder();
        let mut trace = Self::default();
        trace.push("input", (2, frames, ladder[0]));
        for l in 0..cfg.join_level() {
            trace.push(format!("far_enc.{l}"), (cfg.far_enc_filters[l], frames, ladder[l + 1]));
        }
        for l in 0..cfg.levels() {
            if l == cfg.join_level() {
                let a = cfg.align_config();
                trace.push("align", (a.far_channels, frames, ladder[l]));
            }
            trace.push(format!("mic_enc.{l}"), (cfg.mic_enc_filters[l], frames, ladder[l + 1]));
        }
        let levels = cfg.levels();
        trace.push("bottleneck", (cfg.mic_enc_filters[levels - 1], frames, ladder[levels]));
        for j in 0..levels {
            trace.push(format!("dec.{j}"), (cfg.dec_subpixel_filters[j], frames, ladder[levels - 1 - j]));
        }
        trace
    }

    fn bins_of(&self, prefix: &str) -> Vec<usize> {
        self.entries.iter().filter(|e| e.name.starts_with(prefix)).map(|e| e.shape.2).collect()
    }

    /// Input bins followed by each microphone encoder block's output bins.
    pub fn encoder_ladder(&self) -> Vec<usize> {
        let mut v = self.bins_of("input");
        v.extend(self.bins_of("mic_enc."));
        v
    }

    /// Bottleneck bins followed by each decoder block's output bins.
    pub fn decoder_ladder(&self) -> Vec<usize> {
        let mut v = self.bins_of("bottleneck");
        v.extend(self.bins_of("dec."));
        v
    }
}

/// Result of an offline pass over spectra.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub enhanced: ComplexSpectrum,
    pub delays: DelayDistribution,
    pub trace: BlockTrace,
}

/// An assembled, immutable network.
#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    mic_enc: Vec<EncoderBlock>,
    far_enc: Vec<EncoderBlock>,
    align: AlignBlock,
    gru: Gru,
    linear: Linear,
    decoder: Vec<DecoderBlock>,
}

pub fn build_model(cfg: &ModelConfig, weights: &WeightStore) -> Result<Model> {
    Model::new(cfg, weights)
}

impl Model {
    pub fn new(cfg: &ModelConfig, weights: &WeightStore) -> Result<Self> {
        cfg.validate()?;
        let expected = cfg.config_hash();
        let found = weights.metadata().config_hash;
        if found != expected {
            return Err(Error::Load(format!(
                "weights were saved for config hash {found:016x}, this config hashes to {expected:016x}"
            )));
        }
        let layout = tensor_layout(cfg);
        if let Some(extra) = weights.names().find(|n| !layout.iter().any(|t| t.name == *n)) {
            return Err(Error::Load(format!("unexpected tensor '{extra}' for this config")));
        }

        let ld = Loader { store: weights };
        let mic_enc = (0..cfg.levels())
            .map(|l| {
                ld.encoder(
                    &format!("mic_enc.{l}"),
                    cfg.mic_in_channels(l),
                    cfg.mic_enc_filters[l],
                    cfg.mic_enc_residual[l],
                )
            })
            .collect::<Result<_>>()?;
        let far_enc = (0..cfg.join_level())
            .map(|l| {
                ld.encoder(
                    &format!("far_enc.{l}"),
                    cfg.far_in_channels(l),
                    cfg.far_enc_filters[l],
                    cfg.far_enc_residual[l],
                )
            })
            .collect::<Result<_>>()?;
        let a = cfg.align_config();
        let align = AlignBlock::new(
            a,
            ld.conv("align.q", a.q_spec())?,
            ld.conv("align.k", a.k_spec())?,
            ld.conv("align.tdmap", a.tdmap_spec())?,
        )?;
        let (width, hidden) = (cfg.bottleneck_width(), cfg.gru_hidden);
        let gru = Gru::new(
            width,
            hidden,
            ld.tensor("bottleneck.gru.w_ih", &[3 * hidden, width])?,
            ld.tensor("bottleneck.gru.w_hh", &[3 * hidden, hidden])?,
            ld.tensor("bottleneck.gru.bias", &[3 * hidden])?,
        )?;
        let linear = Linear::new(
            hidden,
            width,
            ld.tensor("bottleneck.linear.weight", &[width, hidden])?,
            ld.tensor("bottleneck.linear.bias", &[width])?,
        )?;
        let ladder = cfg.freq_ladder();
        let levels = cfg.levels();
        let decoder = (0..levels)
            .map(|j| {
                let prefix = format!("dec.{j}");
                let cin = cfg.dec_in_channels(j);
                let cout = cfg.dec_subpixel_filters[j];
                let skip_from = cfg.mic_enc_filters[cfg.skip_level(j)];
                Ok(DecoderBlock {
                    skip: ld.conv(&format!("{prefix}.skip"), ConvSpec::pointwise(skip_from, cin))?,
                    residual: cfg.dec_residual[j].then(|| ld.residual(&prefix, cin)).transpose()?,
                    subpixel: ld.conv(&format!("{prefix}.subpixel"), ModelConfig::same_spec(cin, 2 * cout))?,
                    bn: (j + 1 < levels).then(|| ld.bn(&format!("{prefix}.bn"), cout)).transpose()?,
                    out_channels: cout,
                    out_bins: ladder[levels - 1 - j],
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { cfg: cfg.clone(), mic_enc, far_enc, align, gru, linear, decoder })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Compressed real and imaginary parts as two feature channels.
    fn features(&self, spec: &ComplexSpectrum) -> FeatureMap {
        let e = self.cfg.compress_exponent;
        let (frames, bins) = (spec.frames(), spec.bins());
        let mut out = FeatureMap::zeros(2, frames, bins);
        for t in 0..frames {
            for (f, &z) in spec.frame(t).iter().enumerate() {
                let c = compress_bin(z, e);
                out.set(0, t, f, c.re);
                out.set(1, t, f, c.im);
            }
        }
        out
    }

    /// Runs the network over whole spectra and applies the mask to `mic`.
    pub fn forward_spectrum(&self, mic: &ComplexSpectrum, far: &ComplexSpectrum) -> Result<ForwardOutput> {
        let bins = self.cfg.stft.bins();
        if mic.bins() != bins || far.bins() != bins || mic.frames() != far.frames() {
            return Err(shape_err!(
                "spectra must both be {bins} bins with equal frames: mic {}x{}, far {}x{}",
                mic.frames(),
                mic.bins(),
                far.frames(),
                far.bins()
            ));
        }
        let frames = mic.frames();
        let mut trace = BlockTrace::default();
        trace.push("input", (2, frames, bins));

        let mut far_x = self.features(far);
        for (l, block) in self.far_enc.iter().enumerate() {
            far_x = block.forward(&far_x)?;
            trace.push(format!("far_enc.{l}"), far_x.shape());
        }

        let join = self.cfg.join_level();
        let mut skips = Vec::with_capacity(self.mic_enc.len());
        let mut x = self.features(mic);
        let mut delays = None;
        for (l, block) in self.mic_enc.iter().enumerate() {
            if l == join {
                let (aligned, d) = self.align.forward(&x, &far_x)?;
                trace.push("align", aligned.shape());
                delays = Some(d);
                x = x.concat_channels(&aligned)?;
            }
            x = block.forward(&x)?;
            trace.push(format!("mic_enc.{l}"), x.shape());
            skips.push(x.clone());
        }

        let mut flat = vec![0.0; self.cfg.bottleneck_width()];
        let mut proj = vec![0.0; flat.len()];
        let mut gru_state = self.gru.state();
        for t in 0..frames {
            x.read_frame(t, &mut flat);
            self.gru.step(&flat, &mut gru_state)?;
            self.linear.apply(gru_state.hidden(), &mut proj);
            x.write_frame(t, &proj);
        }
        trace.push("bottleneck", x.shape());

        for (j, block) in self.decoder.iter().enumerate() {
            x = block.forward(&x, &skips[self.cfg.skip_level(j)])?;
            trace.push(format!("dec.{j}"), x.shape());
        }

        let kernel = ccm_build(&x, self.cfg.ccm)?;
        let enhanced = ccm_apply(mic, &kernel, self.cfg.ccm)?;
        Ok(ForwardOutput { enhanced, delays: delays.expect("alignment runs before the last encoder block"), trace })
    }

    /// Full offline pipeline on 24 kHz audio. The shorter input is
    /// zero-padded; the output has the length of the longer one.
    pub fn forward_offline(&self, mic: &AudioBuffer, far: &AudioBuffer) -> Result<AudioBuffer> {
        Ok(self.forward_offline_detailed(mic, far)?.0)
    }

    /// As [`Model::forward_offline`], also returning the delay distribution.
    pub fn forward_offline_detailed(
        &self,
        mic: &AudioBuffer,
        far: &AudioBuffer,
    ) -> Result<(AudioBuffer, DelayDistribution)> {
        for (name, buf) in [("mic", mic), ("far-end", far)] {
            if buf.sample_rate() != SAMPLE_RATE {
                return Err(config_err!(
                    "{name} signal is {} Hz, the model runs at {SAMPLE_RATE} Hz",
                    buf.sample_rate()
                ));
            }
        }
        let len = mic.len().max(far.len());
        let hop = self.cfg.stft.hop;
        // One extra hop completes the overlap-add of the final samples.
        let padded = len.div_ceil(hop) * hop + hop;
        let pad = |b: &AudioBuffer| -> Result<AudioBuffer> {
            let mut s = b.samples().to_vec();
            s.resize(padded, 0.0);
            AudioBuffer::new(s, SAMPLE_RATE)
        };
        let mic_spec = stft(&pad(mic)?, &self.cfg.stft)?;
        let far_spec = stft(&pad(far)?, &self.cfg.stft)?;
        let out = self.forward_spectrum(&mic_spec, &far_spec)?;
        let mut samples = istft(&out.enhanced, &self.cfg.stft)?.into_samples();
        samples.truncate(len);
        Ok((AudioBuffer::new(samples, SAMPLE_RATE)?, out.delays))
    }

    /// Fresh per-frame state with every buffer preallocated.
    pub fn stream_state(&self) -> Result<ModelStreamState> {
        let ladder = self.cfg.freq_ladder();
        let bins = ladder[0];
        let join = self.cfg.join_level();
        let levels = self.cfg.levels();
        let mic_states = self.mic_enc.iter().enumerate().map(|(l, b)| b.state(ladder[l])).collect::<Result<_>>()?;
        let far_states = self.far_enc.iter().enumerate().map(|(l, b)| b.state(ladder[l])).collect::<Result<_>>()?;
        let mic_out = (0..levels).map(|l| vec![0.0; self.cfg.mic_enc_filters[l] * ladder[l + 1]]).collect();
        let far_out = (0..join).map(|l| vec![0.0; self.cfg.far_enc_filters[l] * ladder[l + 1]]).collect();
        let dec_states =
            self.decoder.iter().enumerate().map(|(j, b)| b.state(ladder[levels - j])).collect::<Result<_>>()?;
        let dec_out =
            (0..levels).map(|j| vec![0.0; self.cfg.dec_subpixel_filters[j] * ladder[levels - 1 - j]]).collect();
        let a = self.cfg.align_config();
        let join_bins = ladder[join];
        Ok(ModelStreamState {
            mic_feat: vec![0.0; 2 * bins],
            far_feat: vec![0.0; 2 * bins],
            mic_states,
            far_states,
            mic_out,
            far_out,
            align: self.align.stream_state(join_bins)?,
            aligned: vec![0.0; a.far_channels * join_bins],
            joined: vec![0.0; (a.mic_channels + a.far_channels) * join_bins],
            gru: self.gru.state(),
            bottleneck: vec![0.0; self.cfg.bottleneck_width()],
            dec_states,
            dec_out,
            ccm: CcmStreamState::new(self.cfg.ccm, bins),
        })
    }

    fn fill_features(&self, spec: &[Complex64], out: &mut [f64]) {
        let (re, im) = out.split_at_mut(spec.len());
        for ((z, r), i) in spec.iter().zip(re).zip(im) {
            let c = compress_bin(*z, self.cfg.compress_exponent);
            *r = c.re;
            *i = c.im;
        }
    }

    /// Advances the network by one spectrum frame of each input and writes
    /// the masked microphone frame to `out`.
    pub fn step_spectrum(
        &self,
        st: &mut ModelStreamState,
        mic: &[Complex64],
        far: &[Complex64],
        out: &mut [Complex64],
    ) -> Result<()> {
        let bins = self.cfg.stft.bins();
        if mic.len() != bins || far.len() != bins || out.len() != bins {
            return Err(shape_err!("spectrum frames must have {bins} bins"));
        }
        self.fill_features(mic, &mut st.mic_feat);
        self.fill_features(far, &mut st.far_feat);

        for (l, block) in self.far_enc.iter().enumerate() {
            let (done, rest) = st.far_out.split_at_mut(l);
            let input = if l == 0 { &st.far_feat } else { &done[l - 1] };
            block.step(&mut st.far_states[l], input, &mut rest[0])?;
        }

        let join = self.cfg.join_level();
        for (l, block) in self.mic_enc.iter().enumerate() {
            if l == join {
                let mic_x = &st.mic_out[l - 1];
                self.align.step(&mut st.align, mic_x, &st.far_out[join - 1], &mut st.aligned)?;
                let (m, a) = st.joined.split_at_mut(mic_x.len());
                m.copy_from_slice(mic_x);
                a.copy_from_slice(&st.aligned);
            }
            let (done, rest) = st.mic_out.split_at_mut(l);
            let input = match l {
                0 => &st.mic_feat,
                _ if l == join => &st.joined,
                _ => &done[l - 1],
            };
            block.step(&mut st.mic_states[l], input, &mut rest[0])?;
        }

        let levels = self.cfg.levels();
        self.gru.step(&st.mic_out[levels - 1], &mut st.gru)?;
        self.linear.apply(st.gru.hidden(), &mut st.bottleneck);

        for (j, block) in self.decoder.iter().enumerate() {
            let (done, rest) = st.dec_out.split_at_mut(j);
            let input = if j == 0 { &st.bottleneck } else { &done[j - 1] };
            let enc = &st.mic_out[self.cfg.skip_level(j)];
            block.step(&mut st.dec_states[j], input, enc, &mut rest[0])?;
        }

        st.ccm.step(&st.dec_out[levels - 1], mic, out)
    }
}

/// Per-layer streaming state and activation buffers of a [`Model`].
#[derive(Debug, Clone)]
pub struct ModelStreamState {
    mic_feat: Vec<f64>,
    far_feat: Vec<f64>,
    mic_states: Vec<EncoderState>,
    far_states: Vec<EncoderState>,
    mic_out: Vec<Vec<f64>>,
    far_out: Vec<Vec<f64>>,
    align: AlignStreamState,
    aligned: Vec<f64>,
    joined: Vec<f64>,
    gru: GruState,
    bottleneck: Vec<f64>,
    dec_states: Vec<DecoderState>,
    dec_out: Vec<Vec<f64>>,
    ccm: CcmStreamState,
}

impl ModelStreamState {
    /// Delay probabilities from the most recent step.
    pub fn delay_row(&self) -> &[f64] {
        self.align.delay_row()
    }

    pub fn reset(&mut self) {
        for s in self.mic_states.iter_mut().chain(self.far_states.iter_mut()) {
            s.conv.reset();
            if let Some(r) = &mut s.residual {
                r.conv.reset();
            }
        }
        self.align.reset();
        self.gru.reset();
        for s in &mut self.dec_states {
            s.skip.reset();
            s.subpixel.reset();
            if let Some(r) = &mut s.residual {
                r.conv.reset();
            }
        }
        self.ccm.reset();
    }
}

/// Zeroes the last sub-pixel convolution and sets its bias so the mask is
/// the identity kernel whatever the rest of the network computes.
pub fn force_identity_mask(cfg: &ModelConfig, store: &mut WeightStore) -> Result<()> {
    let last = cfg.levels() - 1;
    let prefix = format!("dec.{last}.subpixel");
    let out = cfg.dec_subpixel_filters[last];
    let tap = cfg.ccm.identity_tap();
    let w = store
        .get_mut(&format!("{prefix}.weight"))
        .ok_or_else(|| Error::Load(format!("missing tensor '{prefix}.weight'")))?;
    w.data_mut().fill(0.0);
    let b = store
        .get_mut(&format!("{prefix}.bias"))
        .ok_or_else(|| Error::Load(format!("missing tensor '{prefix}.bias'")))?;
    if b.data().len() != 2 * out {
        return Err(Error::Load(format!("tensor '{prefix}.bias' has the wrong length")));
    }
    let bias = b.data_mut();
    bias.fill(0.0);
    // Both sub-pixel phases of the real basis component at the identity tap.
    bias[tap] = 1.0;
    bias[out + tap] = 1.0;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeroed_residual_is_identity() {
        let spec = ModelConfig::same_spec(3, 3);
        let res = Residual {
            conv: Conv2d::new(spec, vec![0.0; spec.weight_len()], vec![0.0; 3]).unwrap(),
            bn: BatchNorm::new(&[1.0; 3], &[0.0; 3], &[0.0; 3], &[1.0; 3], BN_EPS).unwrap(),
        };
        let x = FeatureMap::from_fn(3, 5, 7, |c, t, f| ((c * 31 + t * 7 + f) as f64).sin());
        let mut y = x.clone();
        res.forward(&mut y).unwrap();
        assert_eq!(y, x);

        let mut st = res.state(7).unwrap();
        let mut frame = vec![0.0; 21];
        for t in 0..5 {
            x.read_frame(t, &mut frame);
            let before = frame.clone();
            res.step(&mut st, &mut frame).unwrap();
            assert_eq!(frame, before);
        }
    }
}
