//! Synthetic echo scenarios and objective metrics that need no learned model.
//!
//! A scenario runs in thirds: far-end talk only, near-end talk only, then
//! both. The far end is heard at the microphone through a synthetic room
//! impulse response and a bulk delay, so segment boundaries are placed on
//! the microphone timeline where each component is actually present.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::align::{argmax, DelayDistribution};
use crate::dsp::{AudioBuffer, SAMPLE_RATE};
use crate::error::{config_err, shape_err, Error, Result};

/// ERLE reported when the residual is digital silence.
pub const ERLE_CAP_DB: f64 = 80.0;
/// Energies below this count as digital silence.
pub const SILENCE_ENERGY: f64 = 1e-12;
/// Hop used to convert frame delays to samples.
pub const SCENARIO_HOP: usize = 240;
/// RMS of the near-end talker over its active span; SER and SNR are relative to it.
pub const NEAR_RMS: f64 = 0.03;
const FAR_RMS: f64 = 0.1;
/// Gap between the direct path and the start of the diffuse tail.
const TAIL_ONSET_S: f64 = 0.005;
/// Diffuse tail amplitude relative to the direct path, before normalisation.
const TAIL_GAIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentLabel {
    #[serde(rename = "FEST")]
    FarSingleTalk,
    #[serde(rename = "NEST")]
    NearSingleTalk,
    #[serde(rename = "DT")]
    DoubleTalk,
}

/// A labelled time range `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64, SegmentLabel)", into = "(f64, f64, SegmentLabel)")]
pub struct Segment {
    pub start_ms: f64,
    pub end_ms: f64,
    pub label: SegmentLabel,
}

impl From<(f64, f64, SegmentLabel)> for Segment {
    fn from((start_ms, end_ms, label): (f64, f64, SegmentLabel)) -> Self {
        Self { start_ms, end_ms, label }
    }
}

impl From<Segment> for (f64, f64, SegmentLabel) {
    fn from(s: Segment) -> Self {
        (s.start_ms, s.end_ms, s.label)
    }
}

impl Segment {
    fn from_samples(start: usize, end: usize, label: SegmentLabel) -> Self {
        let ms = |n: usize| n as f64 * 1000.0 / SAMPLE_RATE as f64;
        Self { start_ms: ms(start), end_ms: ms(end), label }
    }

    /// Sample range at `sample_rate`, clipped to `len`.
    pub fn sample_range(&self, sample_rate: u32, len: usize) -> std::ops::Range<usize> {
        let idx = |ms: f64| ((ms * sample_rate as f64 / 1000.0).round().max(0.0) as usize).min(len);
        let (a, b) = (idx(self.start_ms), idx(self.end_ms));
        a..b.max(a)
    }
}

/// Scenario parameters. `ser_db` and `snr_db` may be `+inf` to drop the echo
/// or the noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub duration_s: f64,
    pub ser_db: f64,
    pub snr_db: f64,
    /// Bulk echo delay in frames.
    pub bulk_delay: usize,
    pub d_max: usize,
    pub t60_s: f64,
    pub near_active: bool,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self { duration_s: 6.0, ser_db: 0.0, snr_db: 30.0, bulk_delay: 10, d_max: 100, t60_s: 0.3, near_active: true }
    }
}

impl ScenarioParams {
    pub const SER_RANGE: (f64, f64) = (-10.0, 40.0);
    pub const SNR_RANGE: (f64, f64) = (-5.0, 60.0);
    pub const T60_RANGE: (f64, f64) = (0.1, 0.6);
    pub const DURATION_RANGE: (f64, f64) = (0.5, 600.0);

    pub fn validate(&self) -> Result<()> {
        let level = |name: &str, v: f64, (lo, hi): (f64, f64)| {
            if v == f64::INFINITY || (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(config_err!("{name} must be in [{lo}, {hi}] or inf, got {v}"))
            }
        };
        level("ser_db", self.ser_db, Self::SER_RANGE)?;
        level("snr_db", self.snr_db, Self::SNR_RANGE)?;
        let (lo, hi) = Self::T60_RANGE;
        if !(lo..=hi).contains(&self.t60_s) {
            return Err(config_err!("t60_s must be in [{lo}, {hi}], got {}", self.t60_s));
        }
        let (lo, hi) = Self::DURATION_RANGE;
        if !(lo..=hi).contains(&self.duration_s) {
            return Err(config_err!("duration_s must be in [{lo}, {hi}], got {}", self.duration_s));
        }
        if self.d_max == 0 || self.bulk_delay >= self.d_max {
            return Err(config_err!(
                "bulk_delay must be in [0, d_max) with d_max > 0, got {} and {}",
                self.bulk_delay,
                self.d_max
            ));
        }
        Ok(())
    }

    /// Total length in samples at the scenario rate.
    pub fn len(&self) -> usize {
        (self.duration_s * SAMPLE_RATE as f64).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ground truth written next to a synthesized scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub seed: u64,
    pub sample_rate: u32,
    pub params: ScenarioParams,
    /// Bulk delay in frames, repeated from `params` for convenience.
    pub bulk_delay: usize,
    pub bulk_delay_samples: usize,
    pub segments: Vec<Segment>,
}

impl ScenarioTruth {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario truth serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err!("{e}"))
    }
}

/// One synthesized echo scenario at 24 kHz. `mic` is exactly
/// `echo + near_end + noise`, with `echo` the scaled, delayed, reverberant far end.
#[derive(Debug, Clone)]
pub struct EchoScenario {
    pub seed: u64,
    pub params: ScenarioParams,
    pub far_end: AudioBuffer,
    pub near_end: AudioBuffer,
    pub echo: AudioBuffer,
    pub noise: AudioBuffer,
    pub mic: AudioBuffer,
    /// Unit-energy room impulse response.
    pub rir: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl EchoScenario {
    pub fn bulk_delay(&self) -> usize {
        self.params.bulk_delay
    }

    pub fn fest_segments(&self) -> Vec<Segment> {
        self.segments.iter().filter(|s| s.label == SegmentLabel::FarSingleTalk).copied().collect()
    }

    pub fn truth(&self) -> ScenarioTruth {
        ScenarioTruth {
            seed: self.seed,
            sample_rate: SAMPLE_RATE,
            params: self.params.clone(),
            bulk_delay: self.params.bulk_delay,
            bulk_delay_samples: self.params.bulk_delay * SCENARIO_HOP,
            segments: self.segments.clone(),
        }
    }
}

/// Direct-path spike followed, after 5 ms, by white noise decaying 60 dB over
/// `t60_s`. Normalised to unit energy.
pub fn synth_rir(rng: &mut impl Rng, t60_s: f64) -> Vec<f64> {
    let rate = SAMPLE_RATE as f64;
    let onset = (TAIL_ONSET_S * rate).round() as usize;
    let len = onset + (t60_s * rate).ceil() as usize;
    let decay = -3.0 * std::f64::consts::LN_10 / (t60_s * rate);
    let mut h = vec![0.0; len];
    h[0] = 1.0;
    for (i, v) in h.iter_mut().enumerate().skip(onset) {
        let n: f64 = rng.sample(StandardNormal);
        *v = TAIL_GAIN * n * (decay * (i - onset) as f64).exp();
    }
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= norm);
    h
}

/// Tilted noise with a slow amplitude envelope, zero outside `active`.
fn talker(rng: &mut impl Rng, len: usize, active: &[(usize, usize)], rms: f64) -> Vec<f64> {
    let rate = SAMPLE_RATE as f64;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut out = vec![0.0; len];
    let mut lp = 0.0;
    for (i, v) in out.iter_mut().enumerate() {
        let n: f64 = rng.sample(StandardNormal);
        lp = 0.8 * lp + n;
        let env = 1.0 + 0.5 * (std::f64::consts::TAU * 4.0 * i as f64 / rate + phase).sin();
        if active.iter().any(|&(a, b)| (a..b).contains(&i)) {
            *v = lp * env;
        }
    }
    let (energy, count) = active.iter().fold((0.0, 0), |(e, c), &(a, b)| (e + energy(&out[a..b]), c + (b - a)));
    if energy > 0.0 {
        let g = rms * (count as f64 / energy).sqrt();
        out.iter_mut().for_each(|v| *v *= g);
    }
    out
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Causal convolution truncated to `len` output samples.
fn convolve(x: &[f64], h: &[f64], len: usize) -> Vec<f64> {
    let n = (x.len() + h.len()).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let (fwd, inv) = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
    let spectrum = |v: &[f64]| {
        let mut buf: Vec<Complex64> = v.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        buf.resize(n, Complex64::new(0.0, 0.0));
        fwd.process(&mut buf);
        buf
    };
    let mut y = spectrum(x);
    for (a, b) in y.iter_mut().zip(spectrum(h)) {
        *a *= b;
    }
    inv.process(&mut y);
    // Exact zeros where no input sample reaches, instead of FFT round-off.
    let mut live = vec![0usize; x.len() + 1];
    for (i, &v) in x.iter().enumerate() {
        live[i + 1] = live[i] + usize::from(v != 0.0);
    }
    (0..len)
        .map(|i| {
            let (a, b) = ((i + 1).saturating_sub(h.len()).min(x.len()), (i + 1).min(x.len()));
            if live[b] > live[a] {
                y[i].re / n as f64
            } else {
                0.0
            }
        })
        .collect()
}

fn audio(x: &[f64]) -> AudioBuffer {
    AudioBuffer::new(x.iter().map(|&v| v as f32).collect(), SAMPLE_RATE).expect("scenario rate is supported")
}

/// Builds a scenario. SER is the near-to-echo energy ratio over the
/// double-talk segment, or against the near-end reference level over the
/// far-end single-talk segments when there is no double talk. SNR is noise
/// power against the near-end reference level. Deterministic in `seed`.
pub fn synth_scenario(seed: u64, params: &ScenarioParams) -> Result<EchoScenario> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = params.len();
    let (b1, b2) = (len / 3, 2 * len / 3);
    let delay = params.bulk_delay * SCENARIO_HOP;

    let rir = synth_rir(&mut rng, params.t60_s);
    let far = talker(&mut rng, len, &[(0, b1), (b2, len)], FAR_RMS);
    let near_span: &[(usize, usize)] = if params.near_active { &[(b1, len)] } else { &[] };
    let near = talker(&mut rng, len, near_span, NEAR_RMS);
    let white: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();

    // Segments on the microphone timeline.
    let tail = rir.len();
    let mut segments = Vec::new();
    let mut push = |a: usize, b: usize, label| {
        if a < b {
            segments.push(Segment::from_samples(a, b, label));
        }
    };
    push(delay, b1, SegmentLabel::FarSingleTalk);
    if params.near_active {
        push(b1 + delay + tail, b2, SegmentLabel::NearSingleTalk);
        push(b2 + delay, len, SegmentLabel::DoubleTalk);
    } else {
        push(b2 + delay, len, SegmentLabel::FarSingleTalk);
    }

    let mut echo = vec![0.0; len];
    if params.ser_db.is_finite() && delay < len {
        echo[delay..].copy_from_slice(&convolve(&far, &rir, len - delay));
        let target = 10f64.powf(-params.ser_db / 10.0);
        let span_energy = |label, x: &[f64]| {
            segments
                .iter()
                .filter(|s| s.label == label)
                .map(|s| energy(&x[s.sample_range(SAMPLE_RATE, len)]))
                .sum::<f64>()
        };
        let dt_echo = span_energy(SegmentLabel::DoubleTalk, &echo);
        let gain = if dt_echo > 0.0 {
            (target * span_energy(SegmentLabel::DoubleTalk, &near) / dt_echo).sqrt()
        } else {
            let fest: usize = segments
                .iter()
                .filter(|s| s.label == SegmentLabel::FarSingleTalk)
                .map(|s| s.sample_range(SAMPLE_RATE, len).len())
                .sum();
            let e = span_energy(SegmentLabel::FarSingleTalk, &echo);
            if e > 0.0 {
                (target * NEAR_RMS * NEAR_RMS * fest as f64 / e).sqrt()
            } else {
                0.0
            }
        };
        echo.iter_mut().for_each(|v| *v *= gain);
    }

    let mut noise = vec![0.0; len];
    if params.snr_db.is_finite() {
        let g = NEAR_RMS * 10f64.powf(-params.snr_db / 20.0) * (len as f64 / energy(&white)).sqrt();
        noise.iter_mut().zip(&white).for_each(|(n, w)| *n = g * w);
    }

    // Summed in f32 so that mic is exactly the sum of the stored components.
    let (far_a, near_a, echo_a, noise_a) = (audio(&far), audio(&near), audio(&echo), audio(&noise));
    let mic: Vec<f32> =
        echo_a.samples().iter().zip(near_a.samples()).zip(noise_a.samples()).map(|((e, s), n)| e + s + n).collect();
    Ok(EchoScenario {
        seed,
        params: params.clone(),
        far_end: far_a,
        near_end: near_a,
        echo: echo_a,
        noise: noise_a,
        mic: AudioBuffer::new(mic, SAMPLE_RATE)?,
        rir,
        segments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentErle {
    pub start_ms: f64,
    pub end_ms: f64,
    pub erle_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErleReport {
    pub segments: Vec<SegmentErle>,
    /// Number of segments skipped because they held no samples.
    pub skipped: usize,
    /// Mean of the per-segment dB values; absent when no segment was usable.
    pub mean_db: Option<f64>,
}

impl ErleReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("erle report serializes")
    }
}

/// `10 log10(mic / out)` of two energies, clamped to +-80 dB.
pub fn erle_from_energies(mic: f64, out: f64) -> f64 {
    match (mic < SILENCE_ENERGY, out < SILENCE_ENERGY) {
        (true, true) => 0.0,
        (false, true) => ERLE_CAP_DB,
        (true, false) => -ERLE_CAP_DB,
        (false, false) => (10.0 * (mic / out).log10()).clamp(-ERLE_CAP_DB, ERLE_CAP_DB),
    }
}

/// ERLE over the far-end single-talk entries of `segments`; other labels are
/// ignored and empty segments are skipped with a warning.
pub fn erle(mic: &AudioBuffer, out: &AudioBuffer, segments: &[Segment]) -> Result<ErleReport> {
    if mic.sample_rate() != out.sample_rate() {
        return Err(shape_err!("mic and output rates differ ({} vs {} Hz)", mic.sample_rate(), out.sample_rate()));
    }
    let wide = |a: &AudioBuffer| a.samples().iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
    erle_slices(&wide(mic), &wide(out), mic.sample_rate(), segments)
}

/// [`erle`] on raw samples.
pub fn erle_slices(mic: &[f64], out: &[f64], sample_rate: u32, segments: &[Segment]) -> Result<ErleReport> {
    if mic.len() != out.len() {
        return Err(shape_err!("mic and output lengths differ ({} vs {})", mic.len(), out.len()));
    }
    let mut report = ErleReport { segments: Vec::new(), skipped: 0, mean_db: None };
    for s in segments.iter().filter(|s| s.label == SegmentLabel::FarSingleTalk) {
        let r = s.sample_range(sample_rate, mic.len());
        if r.is_empty() {
            log::warn!("skipping empty ERLE segment {}..{} ms", s.start_ms, s.end_ms);
            report.skipped += 1;
            continue;
        }
        report.segments.push(SegmentErle {
            start_ms: s.start_ms,
            end_ms: s.end_ms,
            erle_db: erle_from_energies(energy(&mic[r.clone()]), energy(&out[r])),
        });
    }
    if !report.segments.is_empty() {
        let sum: f64 = report.segments.iter().map(|s| s.erle_db).sum();
        report.mean_db = Some(sum / report.segments.len() as f64);
    }
    Ok(report)
}

/// Fraction of frames from `warmup` on whose most likely delay (lowest index
/// on ties) equals `true_delay`.
pub fn delay_accuracy(delays: &DelayDistribution, true_delay: usize, warmup: usize) -> Result<f64> {
    let frames = delays.frames();
    if warmup >= frames {
        return Err(Error::Contract(format!("warm-up of {warmup} frames leaves none of {frames}")));
    }
    let hits = (warmup..frames).filter(|&t| argmax(delays.row(t)) == true_delay).count();
    Ok(hits as f64 / (frames - warmup) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rir_has_unit_energy_and_decays() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = synth_rir(&mut rng, 0.3);
        assert!((energy(&h) - 1.0).abs() < 1e-12);
        let onset = 120;
        let early = energy(&h[onset..onset + 2400]);
        let late = energy(&h[h.len() - 2400..]);
        assert!(early > 1e4 * late);
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..37).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = convolve(&x, &h, 320);
        for (n, v) in y.iter().enumerate() {
            let want: f64 = (0..h.len()).filter(|&k| k <= n && n - k < x.len()).map(|k| h[k] * x[n - k]).sum();
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn erle_energy_rules() {
        assert_eq!(erle_from_energies(1.0, 1.0), 0.0);
        assert_eq!(erle_from_energies(1.0, 0.0), ERLE_CAP_DB);
        assert_eq!(erle_from_energies(0.0, 0.0), 0.0);
        assert_eq!(erle_from_energies(0.0, 1.0), -ERLE_CAP_DB);
        assert_eq!(erle_from_energies(1.0, 1e-11), ERLE_CAP_DB);
    }

    #[test]
    fn segment_ranges_clip() {
        let s = Segment { start_ms: 10.0, end_ms: 1e6, label: SegmentLabel::FarSingleTalk };
        assert_eq!(s.sample_range(24_000, 1000), 240..1000);
        let s = Segment { start_ms: 100.0, end_ms: 50.0, label: SegmentLabel::FarSingleTalk };
        assert!(s.sample_range(24_000, 10_000).is_empty());
    }

    #[test]
    fn params_ranges() {
        assert!(ScenarioParams::default().validate().is_ok());
        let bad = [
            ScenarioParams { ser_db: f64::NEG_INFINITY, ..Default::default() },
            ScenarioParams { ser_db: f64::NAN, ..Default::default() },
            ScenarioParams { snr_db: 99.0, ..Default::default() },
            ScenarioParams { t60_s: 0.05, ..Default::default() },
            ScenarioParams { bulk_delay: 100, ..Default::default() },
            ScenarioParams { duration_s: 0.0, ..Default::default() },
        ];
        for p in bad {
            assert!(matches!(p.validate(), Err(Error::Config(_))), "{p:?}");
        }
    }
}
