//! Random inputs and direct-formula oracles shared by the integration tests.
#![allow(dead_code)]

use deepvqe::align::{AlignBlock, AlignConfig};
use deepvqe::ccm::ComplexMaskKernel;
use deepvqe::dsp::ComplexSpectrum;
use deepvqe::nn::{Conv2d, ConvSpec, FeatureMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn random_map(r: &mut ChaCha8Rng, c: usize, t: usize, f: usize) -> FeatureMap {
    FeatureMap::from_vec(c, t, f, random_vec(r, c * t * f)).unwrap()
}

pub fn random_spec(r: &mut ChaCha8Rng, t: usize, f: usize) -> ComplexSpectrum {
    let data = (0..t * f).map(|_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
    ComplexSpectrum::from_vec(t, f, data).unwrap()
}

pub fn random_conv(r: &mut ChaCha8Rng, spec: ConvSpec) -> Conv2d {
    Conv2d::new(spec, random_vec(r, spec.weight_len()), random_vec(r, spec.out_channels)).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_complex_err(a: &ComplexSpectrum, b: &ComplexSpectrum) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Direct convolution straight from the definition.
pub fn naive_conv(x: &FeatureMap, conv: &Conv2d) -> FeatureMap {
    let s = conv.spec();
    let (_, t_len, f_len) = x.shape();
    let out_f = (f_len + s.pad_f.0 + s.pad_f.1 - s.kernel_f) / s.stride_f + 1;
    let w = conv.weights();
    FeatureMap::from_fn(s.out_channels, t_len, out_f, |o, t, j| {
        let mut acc = conv.bias()[o];
        for i in 0..s.in_channels {
            for kt in 0..s.kernel_t {
                let ti = t as isize - (s.kernel_t - 1) as isize + kt as isize;
                if ti < 0 {
                    continue;
                }
                for kf in 0..s.kernel_f {
                    let fi = (j * s.stride_f + kf) as isize - s.pad_f.0 as isize;
                    if fi < 0 || fi >= f_len as isize {
                        continue;
                    }
                    let wi = ((o * s.in_channels + i) * s.kernel_t + kt) * s.kernel_f + kf;
                    acc += w[wi] * x.get(i, ti as usize, fi as usize);
                }
            }
        }
        acc
    })
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar GRU cell written from the gate equations.
pub fn gru_oracle(x: &[f64], h: &[f64], w_ih: &[f64], w_hh: &[f64], b: &[f64]) -> Vec<f64> {
    let (n_in, n_h) = (x.len(), h.len());
    let wx = |row: usize| (0..n_in).map(|k| w_ih[row * n_in + k] * x[k]).sum::<f64>();
    let uh = |row: usize, v: &[f64]| (0..n_h).map(|k| w_hh[row * n_h + k] * v[k]).sum::<f64>();
    let z: Vec<f64> = (0..n_h).map(|i| sigmoid(wx(i) + uh(i, h) + b[i])).collect();
    let r: Vec<f64> = (0..n_h).map(|i| sigmoid(wx(n_h + i) + uh(n_h + i, h) + b[n_h + i])).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    (0..n_h)
        .map(|i| {
            let cand = (wx(2 * n_h + i) + uh(2 * n_h + i, &rh) + b[2 * n_h + i]).tanh();
            (1.0 - z[i]) * h[i] + z[i] * cand
        })
        .collect()
}

/// `exp(v_i) / sum_j exp(v_j)` evaluated literally.
pub fn softmax_oracle(v: &[f64]) -> Vec<f64> {
    let denom: f64 = v.iter().map(|x| x.exp()).sum();
    v.iter().map(|x| x.exp() / denom).collect()
}

/// Sub-pixel rearrangement by scattering: input channel `p * c + ch`, bin `f`
/// lands at output channel `ch`, bin `2f + p`.
pub fn shuffle_oracle(x: &FeatureMap) -> FeatureMap {
    let (c2, t, f) = x.shape();
    let c = c2 / 2;
    let mut out = FeatureMap::zeros(c, t, 2 * f);
    for p in 0..2 {
        for ch in 0..c {
            for tt in 0..t {
                for ff in 0..f {
                    out.set(ch, tt, 2 * ff + p, x.get(p * c + ch, tt, ff));
                }
            }
        }
    }
    out
}

/// Cube roots of unity used to combine the three real mask components.
pub fn ccm_basis() -> [Complex64; 3] {
    let s = 3f64.sqrt() / 2.0;
    [Complex64::new(1.0, 0.0), Complex64::new(-0.5, s), Complex64::new(-0.5, -s)]
}

/// Complex kernel value of tap `k` from a `[3 * taps x t x f]` map.
pub fn ccm_build_oracle(x: &FeatureMap, taps: usize, k: usize, t: usize, f: usize) -> Complex64 {
    let v = ccm_basis();
    (0..3).map(|i| v[i] * x.get(i * taps + k, t, f)).sum()
}

/// Deep filter written directly from the summation over past frames and
/// neighbouring bins.
pub fn naive_apply(x: &ComplexSpectrum, h: &ComplexMaskKernel, m: usize, n: usize) -> ComplexSpectrum {
    let (frames, bins) = (x.frames(), x.bins());
    let mut out = ComplexSpectrum::zeros(frames, bins);
    for t in 0..frames as isize {
        for f in 0..bins as isize {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in -(m as isize)..=0 {
                for j in -(n as isize)..=n as isize {
                    let (tt, ff) = (t + i, f + j);
                    if tt < 0 || ff < 0 || ff >= bins as isize {
                        continue;
                    }
                    let tap = ((i + m as isize) as usize) * (2 * n + 1) + (j + n as isize) as usize;
                    acc += x.get(tt as usize, ff as usize) * h.get(tap, t as usize, f as usize);
                }
            }
            out.set(t as usize, f as usize, acc);
        }
    }
    out
}

pub fn align_cfg(mic: usize, far: usize, h: usize, d_max: usize) -> AlignConfig {
    AlignConfig { mic_channels: mic, far_channels: far, h, d_max, scale_dot: false }
}

/// Channel-mean projections and a centred time-delay tap of weight `gain`.
pub fn oracle_block(channels: usize, d_max: usize, gain: f64) -> AlignBlock {
    let cfg = align_cfg(channels, channels, 1, d_max);
    let mean = vec![1.0 / channels as f64; channels];
    let q = Conv2d::new(cfg.q_spec(), mean.clone(), vec![0.0]).unwrap();
    let k = Conv2d::new(cfg.k_spec(), mean, vec![0.0]).unwrap();
    let mut w = vec![0.0; cfg.tdmap_spec().weight_len()];
    // Current time tap, zero delay offset.
    w[4 * 3 + 1] = gain;
    let td = Conv2d::new(cfg.tdmap_spec(), w, vec![0.0]).unwrap();
    AlignBlock::new(cfg, q, k, td).unwrap()
}

pub fn delayed(x: &FeatureMap, delta: usize) -> FeatureMap {
    let (c, t, f) = x.shape();
    FeatureMap::from_fn(c, t, f, |ch, tt, ff| if tt >= delta { x.get(ch, tt - delta, ff) } else { 0.0 })
}

/// Normalised cross-correlation of channel-mean features over all delays.
pub fn ncc_argmax(mic: &FeatureMap, far: &FeatureMap, t: usize, d_max: usize) -> usize {
    let (c, _, f) = mic.shape();
    let mean_feat = |x: &FeatureMap, tt: usize| -> Vec<f64> {
        (0..f).map(|ff| (0..c).map(|ch| x.get(ch, tt, ff)).sum::<f64>() / c as f64).collect()
    };
    let m = mean_feat(mic, t);
    let mut best = (0, f64::NEG_INFINITY);
    for d in 0..d_max.min(t + 1) {
        let g = mean_feat(far, t - d);
        let num: f64 = m.iter().zip(&g).map(|(a, b)| a * b).sum();
        let den = (m.iter().map(|a| a * a).sum::<f64>() * g.iter().map(|b| b * b).sum::<f64>()).sqrt();
        let ncc = if den > 0.0 { num / den } else { 0.0 };
        if ncc > best.1 {
            best = (d, ncc);
        }
    }
    best.0
}
