use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::FeatureMap;
use crate::error::{config_err, shape_err, Result};
use crate::kernels::{gemm, round_up, PackedMatrix, NR};

/// Geometry of a 2-D convolution over `(time, frequency)`.
///
/// Time stride is always 1 and time padding is always causal
/// (`kernel_t - 1` frames on the left).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_t: usize,
    pub kernel_f: usize,
    pub stride_f: usize,
    /// Zero bins added below and above the frequency axis.
    pub pad_f: (usize, usize),
}

impl ConvSpec {
    /// A `1 x 1` projection.
    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self { in_channels, out_channels, kernel_t: 1, kernel_f: 1, stride_f: 1, pad_f: (0, 0) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(config_err!("convolution needs at least one input and output channel"));
        }
        if self.kernel_t == 0 || self.kernel_f == 0 || self.stride_f == 0 {
            return Err(config_err!("convolution kernel and stride must be positive"));
        }
        Ok(())
    }

    /// Frequency bins produced from `bins` input bins.
    pub fn out_bins(&self, bins: usize) -> usize {
        let padded = bins + self.pad_f.0 + self.pad_f.1;
        if padded < self.kernel_f {
            0
        } else {
            (padded - self.kernel_f) / self.stride_f + 1
        }
    }

    /// Number of weights, laid out `[out][in][kt][kf]`.
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_t * self.kernel_f
    }

    fn taps(&self) -> usize {
        self.in_channels * self.kernel_t * self.kernel_f
    }
}

/// Convolution with its weights packed for the GEMM kernel.
#[derive(Debug, Clone)]
pub struct Conv2d {
    spec: ConvSpec,
    weights: Vec<f64>,
    bias: Vec<f64>,
    packed: PackedMatrix,
}

/// Frame geometry of a convolution over a fixed number of input bins.
///
/// Each input row is stored zero-padded and split into `stride_f` phases, so
/// the values one frequency tap contributes to all output bins form a
/// contiguous run. Phase `p` of a row occupies `[p * seg_len, (p + 1) *
/// seg_len)` and holds `x[u * stride + p]` at index `lead + u`; everything
/// else stays zero.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    in_bins: usize,
    out_bins: usize,
    n_pad: usize,
    stride: usize,
    pad_lo: usize,
    lead: usize,
    seg_len: usize,
    row_len: usize,
}

impl Geometry {
    fn new(spec: &ConvSpec, in_bins: usize) -> Result<Self> {
        let out_bins = spec.out_bins(in_bins);
        if out_bins == 0 {
            return Err(shape_err!("convolution over {in_bins} bins produces no output"));
        }
        let n_pad = round_up(out_bins, NR);
        let (stride, pad_lo) = (spec.stride_f, spec.pad_f.0);
        let lead = pad_lo.div_ceil(stride);
        // Largest per-tap shift; every tap reads `n_pad` values past it.
        let max_shift = (lead * stride + spec.kernel_f - 1 - pad_lo) / stride;
        let seg_len = (max_shift + n_pad).max(lead + in_bins.div_ceil(stride));
        Ok(Self { in_bins, out_bins, n_pad, stride, pad_lo, lead, seg_len, row_len: stride * seg_len })
    }

    /// Offset inside a stored row of the run read by frequency tap `kf`.
    #[inline]
    fn tap_offset(&self, kf: usize) -> usize {
        // Output j reads x[j * stride + kf - pad_lo].
        let m = (self.lead * self.stride + kf) - self.pad_lo;
        let (shift, phase) = (m / self.stride, m % self.stride);
        phase * self.seg_len + shift
    }

    /// Writes `x` into its padded, phase-split slot. Padding is never
    /// written, so it keeps the zeros the slot was created with.
    #[inline]
    fn scatter(&self, x: &[f64], dst: &mut [f64]) {
        if self.stride == 1 {
            dst[self.lead..self.lead + x.len()].copy_from_slice(x);
            return;
        }
        for phase in 0..self.stride {
            let seg = &mut dst[phase * self.seg_len + self.lead..(phase + 1) * self.seg_len];
            for (d, v) in seg.iter_mut().zip(x.iter().skip(phase).step_by(self.stride)) {
                *d = *v;
            }
        }
    }
}

/// Offset and product buffers shared by every convolution on a thread. They
/// grow to the largest layer once and are reused afterwards.
#[derive(Default)]
struct Workspace {
    rows: Vec<usize>,
    product: Vec<f64>,
}

thread_local! {
    static WORKSPACE: RefCell<Workspace> = RefCell::new(Workspace::default());
}

impl Conv2d {
    pub fn new(spec: ConvSpec, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if weights.len() != spec.weight_len() {
            return Err(shape_err!(
                "convolution weights have {} values, expected {}",
                weights.len(),
                spec.weight_len()
            ));
        }
        if bias.len() != spec.out_channels {
            return Err(shape_err!("convolution bias has {} values, expected {}", bias.len(), spec.out_channels));
        }
        let packed = PackedMatrix::pack(spec.out_channels, spec.taps(), &weights);
        Ok(Self { spec, weights, bias, packed })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// One output frame. `rows` holds stored input rows; `row(i, kt)` is the
    /// offset of input channel `i` at kernel time tap `kt` (`kt = kernel_t -
    /// 1` is the current frame). `write(o, values)` receives each output row.
    fn run_frame(
        &self,
        geom: &Geometry,
        rows: &[f64],
        row: impl Fn(usize, usize) -> usize,
        mut write: impl FnMut(usize, &[f64]),
    ) {
        let s = &self.spec;
        let n_pad = geom.n_pad;
        WORKSPACE.with_borrow_mut(|ws| {
            ws.rows.clear();
            for i in 0..s.in_channels {
                for kt in 0..s.kernel_t {
                    let base = row(i, kt);
                    ws.rows.extend((0..s.kernel_f).map(|kf| base + geom.tap_offset(kf)));
                }
            }
            let len = self.packed.rows_padded() * n_pad;
            if ws.product.len() < len {
                ws.product.resize(len, 0.0);
            }
            gemm(&self.packed, Some(&self.bias), rows, &ws.rows, n_pad, &mut ws.product);
            for o in 0..s.out_channels {
                write(o, &ws.product[o * n_pad..o * n_pad + geom.out_bins]);
            }
        });
    }

    /// Causal convolution over a whole sequence.
    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        let s = &self.spec;
        if x.channels() != s.in_channels {
            return Err(shape_err!("convolution expects {} input channels, got {}", s.in_channels, x.channels()));
        }
        let geom = Geometry::new(s, x.bins())?;
        let frames = x.frames();
        let lag = s.kernel_t - 1;
        let row_len = geom.row_len;
        // `lag` leading frames of zeros provide the causal padding.
        let mut stored = vec![0.0; (lag + frames) * s.in_channels * row_len];
        for t in 0..frames {
            for i in 0..s.in_channels {
                let start = ((lag + t) * s.in_channels + i) * row_len;
                geom.scatter(x.row(i, t), &mut stored[start..start + row_len]);
            }
        }
        let mut out = FeatureMap::zeros(s.out_channels, frames, geom.out_bins);
        for t in 0..frames {
            self.run_frame(
                &geom,
                &stored,
                |i, kt| ((t + kt) * s.in_channels + i) * row_len,
                |o, vals| out.row_mut(o, t).copy_from_slice(vals),
            );
        }
        Ok(out)
    }

    /// Fresh streaming state for inputs with `bins` frequency bins.
    pub fn stream_state(&self, bins: usize) -> Result<ConvStreamState> {
        let geom = Geometry::new(&self.spec, bins)?;
        Ok(ConvStreamState {
            history: vec![0.0; self.spec.kernel_t * self.spec.in_channels * geom.row_len],
            newest: 0,
            geom,
        })
    }

    /// Frame-by-frame causal convolution. `frame` is `[in][bin]`, `out` is
    /// `[out][out_bin]`.
    pub fn step(&self, state: &mut ConvStreamState, frame: &[f64], out: &mut [f64]) -> Result<()> {
        let s = &self.spec;
        let geom = state.geom;
        let (bins, out_bins) = (geom.in_bins, geom.out_bins);
        if frame.len() != s.in_channels * bins {
            return Err(shape_err!(
                "streaming convolution frame has {} values, expected {}",
                frame.len(),
                s.in_channels * bins
            ));
        }
        if out.len() != s.out_channels * out_bins {
            return Err(shape_err!(
                "streaming convolution output has {} values, expected {}",
                out.len(),
                s.out_channels * out_bins
            ));
        }
        // Slot `newest` receives the current frame; time tap `kt` lives
        // `kernel_t - 1 - kt` slots before it.
        let newest = state.newest;
        let slot_len = s.in_channels * geom.row_len;
        for (i, x) in frame.chunks_exact(bins).enumerate() {
            let start = newest * slot_len + i * geom.row_len;
            geom.scatter(x, &mut state.history[start..start + geom.row_len]);
        }
        state.newest = (newest + 1) % s.kernel_t;
        self.run_frame(
            &geom,
            &state.history,
            |i, kt| (newest + 1 + kt) % s.kernel_t * slot_len + i * geom.row_len,
            |o, vals| out[o * out_bins..(o + 1) * out_bins].copy_from_slice(vals),
        );
        Ok(())
    }
}

/// Time history for one streaming convolution.
#[derive(Debug, Clone)]
pub struct ConvStreamState {
    /// `kernel_t` stored input frames used as a ring.
    history: Vec<f64>,
    /// Slot the next frame is written to.
    newest: usize,
    geom: Geometry,
}

impl ConvStreamState {
    pub fn reset(&mut self) {
        self.history.fill(0.0);
        self.newest = 0;
    }

    pub fn out_bins(&self) -> usize {
        self.geom.out_bins
    }
}

pub fn causal_conv2d(x: &FeatureMap, conv: &Conv2d) -> Result<FeatureMap> {
    conv.forward(x)
}

/// Streams one `[in x 1 x bins]` frame through `conv`.
pub fn conv2d_stream_step(frame: &FeatureMap, state: &mut ConvStreamState, conv: &Conv2d) -> Result<FeatureMap> {
    if frame.frames() != 1 {
        return Err(shape_err!("streaming step takes one frame, got {}", frame.frames()));
    }
    let mut out = FeatureMap::zeros(conv.spec.out_channels, 1, state.out_bins());
    conv.step(state, frame.data(), out.data_mut())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_bins_ladder() {
        let spec = ConvSpec { in_channels: 1, out_channels: 1, kernel_t: 4, kernel_f: 3, stride_f: 2, pad_f: (1, 1) };
        let mut f = 241;
        let mut ladder = vec![f];
        for _ in 0..5 {
            f = spec.out_bins(f);
            ladder.push(f);
        }
        assert_eq!(ladder, [241, 121, 61, 31, 16, 8]);
    }

    #[test]
    fn stored_rows_reproduce_padded_taps() {
        for (kernel_f, stride, pad) in [(3, 1, (1, 1)), (3, 2, (1, 1)), (5, 2, (3, 0)), (1, 1, (0, 0)), (4, 3, (2, 2))]
        {
            let spec =
                ConvSpec { in_channels: 1, out_channels: 1, kernel_t: 1, kernel_f, stride_f: stride, pad_f: pad };
            for bins in [1, 7, 16, 33] {
                let Ok(geom) = Geometry::new(&spec, bins) else { continue };
                let x: Vec<f64> = (0..bins).map(|v| v as f64 + 1.0).collect();
                let mut row = vec![0.0; geom.row_len];
                geom.scatter(&x, &mut row);
                for kf in 0..kernel_f {
                    let off = geom.tap_offset(kf);
                    assert!(off + geom.n_pad <= row.len());
                    for j in 0..geom.out_bins {
                        let src = (j * stride + kf) as isize - pad.0 as isize;
                        let want = if (0..bins as isize).contains(&src) { x[src as usize] } else { 0.0 };
                        assert_eq!(row[off + j], want, "k{kernel_f} s{stride} p{pad:?} bins {bins} kf {kf} j {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_weights() {
        let spec = ConvSpec::pointwise(2, 3);
        assert!(Conv2d::new(spec, vec![0.0; 5], vec![0.0; 3]).is_err());
        assert!(Conv2d::new(spec, vec![0.0; 6], vec![0.0; 2]).is_err());
        assert!(Conv2d::new(spec, vec![0.0; 6], vec![0.0; 3]).is_ok());
    }
}
