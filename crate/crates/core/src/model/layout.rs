use super::config::ModelConfig;
use crate::nn::ConvSpec;

/// How a tensor is initialised and whether it counts as a learnable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    /// Multiplicative weight with the given fan-in.
    Weight {
        fan_in: usize,
    },
    Bias,
    BnGamma,
    BnBeta,
    BnMean,
    BnVar,
}

impl TensorRole {
    pub fn learnable(self) -> bool {
        !matches!(self, TensorRole::BnMean | TensorRole::BnVar)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: TensorRole,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct Builder(Vec<TensorSpec>);

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, role: TensorRole) {
        self.0.push(TensorSpec { name, shape, role });
    }

    fn conv(&mut self, prefix: &str, spec: ConvSpec) {
        let fan_in = spec.in_channels * spec.kernel_t * spec.kernel_f;
        self.push(
            format!("{prefix}.weight"),
            vec![spec.out_channels, spec.in_channels, spec.kernel_t, spec.kernel_f],
            TensorRole::Weight { fan_in },
        );
        self.push(format!("{prefix}.bias"), vec![spec.out_channels], TensorRole::Bias);
    }

    fn bn(&mut self, prefix: &str, c: usize) {
        for (suffix, role) in [
            ("gamma", TensorRole::BnGamma),
            ("beta", TensorRole::BnBeta),
            ("mean", TensorRole::BnMean),
            ("var", TensorRole::BnVar),
        ] {
            self.push(format!("{prefix}.{suffix}"), vec![c], role);
        }
    }

    fn residual(&mut self, prefix: &str, c: usize) {
        self.conv(&format!("{prefix}.res.conv"), ModelConfig::same_spec(c, c));
        self.bn(&format!("{prefix}.res.bn"), c);
    }

    fn encoder(&mut self, prefix: &str, cin: usize, cout: usize, residual: bool) {
        self.conv(&format!("{prefix}.conv"), ModelConfig::down_spec(cin, cout));
        self.bn(&format!("{prefix}.bn"), cout);
        if residual {
            self.residual(prefix, cout);
        }
    }
}

/// Every tensor the configured graph needs, in a fixed order.
pub fn tensor_layout(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let mut b = Builder(Vec::new());
    for l in 0..cfg.levels() {
        b.encoder(&format!("mic_enc.{l}"), cfg.mic_in_channels(l), cfg.mic_enc_filters[l], cfg.mic_enc_residual[l]);
    }
    for l in 0..cfg.join_level() {
        b.encoder(&format!("far_enc.{l}"), cfg.far_in_channels(l), cfg.far_enc_filters[l], cfg.far_enc_residual[l]);
    }
    let a = cfg.align_config();
    b.conv("align.q", a.q_spec());
    b.conv("align.k", a.k_spec());
    b.conv("align.tdmap", a.tdmap_spec());

    let (width, hidden) = (cfg.bottleneck_width(), cfg.gru_hidden);
    b.push("bottleneck.gru.w_ih".into(), vec![3 * hidden, width], TensorRole::Weight { fan_in: width });
    b.push("bottleneck.gru.w_hh".into(), vec![3 * hidden, hidden], TensorRole::Weight { fan_in: hidden });
    b.push("bottleneck.gru.bias".into(), vec![3 * hidden], TensorRole::Bias);
    b.push("bottleneck.linear.weight".into(), vec![width, hidden], TensorRole::Weight { fan_in: hidden });
    b.push("bottleneck.linear.bias".into(), vec![width], TensorRole::Bias);

    let levels = cfg.levels();
    for j in 0..levels {
        let prefix = format!("dec.{j}");
        let cin = cfg.dec_in_channels(j);
        let skip_from = cfg.mic_enc_filters[cfg.skip_level(j)];
        b.conv(&format!("{prefix}.skip"), ConvSpec::pointwise(skip_from, cin));
        if cfg.dec_residual[j] {
            b.residual(&prefix, cin);
        }
        let cout = cfg.dec_subpixel_filters[j];
        b.conv(&format!("{prefix}.subpixel"), ModelConfig::same_spec(cin, 2 * cout));
        if j + 1 < levels {
            b.bn(&format!("{prefix}.bn"), cout);
        }
    }
    b.0
}

/// Learnable parameters: convolution, GRU and linear weights and biases plus
/// batch-norm scale and shift. Running statistics are excluded.
pub fn count_parameters(cfg: &ModelConfig) -> usize {
    tensor_layout(cfg).iter().filter(|t| t.role.learnable()).map(TensorSpec::len).sum()
}
