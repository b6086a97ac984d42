use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::AlignConfig;
use crate::ccm::CcmConfig;
use crate::dsp::{StftConfig, DEFAULT_COMPRESS_EXPONENT};
use crate::error::{config_err, Result};
use crate::nn::ConvSpec;

/// Version of the configuration document layout.
pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Deepvqe,
    DeepvqeS,
    Custom,
}

impl Variant {
    /// Numeric tag stored in weight files.
    pub fn code(self) -> u32 {
        match self {
            Variant::Custom => 0,
            Variant::Deepvqe => 1,
            Variant::DeepvqeS => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Variant::Custom),
            1 => Some(Variant::Deepvqe),
            2 => Some(Variant::DeepvqeS),
            _ => None,
        }
    }
}

/// Alignment settings; channel counts follow from the encoder filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignSettings {
    pub h: usize,
    pub d_max: usize,
    #[serde(default)]
    pub scale_dot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub format_version: u32,
    pub variant: Variant,
    /// Output channels of each microphone encoder block.
    pub mic_enc_filters: Vec<usize>,
    /// Output channels of each far-end encoder block. Alignment joins the
    /// microphone branch after this many blocks.
    pub far_enc_filters: Vec<usize>,
    /// Channels after each decoder sub-pixel upsampling.
    pub dec_subpixel_filters: Vec<usize>,
    pub mic_enc_residual: Vec<bool>,
    pub far_enc_residual: Vec<bool>,
    pub dec_residual: Vec<bool>,
    pub gru_hidden: usize,
    pub compress_exponent: f64,
    pub align: AlignSettings,
    pub ccm: CcmConfig,
    pub stft: StftConfig,
}

/// Kernel of every 4 x 3 encoder, residual and sub-pixel convolution.
pub const KERNEL_T: usize = 4;
pub const KERNEL_F: usize = 3;

impl ModelConfig {
    pub fn deepvqe() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            variant: Variant::Deepvqe,
            mic_enc_filters: vec![64, 128, 128, 128, 128],
            far_enc_filters: vec![32, 128],
            dec_subpixel_filters: vec![128, 128, 128, 64, 27],
            mic_enc_residual: vec![true; 5],
            far_enc_residual: vec![true; 2],
            dec_residual: vec![true; 5],
            gru_hidden: 512,
            compress_exponent: DEFAULT_COMPRESS_EXPONENT,
            align: AlignSettings { h: 16, d_max: 100, scale_dot: false },
            ccm: CcmConfig::default(),
            stft: StftConfig::default(),
        }
    }

    pub fn deepvqe_s() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            variant: Variant::DeepvqeS,
            mic_enc_filters: vec![16, 40, 56, 24],
            far_enc_filters: vec![8, 24],
            dec_subpixel_filters: vec![40, 32, 32, 27],
            mic_enc_residual: vec![false; 4],
            far_enc_residual: vec![false; 2],
            dec_residual: vec![false, true, true, false],
            gru_hidden: 192,
            compress_exponent: DEFAULT_COMPRESS_EXPONENT,
            align: AlignSettings { h: 8, d_max: 100, scale_dot: false },
            ccm: CcmConfig::default(),
            stft: StftConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| match e.span() {
            Some(span) => {
                let line = text[..span.start].matches('\n').count();
                let source = text.lines().nth(line).unwrap_or_default().trim();
                config_err!("line {}: `{source}`: {}", line + 1, e.message())
            }
            None => config_err!("{}", e.message()),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model config serialises")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| crate::Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text).map_err(|e| match e {
            crate::Error::Config(msg) => config_err!("{}: {msg}", path.display()),
            other => other,
        })
    }

    /// First eight bytes of the SHA-256 of the canonical TOML form.
    pub fn config_hash(&self) -> u64 {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(config_err!(
                "format_version {} is not supported (expected {CONFIG_FORMAT_VERSION})",
                self.format_version
            ));
        }
        self.stft.validate()?;
        let levels = self.mic_enc_filters.len();
        let join = self.far_enc_filters.len();
        if join == 0 || levels <= join {
            return Err(config_err!(
                "mic_enc_filters needs more blocks ({levels}) than far_enc_filters ({join}), which must be non-empty"
            ));
        }
        for (name, list) in [
            ("mic_enc_filters", &self.mic_enc_filters),
            ("far_enc_filters", &self.far_enc_filters),
            ("dec_subpixel_filters", &self.dec_subpixel_filters),
        ] {
            if list.contains(&0) {
                return Err(config_err!("{name} entries must be positive"));
            }
        }
        if self.dec_subpixel_filters.len() != levels {
            return Err(config_err!(
                "dec_subpixel_filters has {} entries, expected one per encoder block ({levels})",
                self.dec_subpixel_filters.len()
            ));
        }
        for (name, got, want) in [
            ("mic_enc_residual", self.mic_enc_residual.len(), levels),
            ("far_enc_residual", self.far_enc_residual.len(), join),
            ("dec_residual", self.dec_residual.len(), levels),
        ] {
            if got != want {
                return Err(config_err!("{name} has {got} entries, expected {want}"));
            }
        }
        let last = *self.dec_subpixel_filters.last().expect("non-empty");
        if last != self.ccm.channels() {
            return Err(config_err!(
                "dec_subpixel_filters must end with {} channels for ccm (m = {}, n = {}), got {last}",
                self.ccm.channels(),
                self.ccm.m,
                self.ccm.n
            ));
        }
        if self.gru_hidden == 0 {
            return Err(config_err!("gru_hidden must be positive"));
        }
        if !(self.compress_exponent > 0.0 && self.compress_exponent <= 1.0) {
            return Err(config_err!("compress_exponent must lie in (0, 1]"));
        }
        if self.align.h == 0 || self.align.d_max == 0 {
            return Err(config_err!("align.h and align.d_max must be positive"));
        }
        if self.freq_ladder().last() == Some(&0) {
            return Err(config_err!("encoder reduces the spectrum to zero bins"));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.mic_enc_filters.len()
    }

    pub fn join_level(&self) -> usize {
        self.far_enc_filters.len()
    }

    /// Spectrum bins at the input and after each encoder block.
    pub fn freq_ladder(&self) -> Vec<usize> {
        let mut ladder = vec![self.stft.bins()];
        for _ in 0..self.levels() {
            let f = *ladder.last().expect("non-empty");
            ladder.push(Self::down_spec(1, 1).out_bins(f));
        }
        ladder
    }

    /// Decoder output bins, mirroring the encoder ladder.
    pub fn decoder_ladder(&self) -> Vec<usize> {
        self.freq_ladder().into_iter().rev().collect()
    }

    /// Width of the flattened bottleneck vector.
    pub fn bottleneck_width(&self) -> usize {
        self.mic_enc_filters.last().expect("non-empty") * self.freq_ladder().last().expect("non-empty")
    }

    pub fn align_config(&self) -> AlignConfig {
        let join = self.join_level();
        AlignConfig {
            mic_channels: self.mic_enc_filters[join - 1],
            far_channels: self.far_enc_filters[join - 1],
            h: self.align.h,
            d_max: self.align.d_max,
            scale_dot: self.align.scale_dot,
        }
    }

    /// Input channels of microphone block `l`.
    pub fn mic_in_channels(&self, l: usize) -> usize {
        match l {
            0 => 2,
            _ if l == self.join_level() => self.mic_enc_filters[l - 1] + self.far_enc_filters[l - 1],
            _ => self.mic_enc_filters[l - 1],
        }
    }

    pub fn far_in_channels(&self, l: usize) -> usize {
        if l == 0 {
            2
        } else {
            self.far_enc_filters[l - 1]
        }
    }

    /// Input channels of decoder block `j`.
    pub fn dec_in_channels(&self, j: usize) -> usize {
        if j == 0 {
            *self.mic_enc_filters.last().expect("non-empty")
        } else {
            self.dec_subpixel_filters[j - 1]
        }
    }

    /// Encoder level whose output feeds decoder block `j` through its skip.
    pub fn skip_level(&self, j: usize) -> usize {
        self.levels() - 1 - j
    }

    /// Downsampling 4 x 3 convolution, stride 2 along frequency.
    pub fn down_spec(cin: usize, cout: usize) -> ConvSpec {
        ConvSpec {
            in_channels: cin,
            out_channels: cout,
            kernel_t: KERNEL_T,
            kernel_f: KERNEL_F,
            stride_f: 2,
            pad_f: (1, 1),
        }
    }

    /// Shape-preserving 4 x 3 convolution.
    pub fn same_spec(cin: usize, cout: usize) -> ConvSpec {
        ConvSpec { stride_f: 1, ..Self::down_spec(cin, cout) }
    }
}
