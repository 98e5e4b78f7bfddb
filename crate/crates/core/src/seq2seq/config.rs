use serde::{Deserialize, Serialize};

use super::ModelError;

/// The five encoder-decoder variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    BilstmAttn,
    BilstmNoattn,
    UnilstmAttn,
    UnilstmNoattn,
    Transformer,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Self::Transformer,
        Self::BilstmAttn,
        Self::BilstmNoattn,
        Self::UnilstmAttn,
        Self::UnilstmNoattn,
    ];

    /// Identifier used in configs, file names and CSV rows.
    pub fn id(self) -> &'static str {
        match self {
            Self::BilstmAttn => "bilstm-attn",
            Self::BilstmNoattn => "bilstm-noattn",
            Self::UnilstmAttn => "unilstm-attn",
            Self::UnilstmNoattn => "unilstm-noattn",
            Self::Transformer => "transformer",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Self::BilstmAttn => "BiLSTMAttn",
            Self::BilstmNoattn => "BiLSTMNoAttn",
            Self::UnilstmAttn => "UniLSTMAttn",
            Self::UnilstmNoattn => "UniLSTMNoAttn",
            Self::Transformer => "Transformer",
        }
    }

    pub fn is_lstm(self) -> bool {
        self != Self::Transformer
    }

    pub fn bidirectional(self) -> bool {
        matches!(self, Self::BilstmAttn | Self::BilstmNoattn)
    }

    pub fn has_attention(self) -> bool {
        !matches!(self, Self::BilstmNoattn | Self::UnilstmNoattn)
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Architecture {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.id() == s || a.display_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::Config(format!("unknown architecture `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossReduction {
    /// Sum of per-step negative log-likelihoods.
    #[default]
    Sum,
    /// Sum divided by the number of steps (target length + 1).
    Mean,
}

/// Hyperparameters of one model. Only the fields relevant to `arch` are read:
/// LSTMs use `embedding_dim`, `hidden_dim`, `lstm_layers` and
/// `attention_dim`; the Transformer uses `model_dim`, `ffn_dim`,
/// `num_layers` and `num_heads`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub lstm_layers: usize,
    pub attention_dim: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub dropout: f64,
    /// Half-width of the uniform LSTM initializer.
    pub init_scale: f64,
    pub max_source_len: usize,
    /// Decoding stops after `source_len + extra_decode_len` steps.
    pub extra_decode_len: usize,
    pub loss_reduction: LossReduction,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(arch: Architecture, seed: u64) -> Self {
        Self {
            arch,
            embedding_dim: 300,
            hidden_dim: 100,
            lstm_layers: 2,
            attention_dim: 100,
            model_dim: 256,
            ffn_dim: 1024,
            num_layers: 4,
            num_heads: 4,
            dropout: 0.3,
            init_scale: 0.08,
            max_source_len: 64,
            extra_decode_len: 10,
            loss_reduction: LossReduction::Sum,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.max_source_len == 0 {
            return bad("max_source_len must be positive".into());
        }
        if self.arch.is_lstm() {
            let dims = [self.embedding_dim, self.hidden_dim, self.lstm_layers];
            if dims.contains(&0) || (self.arch.has_attention() && self.attention_dim == 0) {
                return bad(format!("LSTM dimensions must be positive: {self:?}"));
            }
            if !(self.init_scale > 0.0) {
                return bad(format!("init_scale {} must be positive", self.init_scale));
            }
        } else {
            let dims = [self.model_dim, self.ffn_dim, self.num_layers, self.num_heads];
            if dims.contains(&0) {
                return bad(format!("Transformer dimensions must be positive: {self:?}"));
            }
            if self.model_dim % self.num_heads != 0 {
                return bad(format!(
                    "num_heads {} does not divide model_dim {}",
                    self.num_heads, self.model_dim
                ));
            }
            if self.model_dim % 2 != 0 {
                return bad(format!("model_dim {} must be even", self.model_dim));
            }
        }
        Ok(())
    }

    pub fn max_decode_len(&self, source_len: usize) -> usize {
        source_len + self.extra_decode_len
    }

    /// Width of one encoder output vector.
    pub fn encoder_dim(&self) -> usize {
        match self.arch {
            Architecture::Transformer => self.model_dim,
            a if a.bidirectional() => 2 * self.hidden_dim,
            _ => self.hidden_dim,
        }
    }
}

/// Partial hyperparameter overrides, as found in experiment configs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub embedding_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub lstm_layers: Option<usize>,
    pub attention_dim: Option<usize>,
    pub model_dim: Option<usize>,
    pub ffn_dim: Option<usize>,
    pub num_layers: Option<usize>,
    pub num_heads: Option<usize>,
    pub dropout: Option<f64>,
    pub init_scale: Option<f64>,
    pub max_source_len: Option<usize>,
    pub extra_decode_len: Option<usize>,
    pub loss_reduction: Option<LossReduction>,
}

impl ModelOverrides {
    pub fn apply(&self, c: &mut ModelConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { c.$f = v; } )*};
        }
        set!(
            embedding_dim,
            hidden_dim,
            lstm_layers,
            attention_dim,
            model_dim,
            ffn_dim,
            num_layers,
            num_heads,
            dropout,
            init_scale,
            max_source_len,
            extra_decode_len,
            loss_reduction
        );
    }
}
