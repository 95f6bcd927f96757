use std::fmt;

use serde::{Deserialize, Serialize};

/// One stage of a sequential network.
///
/// In JSON a layer is written as e.g. `{"kind": "linear", "in": 75, "out": 64}`
/// or `{"kind": "dropout", "p": 0.5}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear {
        #[serde(rename = "in")]
        input: usize,
        #[serde(rename = "out")]
        output: usize,
    },
    Relu,
    Sigmoid,
    Dropout {
        p: f64,
    },
    /// Lookup table for one categorical input column. Embeddings may only
    /// appear as a leading run; each consumes one index column of the input.
    Embedding {
        vocab: usize,
        dim: usize,
    },
}

impl LayerSpec {
    pub fn linear(input: usize, output: usize) -> Self {
        LayerSpec::Linear { input, output }
    }

    pub fn dropout(p: f64) -> Self {
        LayerSpec::Dropout { p }
    }

    pub fn embedding(vocab: usize, dim: usize) -> Self {
        LayerSpec::Embedding { vocab, dim }
    }

    /// Number of trainable scalars this layer owns.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Linear { input, output } => input * output + output,
            LayerSpec::Embedding { vocab, dim } => vocab * dim,
            _ => 0,
        }
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(self, LayerSpec::Linear { .. } | LayerSpec::Embedding { .. })
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Linear { input, output } => write!(f, "Linear({input}, {output})"),
            LayerSpec::Relu => f.write_str("ReLU"),
            LayerSpec::Sigmoid => f.write_str("Sigmoid"),
            LayerSpec::Dropout { p } => write!(f, "Dropout({p})"),
            LayerSpec::Embedding { vocab, dim } => write!(f, "Embedding({vocab}, {dim})"),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
