//! Bidirectional recurrent classifiers over token sequences.
//!
//! A network is an embedding layer, a stack of recurrent, dense and dropout
//! layers, and a softmax output. All arithmetic is `f64`; training is
//! deterministic per seed.

pub mod cell;
pub mod io;

pub mod network;
pub mod tensor;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

pub use cell::CellKind;
pub use network::{ForwardCache, LayerSpec, Network};
pub use tensor::{adam_step, AdamConfig, AdamState, Gradients, Tensor};
pub use train::{predict, train, EpochStats, SeqData, TrainTrace};

#[derive(Debug, Error)]
pub enum DlError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("cache was produced before the last parameter update")]
    StaleCache,
    #[error("training data is empty")]
    EmptyDataset,
    #[error("label {0} is not an output class of this network")]
    UnknownLabel(Label),
    #[error("invalid weight file: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, DlError>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(DlError::Shape(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    BiRnf,
    BiLstm,
    BiGru,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::BiRnf, Arch::BiLstm, Arch::BiGru];

    pub fn name(self) -> &'static str {
        match self {
            Arch::BiRnf => "Bi-RNF",
            Arch::BiLstm => "Bi-LSTM",
            Arch::BiGru => "Bi-GRU",
        }
    }

    pub fn default_units(self) -> (Vec<usize>, Vec<usize>) {
        match self {
            Arch::BiRnf => (vec![32, 64, 128], vec![64, 32]),
            Arch::BiLstm => (vec![32, 64, 32], vec![128, 64]),
            Arch::BiGru => (vec![128, 64, 32], vec![32]),
        }
    }

    fn dense_count(self) -> usize {
        match self {
            Arch::BiGru => 1,
            _ => 2,
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "birnf" => Ok(Arch::BiRnf),
            "bilstm" => Ok(Arch::BiLstm),
            "bigru" => Ok(Arch::BiGru),
            _ => Err(format!("unknown architecture {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub arch: Arch,
    pub seq_len: usize,
    pub embed_dim: usize,
    /// Recurrent units in stack order.
    pub layer_units: Vec<usize>,
    pub dense_units: Vec<usize>,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::for_arch(Arch::BiLstm)
    }
}

impl NetworkConfig {
    pub fn for_arch(arch: Arch) -> NetworkConfig {
        let (layer_units, dense_units) = arch.default_units();
        NetworkConfig {
            arch,
            seq_len: 100,
            embed_dim: crate::embedding::DEFAULT_DIM,
            layer_units,
            dense_units,
            dropout_rate: 0.4,
            learning_rate: 0.005,
            epochs: 10,
            batch_size: 32,
            seed: 1,
        }
    }

    /// Hidden layers between the embedding and the softmax output.
    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return shape_err(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        let (u, d) = (&self.layer_units, &self.dense_units);
        if u.len() != 3 || d.len() != self.arch.dense_count() {
            return shape_err(format!(
                "{} needs 3 recurrent and {} dense sizes, got {} and {}",
                self.arch.name(),
                self.arch.dense_count(),
                u.len(),
                d.len()
            ));
        }
        let rec = |cell, units, return_sequences| LayerSpec::Recurrent {
            cell,
            units,
            return_sequences,
        };
        let dense = |units| LayerSpec::Dense { units, relu: true };
        let drop = LayerSpec::Dropout {
            rate: self.dropout_rate,
        };
        Ok(match self.arch {
            Arch::BiRnf => vec![
                rec(CellKind::Rnn, u[0], true),
                dense(d[0]),
                drop.clone(),
                rec(CellKind::Gru, u[1], true),
                dense(d[1]),
                drop.clone(),
                rec(CellKind::Lstm, u[2], false),
                drop,
            ],
            Arch::BiLstm => vec![
                rec(CellKind::Lstm, u[0], true),
                dense(d[0]),
                drop.clone(),
                rec(CellKind::Lstm, u[1], true),
                dense(d[1]),
                drop.clone(),
                rec(CellKind::Lstm, u[2], false),
                drop,
            ],
            Arch::BiGru => vec![
                rec(CellKind::Gru, u[0], true),
                dense(d[0]),
                drop,
                rec(CellKind::Gru, u[1], true),
                rec(CellKind::Gru, u[2], false),
            ],
        })
    }
}

#[cfg(test)]
mod tests;
