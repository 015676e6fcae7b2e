//! The ten structure variables plus the memory capacity, with their
//! candidate sets and a canonical `key=value` text form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Memory;

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RnnKind {
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "GRU")]
    Gru,
    #[serde(rename = "BackwardLSTM")]
    BackwardLstm,
    #[serde(rename = "BackwardGRU")]
    BackwardGru,
}

impl RnnKind {
    pub const ALL: [RnnKind; 4] = [RnnKind::Lstm, RnnKind::Gru, RnnKind::BackwardLstm, RnnKind::BackwardGru];

    pub fn name(self) -> &'static str {
        match self {
            RnnKind::Lstm => "LSTM",
            RnnKind::Gru => "GRU",
            RnnKind::BackwardLstm => "BackwardLSTM",
            RnnKind::BackwardGru => "BackwardGRU",
        }
    }

    pub fn is_gru(self) -> bool {
        matches!(self, RnnKind::Gru | RnnKind::BackwardGru)
    }

    pub fn is_backward(self) -> bool {
        matches!(self, RnnKind::BackwardLstm | RnnKind::BackwardGru)
    }

    /// Gate blocks per hidden unit.
    pub fn gates(self) -> usize {
        if self.is_gru() {
            3
        } else {
            4
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "ReLU")]
    Relu,
    Softmax,
    Linear,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 4] = [Activation::Relu, Activation::Softmax, Activation::Linear, Activation::Tanh];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "ReLU",
            Activation::Softmax => "Softmax",
            Activation::Linear => "Linear",
            Activation::Tanh => "Tanh",
        }
    }
}

macro_rules! named_parse {
    ($ty:ty, $what:literal) => {
        impl FromStr for $ty {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let s = s.trim();
                <$ty>::ALL
                    .into_iter()
                    .find(|v| v.name().eq_ignore_ascii_case(s))
                    .ok_or_else(|| ModelError::InvalidConfig(vec![format!("unknown {} {s:?}", $what)]))
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_parse!(RnnKind, "rnn_kind");
named_parse!(Activation, "activation");

pub const M_CANDIDATES: [usize; 4] = [5, 10, 15, 20];
pub const DROPOUT_CANDIDATES: [f64; 4] = [0.0, 0.05, 0.1, 0.2];
pub const HIDDEN_CANDIDATES: [usize; 3] = [512, 1024, 2048];
pub const NUM_FC_CANDIDATES: [usize; 5] = [0, 1, 2, 3, 5];
pub const FC_REG_CANDIDATES: [f64; 4] = [0.0, 0.001, 0.002, 0.005];

/// One assignment of the structure variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructureConfig {
    pub m: Memory,
    pub rnn_kind: RnnKind,
    pub rnn_dropout: f64,
    pub rnn_hidden: usize,
    pub rnn_activation: Activation,
    pub batch_norm: bool,
    pub fc_dropout: f64,
    pub num_fc: usize,
    pub fc_reg: f64,
    pub fc_activation: Activation,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig {
            m: Memory::Steps(5),
            rnn_kind: RnnKind::Lstm,
            rnn_dropout: 0.05,
            rnn_hidden: 512,
            rnn_activation: Activation::Relu,
            batch_norm: true,
            fc_dropout: 0.05,
            num_fc: 2,
            fc_reg: 0.001,
            fc_activation: Activation::Softmax,
        }
    }
}

/// Names of the structure variables in table order (m first).
pub const FIELD_NAMES: [&str; 10] = [
    "m",
    "rnn_kind",
    "rnn_dropout",
    "rnn_hidden",
    "rnn_activation",
    "batch_norm",
    "fc_dropout",
    "num_fc",
    "fc_reg",
    "fc_activation",
];

impl StructureConfig {
    /// Every field must come from its candidate set; `m` may also be unbounded.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut bad = Vec::new();
        if let Memory::Steps(m) = self.m {
            if !M_CANDIDATES.contains(&m) {
                bad.push(format!("m={m} not in {M_CANDIDATES:?} or inf"));
            }
        }
        if !DROPOUT_CANDIDATES.contains(&self.rnn_dropout) {
            bad.push(format!("rnn_dropout={} not in {DROPOUT_CANDIDATES:?}", self.rnn_dropout));
        }
        if !HIDDEN_CANDIDATES.contains(&self.rnn_hidden) {
            bad.push(format!("rnn_hidden={} not in {HIDDEN_CANDIDATES:?}", self.rnn_hidden));
        }
        if !DROPOUT_CANDIDATES.contains(&self.fc_dropout) {
            bad.push(format!("fc_dropout={} not in {DROPOUT_CANDIDATES:?}", self.fc_dropout));
        }
        if !NUM_FC_CANDIDATES.contains(&self.num_fc) {
            bad.push(format!("num_fc={} not in {NUM_FC_CANDIDATES:?}", self.num_fc));
        }
        if !FC_REG_CANDIDATES.contains(&self.fc_reg) {
            bad.push(format!("fc_reg={} not in {FC_REG_CANDIDATES:?}", self.fc_reg));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig(bad))
        }
    }

    /// Value of one field in canonical text form.
    pub fn field(&self, name: &str) -> Option<String> {
        Some(match name {
            "m" => self.m.to_string(),
            "rnn_kind" => self.rnn_kind.to_string(),
            "rnn_dropout" => self.rnn_dropout.to_string(),
            "rnn_hidden" => self.rnn_hidden.to_string(),
            "rnn_activation" => self.rnn_activation.to_string(),
            "batch_norm" => if self.batch_norm { "yes" } else { "no" }.to_string(),
            "fc_dropout" => self.fc_dropout.to_string(),
            "num_fc" => self.num_fc.to_string(),
            "fc_reg" => self.fc_reg.to_string(),
            "fc_activation" => self.fc_activation.to_string(),
            _ => return None,
        })
    }

    /// Sets one field from text; does not validate candidate membership.
    pub fn set_field(&mut self, name: &str, value: &str) -> Result<(), ModelError> {
        let value = value.trim();
        let bad = || ModelError::InvalidConfig(vec![format!("{name}: cannot parse {value:?}")]);
        let float = || value.parse::<f64>().map_err(|_| bad());
        let int = || value.parse::<usize>().map_err(|_| bad());
        match name {
            "m" => self.m = value.parse().map_err(|_| bad())?,
            "rnn_kind" => self.rnn_kind = value.parse()?,
            "rnn_dropout" => self.rnn_dropout = float()?,
            "rnn_hidden" => self.rnn_hidden = int()?,
            "rnn_activation" => self.rnn_activation = value.parse()?,
            "batch_norm" => {
                self.batch_norm = match value.to_ascii_lowercase().as_str() {
                    "yes" | "true" | "1" => true,
                    "no" | "false" | "0" => false,
                    _ => return Err(bad()),
                }
            }
            "fc_dropout" => self.fc_dropout = float()?,
            "num_fc" => self.num_fc = int()?,
            "fc_reg" => self.fc_reg = float()?,
            "fc_activation" => self.fc_activation = value.parse()?,
            _ => return Err(ModelError::InvalidConfig(vec![format!("unknown field {name:?}")])),
        }
        Ok(())
    }

    /// Candidate values of one field, as text, in their listed order.
    pub fn candidates(name: &str) -> Option<Vec<String>> {
        fn text<T: ToString>(v: impl IntoIterator<Item = T>) -> Vec<String> {
            v.into_iter().map(|x| x.to_string()).collect()
        }
        Some(match name {
            "m" => text(M_CANDIDATES),
            "rnn_kind" => text(RnnKind::ALL),
            "rnn_dropout" | "fc_dropout" => text(DROPOUT_CANDIDATES),
            "rnn_hidden" => text(HIDDEN_CANDIDATES),
            "rnn_activation" | "fc_activation" => text(Activation::ALL),
            "batch_norm" => text(["yes", "no"]),
            "num_fc" => text(NUM_FC_CANDIDATES),
            "fc_reg" => text(FC_REG_CANDIDATES),
            _ => return None,
        })
    }

    /// Fields that differ from the default configuration.
    pub fn non_default_fields(&self) -> Vec<&'static str> {
        let d = StructureConfig::default();
        FIELD_NAMES.into_iter().filter(|f| self.field(f) != d.field(f)).collect()
    }
}

impl fmt::Display for StructureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for name in FIELD_NAMES {
            writeln!(f, "{name}={}", self.field(name).unwrap())?;
        }
        Ok(())
    }
}

impl FromStr for StructureConfig {
    type Err = ModelError;

    /// `key=value` lines; missing keys keep their defaults, `#` starts a comment.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut c = StructureConfig::default();
        for line in s.lines() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ModelError::InvalidConfig(vec![format!("expected key=value, got {line:?}")]))?;
            c.set_field(k.trim(), v)?;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Knobs that are not structure variables: input encoding and a width
/// divisor for reduced-scale runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    pub embedding_dim: usize,
    /// Frozen identity embedding of width |V| instead of a trained one.
    pub one_hot: bool,
    /// rnn_hidden is divided by this (rounded up) to get the actual width.
    pub hidden_divisor: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions { embedding_dim: 128, one_hot: false, hidden_divisor: 1 }
    }
}

impl ModelOptions {
    pub fn hidden(&self, config: &StructureConfig) -> usize {
        config.rnn_hidden.div_ceil(self.hidden_divisor.max(1))
    }

    pub fn input_dim(&self, vocab_size: usize) -> usize {
        if self.one_hot {
            vocab_size
        } else {
            self.embedding_dim
        }
    }
}
