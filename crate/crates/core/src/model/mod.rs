//! The imputation network: patch tokens through `N` blocks of time-axis
//! attention, channel-axis attention and a dynamic feed-forward layer, each
//! behind a learned sigmoid gate, then a tower head that maps the future
//! tokens back to samples.

mod network;
mod params;
mod persist;
mod standardize;
mod train;

pub use network::{
    dylinear, forward, forward_graph, network_graph, reconstruction_loss, ForwardNodes,
};
pub use params::{Leaves, ModelParams};
pub use persist::{load_model, save_model, ModelFiles};
pub use standardize::Standardizer;
pub use train::{loss_and_grad, train, window_inputs, TrainConfig, TrainOutcome, TrainedModel};

use crate::error::{Error, Result};
use crate::series::WindowSpec;
use crate::tokenizer::TokenizerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    /// One learned scalar per branch.
    Scalar,
    /// One learned value per embedding feature per branch.
    Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub blocks: usize,
    pub heads: usize,
    pub d_model: usize,
    pub patch_size: usize,
    pub window_len: usize,
    pub future_len: usize,
    pub prompt_count: usize,
    /// Rows in the prompt bank.
    pub anomaly_types: usize,
    pub anomaly_type_id: usize,
    pub ffn_hidden: usize,
    /// Stored length of every DyLinear weight vector.
    pub dylinear_len: usize,
    pub dropout: f64,
    pub seed: u64,
    pub gate: GateKind,
    pub channel_identity: bool,
    pub mask_context_future: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Two blocks, d = 16, two heads; 16-sample windows with 8 masked.
    pub fn desk() -> Self {
        Self {
            blocks: 2,
            heads: 2,
            d_model: 16,
            patch_size: 2,
            window_len: 16,
            future_len: 8,
            prompt_count: 1,
            anomaly_types: 4,
            anomaly_type_id: 0,
            ffn_hidden: 32,
            dylinear_len: 8,
            dropout: 0.0,
            seed: 17,
            gate: GateKind::Scalar,
            channel_identity: true,
            mask_context_future: false,
        }
    }

    /// Three blocks at d = 128.
    pub fn full_scale() -> Self {
        Self {
            blocks: 3,
            heads: 8,
            d_model: 128,
            ffn_hidden: 256,
            ..Self::desk()
        }
    }

    /// 5-sample windows predicting the final sample (patch size 1).
    pub fn stress_window(mut self) -> Self {
        self.window_len = 5;
        self.future_len = 1;
        self.patch_size = 1;
        self
    }

    pub fn window_spec(&self, stride: usize) -> WindowSpec {
        WindowSpec {
            length: self.window_len,
            stride,
            past_len: self.window_len - self.future_len.min(self.window_len),
            future_len: self.future_len,
        }
    }

    pub fn tokenizer(&self) -> TokenizerConfig {
        TokenizerConfig {
            patch_size: self.patch_size,
            embed_dim: self.d_model,
            prompt_count: self.prompt_count,
            future_len: self.future_len,
            anomaly_type_id: self.anomaly_type_id,
            mask_context_future: self.mask_context_future,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.heads == 0 || self.d_model == 0 {
            return Err(Error::Precondition(
                "blocks, heads and d must be >= 1".into(),
            ));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Precondition(format!(
                "d={} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.anomaly_type_id >= self.anomaly_types {
            return Err(Error::Precondition(format!(
                "anomaly type {} outside {} prompt rows",
                self.anomaly_type_id, self.anomaly_types
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Precondition("dropout must lie in [0, 1)".into()));
        }
        if self.ffn_hidden == 0 || self.dylinear_len == 0 {
            return Err(Error::Precondition(
                "ffn width and DyLinear length must be >= 1".into(),
            ));
        }
        self.tokenizer().validate(self.window_len)
    }
}
