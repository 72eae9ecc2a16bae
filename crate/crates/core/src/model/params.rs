use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{GateKind, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor};
use crate::tokenizer::EmbedNodes;

/// Named parameter tensors in a fixed registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    n_targets: usize,
    n_context: usize,
    trained: bool,
}

enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

impl ModelParams {
    /// Seeded initialisation for `n` target and `m` context channels.
    pub fn init(cfg: &ModelConfig, n: usize, m: usize) -> Result<Self> {
        cfg.validate()?;
        if n == 0 {
            return Err(Error::NoTargets);
        }
        let (d, k, h, l) = (
            cfg.d_model,
            cfg.patch_size,
            cfg.ffn_hidden,
            cfg.dylinear_len,
        );
        let gate = match cfg.gate {
            GateKind::Scalar => vec![1],
            GateKind::Vector => vec![d],
        };
        let fan = |x: usize| Init::Normal(1.0 / (x as f64).sqrt());
        let mut spec: Vec<(String, Vec<usize>, Init)> = vec![
            ("embed.target_w".into(), vec![k, d], fan(k)),
            ("embed.target_b".into(), vec![d], Init::Zeros),
            ("embed.context_w".into(), vec![k, d], fan(k)),
            ("embed.context_b".into(), vec![d], Init::Zeros),
            ("embed.gen".into(), vec![d], Init::Normal(0.1)),
            (
                "embed.prompt_bank".into(),
                vec![cfg.anomaly_types, cfg.prompt_count, d],
                Init::Normal(0.1),
            ),
        ];
        if cfg.channel_identity {
            spec.push(("embed.channel_id".into(), vec![n + m, d], Init::Normal(0.1)));
        }
        for b in 0..cfg.blocks {
            for axis in ["time", "var"] {
                let p = format!("block{b}.{axis}");
                spec.push((format!("{p}.ln_g"), vec![d], Init::Ones));
                spec.push((format!("{p}.ln_b"), vec![d], Init::Zeros));
                for w in ["q", "k", "v", "o"] {
                    spec.push((format!("{p}.w{w}"), vec![d, d], fan(d)));
                    spec.push((format!("{p}.b{w}"), vec![d], Init::Zeros));
                }
                spec.push((format!("{p}.gate"), gate.clone(), Init::Zeros));
            }
            let p = format!("block{b}.ffn");
            spec.push((format!("{p}.ln_g"), vec![d], Init::Ones));
            spec.push((format!("{p}.ln_b"), vec![d], Init::Zeros));
            spec.push((format!("{p}.w1"), vec![d, h], fan(d)));
            spec.push((format!("{p}.b1"), vec![h], Init::Zeros));
            spec.push((format!("{p}.dyl"), vec![l], Init::Ones));
            spec.push((format!("{p}.w2"), vec![h, d], fan(h)));
            spec.push((format!("{p}.b2"), vec![d], Init::Zeros));
            spec.push((format!("{p}.gate"), gate.clone(), Init::Zeros));
        }
        spec.extend([
            ("tower.dyl".into(), vec![l], Init::Ones),
            ("tower.w1".into(), vec![d, h], fan(d)),
            ("tower.b1".into(), vec![h], Init::Zeros),
            ("tower.w2".into(), vec![h, d], fan(h)),
            ("tower.b2".into(), vec![d], Init::Zeros),
            ("tower.proj_w".into(), vec![d, k], fan(d)),
            ("tower.proj_b".into(), vec![k], Init::Zeros),
        ]);

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut names = Vec::with_capacity(spec.len());
        let mut tensors = Vec::with_capacity(spec.len());
        for (name, shape, init) in spec {
            let t = match init {
                Init::Zeros => Tensor::zeros(&shape),
                Init::Ones => Tensor::full(&shape, 1.0),
                Init::Normal(std) => {
                    let dist = Normal::new(0.0, std).expect("positive std");
                    Tensor::from_fn(&shape, |_| dist.sample(&mut rng))
                }
            };
            names.push(name);
            tensors.push(t);
        }
        Ok(Self {
            names,
            tensors,
            n_targets: n,
            n_context: m,
            trained: false,
        })
    }

    /// Rebuild from named tensors; every expected name must be present with
    /// the expected shape.
    pub fn from_named(
        cfg: &ModelConfig,
        n: usize,
        m: usize,
        named: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        let mut out = Self::init(cfg, n, m)?;
        let mut seen = vec![false; out.names.len()];
        for (name, tensor) in named {
            let Some(i) = out.position(&name) else {
                return Err(Error::Checkpoint(format!("unexpected parameter {name}")));
            };
            if tensor.shape() != out.tensors[i].shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    tensor.shape(),
                    out.tensors[i].shape()
                )));
            }
            out.tensors[i] = tensor;
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Checkpoint(format!(
                "missing parameter {}",
                out.names[i]
            )));
        }
        Ok(out)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn n_context(&self) -> usize {
        self.n_context
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.position(name).map(|i| &mut self.tensors[i])
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.numel(), "flat parameter length");
        let mut at = 0;
        for t in &mut self.tensors {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
    }

    pub fn named(&self) -> Vec<(String, Tensor)> {
        self.names
            .iter()
            .cloned()
            .zip(self.tensors.iter().cloned())
            .collect()
    }

    /// Register every tensor as a trainable leaf.
    pub fn register<'p>(&'p self, g: &mut Graph<'p>) -> Leaves {
        Leaves {
            ids: self.tensors.iter().map(|t| g.param(t)).collect(),
            names: self.names.clone(),
        }
    }
}

/// Graph leaves for a registered [`ModelParams`].
#[derive(Debug, Clone)]
pub struct Leaves {
    pub ids: Vec<NodeId>,
    names: Vec<String>,
}

impl Leaves {
    pub fn get(&self, name: &str) -> NodeId {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("parameter {name} not registered"));
        self.ids[i]
    }

    pub fn try_get(&self, name: &str) -> Option<NodeId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.ids[i])
    }

    pub fn embed(&self) -> EmbedNodes {
        EmbedNodes {
            target_w: self.get("embed.target_w"),
            target_b: self.get("embed.target_b"),
            context_w: self.get("embed.context_w"),
            context_b: self.get("embed.context_b"),
            channel_id: self.try_get("embed.channel_id"),
            gen: self.get("embed.gen"),
            prompt_bank: self.get("embed.prompt_bank"),
        }
    }

    /// Flatten gradients in parameter order; absent gradients count as zero.
    pub fn flat_grad(&self, grads: &crate::numerics::Gradients, params: &ModelParams) -> Vec<f64> {
        let mut out = Vec::with_capacity(params.numel());
        for (id, t) in self.ids.iter().zip(params.tensors()) {
            match grads.get(*id) {
                Some(gt) => out.extend_from_slice(gt.data()),
                None => out.extend(std::iter::repeat_n(0.0, t.numel())),
            }
        }
        out
    }
}
