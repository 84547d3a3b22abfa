//! Baseline Transformer and G-Transformer assembly.
//!
//! Both variants share one parameter naming scheme so that a sentence-level
//! baseline can seed a G-Transformer (see [`transfer_from_sentence_model`]).
//! The attention heads of a baseline layer and the group heads of a
//! G-Transformer layer use the same names; global heads and gates exist only
//! in the combined layers of a G-Transformer.

mod config;
mod forward;
mod infer;
mod transfer;

pub use config::{ModelConfig, Variant};
pub use forward::{DocumentLoss, TrainingNoise};
pub use infer::{EncoderState, IncrementalDecoder};
pub use transfer::{transfer_from_sentence_model, ParamGroup, ParamPartition};

use rand::Rng;

use crate::error::{Error, Result};
use crate::nnet::{Checkpoint, ParamStore, Tensor};

#[derive(Debug, Clone, Copy)]
pub(crate) struct HeadIds {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GateIds {
    pub w: usize,
    pub b: usize,
}

/// One attention site: local heads plus, in combined layers, global heads
/// and a gate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SiteIds {
    pub local: HeadIds,
    pub global: Option<(HeadIds, GateIds)>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NormIds {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FfIds {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncLayerIds {
    pub self_attn: SiteIds,
    pub norm1: NormIds,
    pub ff: FfIds,
    pub norm2: NormIds,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecLayerIds {
    pub self_attn: SiteIds,
    pub norm1: NormIds,
    pub cross: SiteIds,
    pub norm2: NormIds,
    pub ff: FfIds,
    pub norm3: NormIds,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub embed: usize,
    pub enc: Vec<EncLayerIds>,
    pub dec: Vec<DecLayerIds>,
}

/// Parameter shapes and initial values, in canonical order.
fn parameter_specs(cfg: &ModelConfig) -> Vec<(String, [usize; 2], Init)> {
    let d = cfg.d_model;
    let mut specs = vec![("embed".to_string(), [cfg.vocab_size, d], Init::Embedding)];
    let heads = |specs: &mut Vec<_>, prefix: &str| {
        for w in ["wq", "wk", "wv", "wo"] {
            specs.push((format!("{prefix}.{w}"), [d, d], Init::Xavier));
        }
    };
    let site = |specs: &mut Vec<_>, prefix: &str, global: bool| {
        heads(specs, prefix);
        if global {
            heads(specs, &format!("{prefix}.global"));
            specs.push((format!("{prefix}.gate.w"), [2 * d, d], Init::Xavier));
            specs.push((format!("{prefix}.gate.b"), [1, d], Init::Zeros));
        }
    };
    let norm = |specs: &mut Vec<_>, prefix: &str| {
        specs.push((format!("{prefix}.g"), [1, d], Init::Ones));
        specs.push((format!("{prefix}.b"), [1, d], Init::Zeros));
    };
    let ff = |specs: &mut Vec<_>, prefix: &str| {
        specs.push((format!("{prefix}.w1"), [d, cfg.d_ff], Init::Xavier));
        specs.push((format!("{prefix}.b1"), [1, cfg.d_ff], Init::Zeros));
        specs.push((format!("{prefix}.w2"), [cfg.d_ff, d], Init::Xavier));
        specs.push((format!("{prefix}.b2"), [1, d], Init::Zeros));
    };
    for l in 0..cfg.n_layers {
        let combined = cfg.is_combined(l);
        site(&mut specs, &format!("enc.{l}.self"), combined && cfg.source_context);
        norm(&mut specs, &format!("enc.{l}.ln1"));
        ff(&mut specs, &format!("enc.{l}.ff"));
        norm(&mut specs, &format!("enc.{l}.ln2"));
    }
    for l in 0..cfg.n_layers {
        let combined = cfg.is_combined(l);
        site(&mut specs, &format!("dec.{l}.self"), combined && cfg.target_context);
        norm(&mut specs, &format!("dec.{l}.ln1"));
        site(&mut specs, &format!("dec.{l}.cross"), combined && cfg.source_context);
        norm(&mut specs, &format!("dec.{l}.ln2"));
        ff(&mut specs, &format!("dec.{l}.ff"));
        norm(&mut specs, &format!("dec.{l}.ln3"));
    }
    specs
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Xavier,
    Embedding,
    Zeros,
    Ones,
}

fn layout(cfg: &ModelConfig, params: &ParamStore) -> Result<Layout> {
    let id = |name: String| {
        params
            .id(&name)
            .ok_or_else(|| Error::config(format!("missing parameter {name}")))
    };
    let heads = |p: &str| -> Result<HeadIds> {
        Ok(HeadIds {
            wq: id(format!("{p}.wq"))?,
            wk: id(format!("{p}.wk"))?,
            wv: id(format!("{p}.wv"))?,
            wo: id(format!("{p}.wo"))?,
        })
    };
    let site = |p: &str, global: bool| -> Result<SiteIds> {
        let global = if global {
            Some((
                heads(&format!("{p}.global"))?,
                GateIds {
                    w: id(format!("{p}.gate.w"))?,
                    b: id(format!("{p}.gate.b"))?,
                },
            ))
        } else {
            None
        };
        Ok(SiteIds {
            local: heads(p)?,
            global,
        })
    };
    let norm = |p: &str| -> Result<NormIds> {
        Ok(NormIds {
            gain: id(format!("{p}.g"))?,
            bias: id(format!("{p}.b"))?,
        })
    };
    let ff = |p: &str| -> Result<FfIds> {
        Ok(FfIds {
            w1: id(format!("{p}.w1"))?,
            b1: id(format!("{p}.b1"))?,
            w2: id(format!("{p}.w2"))?,
            b2: id(format!("{p}.b2"))?,
        })
    };
    let mut enc = Vec::with_capacity(cfg.n_layers);
    let mut dec = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let combined = cfg.is_combined(l);
        enc.push(EncLayerIds {
            self_attn: site(&format!("enc.{l}.self"), combined && cfg.source_context)?,
            norm1: norm(&format!("enc.{l}.ln1"))?,
            ff: ff(&format!("enc.{l}.ff"))?,
            norm2: norm(&format!("enc.{l}.ln2"))?,
        });
        dec.push(DecLayerIds {
            self_attn: site(&format!("dec.{l}.self"), combined && cfg.target_context)?,
            norm1: norm(&format!("dec.{l}.ln1"))?,
            cross: site(&format!("dec.{l}.cross"), combined && cfg.source_context)?,
            norm2: norm(&format!("dec.{l}.ln2"))?,
            ff: ff(&format!("dec.{l}.ff"))?,
            norm3: norm(&format!("dec.{l}.ln3"))?,
        });
    }
    Ok(Layout {
        embed: id("embed".into())?,
        enc,
        dec,
    })
}

/// A model: configuration, parameters, and the id layout derived from them.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let d = config.d_model as f64;
        for (name, [r, c], init) in parameter_specs(&config) {
            let t = match init {
                Init::Xavier => Tensor::xavier(r, c, rng),
                Init::Embedding => Tensor::normal(r, c, d.powf(-0.5), rng),
                Init::Zeros => Tensor::zeros(r, c),
                Init::Ones => Tensor::full(r, c, 1.0),
            };
            params.insert(name, t)?;
        }
        Self::from_parts(config, params)
    }

    /// Wraps existing parameters, checking names and shapes against `config`.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let specs = parameter_specs(&config);
        if specs.len() != params.len() {
            return Err(Error::config(format!(
                "configuration expects {} parameters, got {}",
                specs.len(),
                params.len()
            )));
        }
        for (name, shape, _) in &specs {
            let t = params
                .by_name(name)
                .ok_or_else(|| Error::config(format!("missing parameter {name}")))?;
            if t.shape() != *shape {
                return Err(Error::Shape(format!("{name} is {:?}, want {shape:?}", t.shape())));
            }
        }
        let layout = layout(&config, &params)?;
        Ok(Model {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.by_name(name)
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            header: serde_json::to_string(&self.config).expect("config serialises"),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_str(&ck.header)
            .map_err(|e| Error::Checkpoint(format!("config header: {e}")))?;
        Self::from_parts(config, ck.params)
    }

    /// Overwrites a named parameter, keeping its shape.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .params
            .id(name)
            .ok_or_else(|| Error::config(format!("no parameter {name}")))?;
        if self.params.get(id).shape() != value.shape() {
            return Err(Error::Shape(format!("{name}: shape {:?}", value.shape())));
        }
        *self.params.get_mut(id) = value;
        Ok(())
    }

    /// Sets every gate to `W = 0`, `b = bias`.
    pub fn saturate_gates(&mut self, bias: f64) {
        let names: Vec<String> = self
            .params
            .iter()
            .filter(|(_, n, _)| n.contains(".gate."))
            .map(|(_, n, _)| n.to_string())
            .collect();
        for n in names {
            let id = self.params.id(&n).expect("listed above");
            let t = self.params.get_mut(id);
            let fill = if n.ends_with(".b") { bias } else { 0.0 };
            t.data_mut().fill(fill);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn baseline_has_no_global_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = ModelConfig::toy(20).with_variant(Variant::BaselineTransformer);
        let m = Model::new(cfg, &mut rng).unwrap();
        assert!(m.params().iter().all(|(_, n, _)| !n.contains("global") && !n.contains("gate")));
    }

    #[test]
    fn g_transformer_global_heads_only_on_top_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cfg = ModelConfig::toy(20);
        cfg.n_layers = 3;
        cfg.k_combined = 2;
        let m = Model::new(cfg, &mut rng).unwrap();
        assert!(m.param("enc.0.self.global.wq").is_none());
        assert!(m.param("enc.1.self.global.wq").is_some());
        assert!(m.param("dec.2.cross.gate.w").is_some());
        assert!(m.param("dec.2.self.gate.b").is_some());
    }

    #[test]
    fn ablation_flags_drop_sites() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cfg = ModelConfig::toy(20);
        cfg.target_context = false;
        let m = Model::new(cfg.clone(), &mut rng).unwrap();
        assert!(m.param("dec.1.self.global.wq").is_none());
        assert!(m.param("dec.1.cross.global.wq").is_some());
        cfg.target_context = true;
        cfg.source_context = false;
        let m = Model::new(cfg, &mut rng).unwrap();
        assert!(m.param("dec.1.self.global.wq").is_some());
        assert!(m.param("dec.1.cross.global.wq").is_none());
        assert!(m.param("enc.1.self.global.wq").is_none());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Model::new(ModelConfig::toy(20), &mut rng).unwrap();
        let mut buf = Vec::new();
        m.to_checkpoint().write_to(&mut buf).unwrap();
        let back = Model::from_checkpoint(Checkpoint::read_from(&mut buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back.config(), m.config());
        assert_eq!(back.params(), m.params());
    }

    #[test]
    fn from_parts_rejects_wrong_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Model::new(ModelConfig::toy(20), &mut rng).unwrap();
        let mut cfg = m.config().clone();
        cfg.d_ff = 64;
        assert!(Model::from_parts(cfg, m.params().clone()).is_err());
    }
}
