//! Initialising a G-Transformer from a sentence-level Transformer.

use serde::{Deserialize, Serialize};

use super::{Model, Variant};
use crate::error::{Error, Result};
use crate::nnet::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamGroup {
    /// Copied from the sentence model.
    Transferred,
    /// Randomly initialised (global heads and gates).
    Fresh,
}

/// Group label per parameter id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamPartition {
    groups: Vec<ParamGroup>,
}

impl ParamPartition {
    pub fn uniform(n: usize, group: ParamGroup) -> Self {
        ParamPartition {
            groups: vec![group; n],
        }
    }

    pub fn group(&self, id: usize) -> ParamGroup {
        self.groups[id]
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn ids(&self, group: ParamGroup) -> impl Iterator<Item = usize> + '_ {
        self.groups
            .iter()
            .enumerate()
            .filter(move |(_, &g)| g == group)
            .map(|(i, _)| i)
    }

    /// Number of scalars in `group`.
    pub fn scalar_count(&self, params: &ParamStore, group: ParamGroup) -> usize {
        self.ids(group).map(|id| params.get(id).len()).sum()
    }
}

/// Copies every parameter of `sentence` whose name and shape also occur in
/// `fresh` (attention heads map onto the group heads). Global heads and
/// gates keep their fresh values.
pub fn transfer_from_sentence_model(sentence: &Model, fresh: &Model) -> Result<(Model, ParamPartition)> {
    let (a, b) = (sentence.config(), fresh.config());
    if (a.d_model, a.d_ff, a.n_heads, a.vocab_size, a.n_layers) != (b.d_model, b.d_ff, b.n_heads, b.vocab_size, b.n_layers) {
        return Err(Error::config(format!(
            "width mismatch: sentence model {}x{}/{} heads/{} vocab/{} layers, target {}x{}/{} heads/{} vocab/{} layers",
            a.d_model, a.d_ff, a.n_heads, a.vocab_size, a.n_layers, b.d_model, b.d_ff, b.n_heads, b.vocab_size, b.n_layers
        )));
    }
    if a.variant != Variant::BaselineTransformer {
        log::warn!("transferring from a {:?} model; only shared names are copied", a.variant);
    }
    let mut out = fresh.clone();
    let mut groups = Vec::with_capacity(fresh.params().len());
    let names: Vec<String> = fresh.params().iter().map(|(_, n, _)| n.to_string()).collect();
    for name in names {
        match sentence.param(&name) {
            Some(t) if t.shape() == fresh.param(&name).expect("own name").shape() => {
                out.set_param(&name, t.clone())?;
                groups.push(ParamGroup::Transferred);
            }
            Some(t) => {
                return Err(Error::Shape(format!("{name}: sentence model has {:?}", t.shape())));
            }
            None => groups.push(ParamGroup::Fresh),
        }
    }
    Ok((out, ParamPartition { groups }))
}
