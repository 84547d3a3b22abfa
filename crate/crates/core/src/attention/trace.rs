//! Captured post-softmax attention weights.
//!
//! A trace file is JSON: `{"step": u64, "records": [TraceRecord, ...]}` where
//! every record carries its own shape, so files are self-describing.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Site {
    EncSelf,
    DecSelf,
    Cross,
}

impl Site {
    pub const ALL: [Site; 3] = [Site::EncSelf, Site::DecSelf, Site::Cross];

    pub fn as_str(self) -> &'static str {
        match self {
            Site::EncSelf => "enc-self",
            Site::DecSelf => "dec-self",
            Site::Cross => "cross",
        }
    }
}

/// Which branch produced the weights: sentence-local (group) heads or
/// unrestricted heads. Baseline Transformer heads are `Global`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    Group,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Index of the document within the traced batch.
    pub doc: usize,
    pub layer: usize,
    pub head: usize,
    pub site: Site,
    pub scope: Scope,
    pub rows: usize,
    pub cols: usize,
    /// Row-major `[rows × cols]` attention weights.
    pub weights: Vec<f64>,
    /// Group tags of the query positions (0 marks padding).
    pub query_tags: Vec<u32>,
    pub key_tags: Vec<u32>,
}

impl TraceRecord {
    pub fn weights_tensor(&self) -> Result<Tensor> {
        Tensor::from_vec(self.rows, self.cols, self.weights.clone())
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub step: u64,
    pub records: Vec<TraceRecord>,
}

impl AttentionTrace {
    pub fn new(step: u64) -> Self {
        AttentionTrace {
            step,
            records: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        doc: usize,
        layer: usize,
        head: usize,
        site: Site,
        scope: Scope,
        weights: &Tensor,
        query_tags: &[u32],
        key_tags: &[u32],
    ) {
        self.records.push(TraceRecord {
            doc,
            layer,
            head,
            site,
            scope,
            rows: weights.rows(),
            cols: weights.cols(),
            weights: weights.data().to_vec(),
            query_tags: query_tags.to_vec(),
            key_tags: key_tags.to_vec(),
        });
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: AttentionTrace = serde_json::from_slice(&fs::read(path)?)?;
        for r in &t.records {
            if r.weights.len() != r.rows * r.cols
                || r.query_tags.len() != r.rows
                || r.key_tags.len() != r.cols
            {
                return Err(Error::Shape(format!(
                    "trace record layer {} head {} is inconsistent",
                    r.layer, r.head
                )));
            }
        }
        Ok(t)
    }
}
