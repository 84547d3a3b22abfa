//! Training diagnostics: attention entropy and loss plateaus.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attention::trace::{AttentionTrace, Scope, Site};
use crate::error::{Error, Result};

/// Shannon entropy in bits; zero entries contribute nothing.
pub fn entropy_bits(row: &[f64]) -> f64 {
    -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub site: Site,
    pub scope: Scope,
    pub layer: usize,
    /// Mean entropy over non-pad query rows, heads and documents.
    pub bits: f64,
    pub rows: usize,
}

/// Entropy of one trace, per (site, scope, layer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySnapshot {
    pub step: u64,
    pub values: Vec<EntropyValue>,
}

impl EntropySnapshot {
    /// Row-weighted mean over the matching entries.
    pub fn mean(&self, site: Option<Site>, scope: Option<Scope>) -> Option<f64> {
        let (mut total, mut rows) = (0.0, 0);
        for v in &self.values {
            if site.is_none_or(|s| s == v.site) && scope.is_none_or(|s| s == v.scope) {
                total += v.bits * v.rows as f64;
                rows += v.rows;
            }
        }
        (rows > 0).then(|| total / rows as f64)
    }
}

const DISTRIBUTION_TOL: f64 = 1e-6;

/// Per-layer, per-site mean entropy of the attention rows in `trace`.
pub fn attention_entropy(trace: &AttentionTrace) -> Result<EntropySnapshot> {
    let mut acc: BTreeMap<(Site, Scope, usize), (f64, usize)> = BTreeMap::new();
    for rec in &trace.records {
        for r in 0..rec.rows {
            if rec.query_tags[r] == 0 {
                continue;
            }
            let row = rec.row(r);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > DISTRIBUTION_TOL || row.iter().any(|&p| p < 0.0) {
                return Err(Error::invalid(format!(
                    "layer {} head {} row {r} is not a distribution (sum {sum})",
                    rec.layer, rec.head
                )));
            }
            let e = acc.entry((rec.site, rec.scope, rec.layer)).or_default();
            e.0 += entropy_bits(row);
            e.1 += 1;
        }
    }
    Ok(EntropySnapshot {
        step: trace.step,
        values: acc
            .into_iter()
            .map(|((site, scope, layer), (sum, rows))| EntropyValue {
                site,
                scope,
                layer,
                bits: sum / rows as f64,
                rows,
            })
            .collect(),
    })
}

/// Entropy snapshots over training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropySeries {
    pub snapshots: Vec<EntropySnapshot>,
}

impl EntropySeries {
    pub fn push(&mut self, s: EntropySnapshot) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if s.step <= last.step {
                return Err(Error::invalid(format!("step {} after {}", s.step, last.step)));
            }
        }
        self.snapshots.push(s);
        Ok(())
    }

    /// `(step, mean bits)` for the matching entries.
    pub fn series(&self, site: Option<Site>, scope: Option<Scope>) -> Vec<(u64, f64)> {
        self.snapshots
            .iter()
            .filter_map(|s| s.mean(site, scope).map(|m| (s.step, m)))
            .collect()
    }

    /// `step,site,scope,layer,bits,rows` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,site,scope,layer,bits,rows\n");
        for s in &self.snapshots {
            for v in &s.values {
                let scope = match v.scope {
                    Scope::Group => "group",
                    Scope::Global => "global",
                };
                out.push_str(&format!("{},{},{scope},{},{:.6},{}\n", s.step, v.site.as_str(), v.layer, v.bits, v.rows));
            }
        }
        out
    }
}

/// True when no value rises more than `tol` above the running minimum.
pub fn is_monotone_non_increasing(values: &[f64], tol: f64) -> bool {
    let mut best = f64::INFINITY;
    for &v in values {
        if v > best + tol {
            return false;
        }
        best = best.min(v);
    }
    true
}

/// Plateaus of a validation-loss series given as `(step, loss)` pairs.
///
/// Checkpoint `i ≥ window` is stagnant when the best-so-far loss improved by
/// less than `slope_tol` over the preceding `window` checkpoints. Each
/// maximal run of stagnant checkpoints `a..=b` is reported as
/// `(step[a - window], step[b])`. Series no longer than `window` have no
/// plateaus.
pub fn detect_plateau(losses: &[(u64, f64)], window: usize, slope_tol: f64) -> Vec<(u64, u64)> {
    if window == 0 || losses.len() <= window {
        return Vec::new();
    }
    let mut best = Vec::with_capacity(losses.len());
    let mut b = f64::INFINITY;
    for &(_, l) in losses {
        b = b.min(l);
        best.push(b);
    }
    let mut out = Vec::new();
    let mut run: Option<usize> = None;
    for i in window..=losses.len() {
        let stagnant = i < losses.len() && best[i - window] - best[i] < slope_tol;
        match (stagnant, run) {
            (true, None) => run = Some(i),
            (false, Some(a)) => {
                out.push((losses[a - window].0, losses[i - 1].0));
                run = None;
            }
            _ => {}
        }
    }
    out
}
