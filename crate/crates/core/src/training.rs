//! Loss, optimiser, schedule and the training loop.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::trace::{AttentionTrace, Scope, Site};
use crate::corpus::{split_pair, DocPair};
use crate::diagnostics::{attention_entropy, EntropySeries};
use crate::error::{Error, Result};
use crate::model::{Model, ParamGroup, ParamPartition, TrainingNoise, Variant};
use crate::nnet::{Graph, ParamStore, Tensor};

/// `(1−ε)·NLL + ε·mean_v(−log p_v)` summed over rows with a target.
pub fn label_smoothed_nll(logits: &Tensor, targets: &[Option<usize>], epsilon: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("label smoothing {epsilon} outside [0, 1)")));
    }
    if logits.rows() != targets.len() {
        return Err(Error::Shape(format!("{} logit rows, {} targets", logits.rows(), targets.len())));
    }
    let mut g = Graph::inference();
    let l = g.constant(logits.clone());
    let loss = g.smoothed_nll(l, targets, epsilon);
    Ok(g.value(loss).get(0, 0))
}

/// Inverse square-root schedule with linear warmup; peaks at `base_lr` when
/// `step == warmup`.
pub fn lr_schedule(step: u64, warmup: u64, base_lr: f64) -> f64 {
    if step == 0 {
        return 0.0;
    }
    let (s, w) = (step as f64, warmup.max(1) as f64);
    base_lr * (s.powf(-0.5)).min(s * w.powf(-1.5)) * w.sqrt()
}

/// Adam with bias correction and one learning rate per parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update; `lrs[id]` is the learning rate of parameter `id`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor], lrs: &[f64]) -> Result<()> {
        if grads.len() != params.len() || lrs.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} parameters, {} gradients, {} rates",
                params.len(),
                grads.len(),
                lrs.len()
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for id in 0..params.len() {
            let (g, m, v) = (&grads[id], &mut self.m[id], &mut self.v[id]);
            if g.shape() != m.shape() {
                return Err(Error::Shape(format!("gradient {id} is {:?}", g.shape())));
            }
            let p = params.get_mut(id);
            let lr = lrs[id];
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    RandomInitBaseline,
    RandomInitGtrans,
    FinetuneGtrans,
}

impl Regime {
    pub fn default_word_dropout(self) -> f64 {
        match self {
            Regime::FinetuneGtrans => 0.1,
            _ => 0.3,
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            Regime::RandomInitBaseline => Variant::BaselineTransformer,
            _ => Variant::GTransformer,
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-init-baseline" => Ok(Regime::RandomInitBaseline),
            "random-init-gtrans" => Ok(Regime::RandomInitGtrans),
            "finetune-gtrans" => Ok(Regime::FinetuneGtrans),
            other => Err(Error::config(format!("unknown regime {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Rate for transferred parameters in the fine-tune regime.
    pub transferred_learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub warmup_steps: u64,
    /// Falls back to the model configuration.
    pub label_smoothing: Option<f64>,
    /// Falls back to the model configuration.
    pub dropout: Option<f64>,
    /// Falls back to the regime default.
    pub word_dropout: Option<f64>,
    /// Source plus target tokens per batch; documents are never split
    /// across batches.
    pub batch_tokens: usize,
    pub max_steps: u64,
    pub eval_every: u64,
    /// Validation rounds without improvement before stopping.
    pub patience: usize,
    /// Global gradient-norm cap; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
    /// Steps between attention traces of the first `trace_docs` validation
    /// documents; 0 disables tracing.
    pub trace_every: u64,
    pub trace_docs: usize,
    pub max_instance_tokens: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            transferred_learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.98,
            adam_eps: 1e-8,
            warmup_steps: 4000,
            label_smoothing: None,
            dropout: None,
            word_dropout: None,
            batch_tokens: 4096,
            max_steps: 100_000,
            eval_every: 1000,
            patience: 10,
            clip_norm: 1.0,
            seed: 1,
            trace_every: 200,
            trace_docs: 4,
            max_instance_tokens: 512,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || self.transferred_learning_rate < 0.0 {
            return Err(Error::config("learning rates must be non-negative"));
        }
        if self.warmup_steps == 0 {
            return Err(Error::config("warmup_steps must be at least 1"));
        }
        if self.clip_norm < 0.0 {
            return Err(Error::config("clip_norm must be non-negative"));
        }
        if self.eval_every == 0 || self.batch_tokens == 0 {
            return Err(Error::config("eval_every and batch_tokens must be positive"));
        }
        for (name, p) in [
            ("label_smoothing", self.label_smoothing),
            ("dropout", self.dropout),
        ] {
            if let Some(p) = p {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::config(format!("{name} {p} outside [0, 1)")));
                }
            }
        }
        if let Some(p) = self.word_dropout {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("word_dropout {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// Line-delimited metric records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    /// Appends a record; steps must increase per (split, metric).
    pub fn push(&mut self, step: u64, split: &str, metric: &str, value: f64) -> Result<()> {
        if let Some(last) = self
            .records
            .iter()
            .rev()
            .find(|r| r.split == split && r.metric == metric)
        {
            if step <= last.step {
                return Err(Error::invalid(format!("{split}/{metric}: step {step} after {}", last.step)));
            }
        }
        self.records.push(LogRecord {
            step,
            split: split.to_string(),
            metric: metric.to_string(),
            value,
        });
        Ok(())
    }

    pub fn series(&self, split: &str, metric: &str) -> Vec<(u64, f64)> {
        self.records
            .iter()
            .filter(|r| r.split == split && r.metric == metric)
            .map(|r| (r.step, r.value))
            .collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut f, r)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let mut log = TrainLog::default();
        for line in BufReader::new(fs::File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: LogRecord = serde_json::from_str(&line)?;
            log.push(r.step, &r.split, &r.metric, r.value)?;
        }
        Ok(log)
    }
}

/// Teacher-forced evaluation without smoothing or dropout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    /// Mean per-token negative log-likelihood.
    pub loss: f64,
    pub accuracy: f64,
    pub tokens: usize,
}

/// Evaluates `docs` in parallel, summing in document order.
pub fn evaluate(model: &Model, docs: &[DocPair]) -> Result<EvalStats> {
    let per_doc: Vec<(f64, usize, usize)> = docs
        .par_iter()
        .map(|p| {
            let mut g = Graph::inference();
            let out = model.document_loss(&mut g, &p.src, &p.tgt, None, 0.0)?;
            Ok((out.nll, out.tokens, out.correct))
        })
        .collect::<Result<_>>()?;
    let (mut nll, mut tokens, mut correct) = (0.0, 0, 0);
    for (n, t, c) in per_doc {
        nll += n;
        tokens += t;
        correct += c;
    }
    if tokens == 0 {
        return Err(Error::invalid("no target tokens to evaluate"));
    }
    Ok(EvalStats {
        loss: nll / tokens as f64,
        accuracy: correct as f64 / tokens as f64,
        tokens,
    })
}

/// Traces attention on `docs` and returns the trace.
pub fn trace_attention(model: &Model, docs: &[DocPair], step: u64) -> Result<AttentionTrace> {
    let mut trace = AttentionTrace::new(step);
    for (i, p) in docs.iter().enumerate() {
        model.traced_document_loss(&p.src, &p.tgt, i, &mut trace)?;
    }
    Ok(trace)
}

/// Result of [`train`]; `model` holds the best validation checkpoint.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: TrainLog,
    pub entropy: EntropySeries,
    pub best_step: u64,
    pub best_valid_loss: f64,
    pub steps: u64,
    pub stopped_early: bool,
}

fn mix_seed(seed: u64, step: u64, doc: u64) -> u64 {
    let mut z = seed
        .wrapping_add(step.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(doc.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shuffled batches of document indices with at most `batch_tokens` tokens
/// each (a single larger document forms its own batch).
pub fn make_batches<R: rand::Rng>(docs: &[DocPair], batch_tokens: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(rng);
    let mut batches = Vec::new();
    let mut cur = Vec::new();
    let mut total = 0;
    for i in order {
        let n = docs[i].num_tokens();
        if !cur.is_empty() && total + n > batch_tokens {
            batches.push(std::mem::take(&mut cur));
            total = 0;
        }
        cur.push(i);
        total += n;
    }
    if !cur.is_empty() {
        batches.push(cur);
    }
    batches
}

struct StepResult {
    loss: f64,
    tokens: usize,
    correct: usize,
    grads: Vec<Tensor>,
}

type DocResult = (f64, usize, usize, Vec<(usize, Tensor)>);

fn train_step(model: &Model, docs: &[&DocPair], cfg: &Resolved, seed: u64, step: u64, batch_ids: &[usize]) -> Result<StepResult> {
    let per_doc: Vec<DocResult> = docs
        .par_iter()
        .zip(batch_ids.par_iter())
        .map(|(p, &doc_id)| {
            let mut noise = TrainingNoise::new(mix_seed(seed, step, doc_id as u64), cfg.dropout, cfg.word_dropout);
            let mut g = Graph::new();
            let out = model.document_loss(&mut g, &p.src, &p.tgt, Some(&mut noise), cfg.label_smoothing)?;
            let loss = g.value(out.loss).get(0, 0);
            g.backward(out.loss);
            let grads = g.param_grads().into_iter().map(|(id, t)| (id, t.clone())).collect();
            Ok((loss, out.tokens, out.correct, grads))
        })
        .collect::<Result<_>>()?;
    let mut grads = model.params().zeros_like();
    let (mut loss, mut tokens, mut correct) = (0.0, 0, 0);
    for (l, t, c, gs) in per_doc {
        loss += l;
        tokens += t;
        correct += c;
        for (id, g) in gs {
            grads[id].axpy(1.0, &g);
        }
    }
    let scale = 1.0 / tokens.max(1) as f64;
    for g in &mut grads {
        for v in g.data_mut() {
            *v *= scale;
        }
    }
    Ok(StepResult {
        loss: loss * scale,
        tokens,
        correct,
        grads,
    })
}

struct Resolved {
    dropout: f64,
    word_dropout: f64,
    label_smoothing: f64,
}

/// Trains `model` on `train_docs`, early-stopping on `valid_docs`.
///
/// `partition` is required for [`Regime::FinetuneGtrans`]: transferred
/// parameters use `transferred_learning_rate`, fresh ones `learning_rate`.
/// With `out_dir`, writes `best.ckpt`, `log.jsonl`, `entropy.csv` and
/// traces under `traces/`.
pub fn train(
    model: Model,
    train_docs: &[DocPair],
    valid_docs: &[DocPair],
    regime: Regime,
    partition: Option<&ParamPartition>,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.config().variant != regime.variant() {
        return Err(Error::config(format!(
            "regime {regime:?} needs a {:?} model, got {:?}",
            regime.variant(),
            model.config().variant
        )));
    }
    let partition = match (regime, partition) {
        (Regime::FinetuneGtrans, None) => {
            return Err(Error::config("finetune-gtrans needs the transfer partition"));
        }
        (Regime::FinetuneGtrans, Some(p)) => p.clone(),
        _ => ParamPartition::uniform(model.params().len(), ParamGroup::Fresh),
    };
    if partition.len() != model.params().len() {
        return Err(Error::config("parameter partition does not match the model"));
    }
    if train_docs.is_empty() || valid_docs.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let resolved = Resolved {
        dropout: cfg.dropout.unwrap_or(model.config().dropout),
        word_dropout: cfg.word_dropout.unwrap_or(regime.default_word_dropout()),
        label_smoothing: cfg.label_smoothing.unwrap_or(model.config().label_smoothing),
    };
    let mut instances = Vec::with_capacity(train_docs.len());
    for p in train_docs {
        instances.extend(split_pair(p, cfg.max_instance_tokens)?);
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir.join("traces"))?;
    }

    let started = Instant::now();
    let mut model = model;
    let mut adam = Adam::new(model.params(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainLog::default();
    let mut entropy = EntropySeries::default();
    let mut best = (f64::INFINITY, 0u64, model.params().clone());
    let mut rounds_without_gain = 0;
    let mut stopped_early = false;
    let mut batches = Vec::new().into_iter();
    let mut step = 0u64;
    let trace_docs = &valid_docs[..cfg.trace_docs.min(valid_docs.len())];

    let record_trace = |model: &Model, step: u64, entropy: &mut EntropySeries, log: &mut TrainLog| -> Result<()> {
        if cfg.trace_every == 0 || trace_docs.is_empty() {
            return Ok(());
        }
        let trace = trace_attention(model, trace_docs, step)?;
        let snap = attention_entropy(&trace)?;
        for site in Site::ALL {
            if let Some(v) = snap.mean(Some(site), None) {
                log.push(step, "valid", &format!("entropy/{}", site.as_str()), v)?;
            }
            for scope in [Scope::Group, Scope::Global] {
                if let Some(v) = snap.mean(Some(site), Some(scope)) {
                    let scope = if scope == Scope::Group { "group" } else { "global" };
                    log.push(step, "valid", &format!("entropy/{}/{scope}", site.as_str()), v)?;
                }
            }
        }
        if let Some(dir) = out_dir {
            trace.save(&dir.join("traces").join(format!("step-{step:06}.json")))?;
        }
        entropy.push(snap)
    };

    record_trace(&model, 0, &mut entropy, &mut log)?;
    while step < cfg.max_steps {
        let batch = match batches.next() {
            Some(b) => b,
            None => {
                batches = make_batches(&instances, cfg.batch_tokens, &mut rng).into_iter();
                batches.next().expect("non-empty training set")
            }
        };
        step += 1;
        let docs: Vec<&DocPair> = batch.iter().map(|&i| &instances[i]).collect();
        let mut out = train_step(&model, &docs, &resolved, cfg.seed, step, &batch)?;
        if !out.loss.is_finite() || out.grads.iter().any(|g| !g.is_finite()) {
            if let Some(dir) = out_dir {
                model.to_checkpoint().save(&dir.join("diverged.ckpt"))?;
                log.write_jsonl(&dir.join("log.jsonl"))?;
            }
            return Err(Error::Diverged {
                step,
                reason: format!("training loss {}", out.loss),
            });
        }
        let cap = if cfg.clip_norm > 0.0 { cfg.clip_norm } else { f64::INFINITY };
        let grad_norm = clip_grad_norm(&mut out.grads, cap);
        let lr_fresh = lr_schedule(step, cfg.warmup_steps, cfg.learning_rate);
        let lr_transferred = lr_schedule(step, cfg.warmup_steps, cfg.transferred_learning_rate);
        let lrs: Vec<f64> = (0..model.params().len())
            .map(|id| match partition.group(id) {
                ParamGroup::Fresh => lr_fresh,
                ParamGroup::Transferred => lr_transferred,
            })
            .collect();
        adam.step(model.params_mut(), &out.grads, &lrs)?;
        log.push(step, "train", "loss", out.loss)?;
        log.push(step, "train", "accuracy", out.correct as f64 / out.tokens.max(1) as f64)?;
        log.push(step, "train", "grad_norm", grad_norm)?;
        log.push(step, "train", "lr", lr_fresh)?;

        if cfg.trace_every > 0 && step.is_multiple_of(cfg.trace_every) {
            record_trace(&model, step, &mut entropy, &mut log)?;
        }
        if step.is_multiple_of(cfg.eval_every) || step == cfg.max_steps {
            let stats = evaluate(&model, valid_docs)?;
            log.push(step, "valid", "loss", stats.loss)?;
            log.push(step, "valid", "accuracy", stats.accuracy)?;
            log.push(step, "valid", "wall_clock_s", started.elapsed().as_secs_f64())?;
            log::info!(
                "step {step}: train loss {:.4}, valid loss {:.4}, valid acc {:.4}",
                out.loss,
                stats.loss,
                stats.accuracy
            );
            if stats.loss < best.0 {
                best = (stats.loss, step, model.params().clone());
                rounds_without_gain = 0;
            } else {
                rounds_without_gain += 1;
                if rounds_without_gain >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    let (best_valid_loss, best_step, best_params) = best;
    let steps = step;
    let config = model.config().clone();
    let model = Model::from_parts(config, best_params)?;
    if let Some(dir) = out_dir {
        model.to_checkpoint().save(&dir.join("best.ckpt"))?;
        log.write_jsonl(&dir.join("log.jsonl"))?;
        fs::write(dir.join("entropy.csv"), entropy.to_csv())?;
    }
    Ok(TrainOutcome {
        model,
        log,
        entropy,
        best_step,
        best_valid_loss,
        steps,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(lr_schedule(0, 4000, 5e-4), 0.0);
        assert!((lr_schedule(4000, 4000, 5e-4) - 5e-4).abs() < 1e-18);
        assert!((lr_schedule(16000, 4000, 5e-4) - 2.5e-4).abs() < 1e-18);
        assert!((lr_schedule(1, 4000, 5e-4) - 1.25e-7).abs() < 1e-20);
    }

    #[test]
    fn smoothing_closed_forms() {
        let uniform = Tensor::zeros(2, 5);
        let l = label_smoothed_nll(&uniform, &[Some(1), Some(3)], 0.1).unwrap();
        assert!((l - 2.0 * 5f64.ln()).abs() < 1e-12);
        assert!(label_smoothed_nll(&uniform, &[Some(1), None], 1.0).is_err());
        let l = label_smoothed_nll(&uniform, &[None, None], 0.0).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn clipping_scales_to_max_norm() {
        let mut g = vec![Tensor::row_vector(vec![3.0, 4.0])];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
        let mut g = vec![Tensor::row_vector(vec![0.3, 0.4])];
        clip_grad_norm(&mut g, 1.0);
        assert_eq!(g[0].data(), &[0.3, 0.4]);
    }

    #[test]
    fn log_enforces_increasing_steps() {
        let mut log = TrainLog::default();
        log.push(1, "train", "loss", 2.0).unwrap();
        log.push(1, "valid", "loss", 2.0).unwrap();
        assert!(log.push(1, "train", "loss", 1.0).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        log.write_jsonl(&p).unwrap();
        assert_eq!(TrainLog::read_jsonl(&p).unwrap(), log);
    }

    #[test]
    fn config_round_trip_and_validation() {
        let c = TrainConfig {
            word_dropout: Some(0.1),
            ..Default::default()
        };
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(TrainConfig::from_toml("warmup_steps = 0").is_err());
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
    }
}
