mod common;

use common::*;
use gtransformer::corpus::{generate, DocPair, SyntheticTaskSpec, Task};
use gtransformer::model::{transfer_from_sentence_model, Model, ModelConfig, ParamGroup, Variant};
use gtransformer::nnet::{ParamStore, Tensor};
use gtransformer::training::{
    evaluate, label_smoothed_nll, lr_schedule, train, Adam, Regime, TrainConfig, TrainLog,
};
use gtransformer::Error;

fn copy_corpus(train: usize, seed: u64) -> Vec<DocPair> {
    generate(&SyntheticTaskSpec {
        task: Task::Copy,
        vocab_size: 20,
        train,
        dev: 0,
        test: 0,
        seed,
        ..Default::default()
    })
    .unwrap()
    .train
}

fn quick_config(max_steps: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        warmup_steps: 10,
        batch_tokens: 200,
        max_steps,
        eval_every: 5,
        patience: 100,
        trace_every: 5,
        trace_docs: 2,
        ..Default::default()
    }
}

fn row_log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

#[test]
fn label_smoothing_matches_definition() {
    let logits = Tensor::uniform(6, 9, 4.0, &mut rng(3));
    let targets = [Some(0), Some(8), None, Some(3), Some(3), None];
    for eps in [0.0, 0.1, 0.5] {
        let mut expected = 0.0;
        for (r, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            let lp = row_log_softmax(logits.row(r));
            let mean: f64 = lp.iter().map(|v| -v).sum::<f64>() / lp.len() as f64;
            expected += (1.0 - eps) * -lp[t] + eps * mean;
        }
        let got = label_smoothed_nll(&logits, &targets, eps).unwrap();
        assert!((got - expected).abs() < 1e-12, "eps {eps}: {got} vs {expected}");
    }
}

#[test]
fn uniform_logits_give_log_vocab() {
    let l = label_smoothed_nll(&Tensor::zeros(1, 37), &[Some(5)], 0.1).unwrap();
    assert!((l - 37f64.ln()).abs() < 1e-12);
}

#[test]
fn schedule_peak_and_decay() {
    for w in [1, 10, 4000] {
        assert!((lr_schedule(w, w, 3e-4) - 3e-4).abs() < 1e-18);
        assert!((lr_schedule(4 * w, w, 3e-4) - 1.5e-4).abs() < 1e-18);
    }
    assert!((lr_schedule(1, 4000, 5e-4) - 1.25e-7).abs() < 1e-20);
}

/// Adam on `f(x) = ½·Σ a_i (x_i − c_i)²` against a hand-rolled loop.
#[test]
#[allow(clippy::needless_range_loop)]
fn adam_matches_closed_form_on_quadratic() {
    let a = [0.5, 2.0, 10.0, 1e-3];
    let c = [1.0, -2.0, 0.25, 4.0];
    let mut params = ParamStore::new();
    params.insert("x", Tensor::row_vector(vec![0.0, 1.0, -1.0, 3.0])).unwrap();
    let (b1, b2, eps, lr) = (0.9, 0.98, 1e-8, 0.01);
    let mut adam = Adam::new(&params, b1, b2, eps);

    let grad = |x: &[f64]| -> Vec<f64> { (0..4).map(|i| a[i] * (x[i] - c[i])).collect() };
    // First step: m̂ = g, v̂ = g², so the update is lr·g/(|g|+eps).
    let x0 = params.get(0).data().to_vec();
    let g0 = grad(&x0);
    adam.step(&mut params, &[Tensor::row_vector(g0.clone())], &[lr]).unwrap();
    for i in 0..4 {
        let expected = x0[i] - lr * g0[i] / (g0[i].abs() + eps);
        assert!((params.get(0).data()[i] - expected).abs() < 1e-10);
    }

    let (mut m, mut v) = (vec![0.0; 4], vec![0.0; 4]);
    let mut x = x0;
    for i in 0..4 {
        m[i] = (1.0 - b1) * g0[i];
        v[i] = (1.0 - b2) * g0[i] * g0[i];
        x[i] -= lr * (m[i] / (1.0 - b1)) / ((v[i] / (1.0 - b2)).sqrt() + eps);
    }
    for t in 2..=20 {
        let g = grad(params.get(0).data());
        adam.step(&mut params, &[Tensor::row_vector(g.clone())], &[lr]).unwrap();
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        for i in 0..4 {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            x[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
        for i in 0..4 {
            assert!((params.get(0).data()[i] - x[i]).abs() < 1e-10, "step {t}");
        }
    }
    assert_eq!(adam.steps(), 20);
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let docs = copy_corpus(12, 1);
    let model = tiny_model(1, Variant::GTransformer);
    let before = model.params().clone();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..quick_config(10)
    };
    let out = train(model, &docs, &docs[..3], Regime::RandomInitGtrans, None, &cfg, None).unwrap();
    assert_eq!(out.steps, 10);
    for (id, name, t) in before.iter() {
        assert_eq!(t.data(), out.model.params().get(id).data(), "{name}");
    }
}

#[test]
fn training_is_reproducible() {
    let docs = copy_corpus(12, 2);
    let run = || {
        let cfg = TrainConfig {
            dropout: Some(0.2),
            word_dropout: Some(0.2),
            ..quick_config(15)
        };
        train(tiny_model(3, Variant::GTransformer), &docs, &docs[..3], Regime::RandomInitGtrans, None, &cfg, None)
            .unwrap()
    };
    let (a, b) = (run(), run());
    for (id, _, t) in a.model.params().iter() {
        assert_eq!(t.data(), b.model.params().get(id).data());
    }
    assert_eq!(a.log.series("train", "loss"), b.log.series("train", "loss"));
    assert_eq!(a.entropy, b.entropy);
}

#[test]
fn reported_validation_loss_matches_independent_evaluation() {
    let docs = copy_corpus(16, 3);
    let (train_docs, valid) = docs.split_at(12);
    let out = train(
        tiny_model(4, Variant::BaselineTransformer),
        train_docs,
        valid,
        Regime::RandomInitBaseline,
        None,
        &quick_config(20),
        None,
    )
    .unwrap();
    let stats = evaluate(&out.model, valid).unwrap();
    assert!((stats.loss - out.best_valid_loss).abs() < 1e-6);
    let logged = out.log.series("valid", "loss");
    assert!(logged.contains(&(out.best_step, out.best_valid_loss)));
}

#[test]
fn early_stopping_respects_patience() {
    let docs = copy_corpus(8, 4);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        patience: 2,
        ..quick_config(1000)
    };
    let out = train(tiny_model(5, Variant::GTransformer), &docs, &docs[..2], Regime::RandomInitGtrans, None, &cfg, None)
        .unwrap();
    assert!(out.stopped_early);
    // First round sets the best; two more rounds without gain stop the run.
    assert_eq!(out.steps, 15);
    assert_eq!(out.best_step, 5);
}

#[test]
fn outputs_are_written_and_log_round_trips() {
    let docs = copy_corpus(8, 5);
    let dir = tempfile::tempdir().unwrap();
    let out = train(
        tiny_model(6, Variant::GTransformer),
        &docs,
        &docs[..2],
        Regime::RandomInitGtrans,
        None,
        &quick_config(10),
        Some(dir.path()),
    )
    .unwrap();
    for f in ["best.ckpt", "log.jsonl", "entropy.csv", "traces/step-000000.json", "traces/step-000010.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let log = TrainLog::read_jsonl(&dir.path().join("log.jsonl")).unwrap();
    assert_eq!(log, out.log);
    for metric in ["loss", "accuracy", "grad_norm", "lr"] {
        let s = log.series("train", metric);
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0].0 < w[1].0));
    }
    assert!(!log.series("valid", "entropy/cross/group").is_empty());
    let ck = gtransformer::nnet::Checkpoint::load(&dir.path().join("best.ckpt")).unwrap();
    let restored = Model::from_checkpoint(ck).unwrap();
    assert_eq!(restored.params(), out.model.params());
}

#[test]
fn divergence_aborts_with_snapshot() {
    let docs = copy_corpus(4, 6);
    let mut model = tiny_model(7, Variant::GTransformer);
    let mut bad = model.param("enc.0.ff.b1").unwrap().clone();
    bad.data_mut()[0] = f64::NAN;
    model.set_param("enc.0.ff.b1", bad).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = train(model, &docs, &docs[..1], Regime::RandomInitGtrans, None, &quick_config(5), Some(dir.path()))
        .unwrap_err();
    assert!(matches!(err, Error::Diverged { step: 1, .. }), "{err}");
    assert!(dir.path().join("diverged.ckpt").exists());
}

#[test]
fn regime_and_model_must_agree() {
    let docs = copy_corpus(4, 7);
    let cfg = quick_config(1);
    let baseline = tiny_model(8, Variant::BaselineTransformer);
    assert!(train(baseline, &docs, &docs, Regime::RandomInitGtrans, None, &cfg, None).is_err());
    let g = tiny_model(8, Variant::GTransformer);
    assert!(train(g, &docs, &docs, Regime::FinetuneGtrans, None, &cfg, None).is_err());
}

#[test]
fn finetune_moves_fresh_parameters_faster() {
    let docs = copy_corpus(20, 8);
    let sentence = Model::new(tiny_config(20, Variant::BaselineTransformer), &mut rng(9)).unwrap();
    let fresh = Model::new(tiny_config(20, Variant::GTransformer), &mut rng(10)).unwrap();
    let (model, partition) = transfer_from_sentence_model(&sentence, &fresh).unwrap();
    let before = model.params().clone();
    let cfg = TrainConfig {
        learning_rate: 5e-4,
        transferred_learning_rate: 1e-4,
        warmup_steps: 50,
        eval_every: 100,
        trace_every: 0,
        ..quick_config(100)
    };
    let out = train(model, &docs, &docs[..4], Regime::FinetuneGtrans, Some(&partition), &cfg, None).unwrap();
    // Compare the final parameters rather than the best checkpoint.
    assert_eq!(out.best_step, 100);
    let mean_update = |group: ParamGroup| {
        let mut total = 0.0;
        for id in partition.ids(group) {
            let (a, b) = (before.get(id), out.model.params().get(id));
            total += a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>();
        }
        total / partition.scalar_count(&before, group) as f64
    };
    let (fresh, transferred) = (mean_update(ParamGroup::Fresh), mean_update(ParamGroup::Transferred));
    assert!(fresh > transferred, "fresh {fresh:.3e} vs transferred {transferred:.3e}");
}

#[test]
fn config_files_round_trip() {
    let mc = ModelConfig::toy(30);
    assert_eq!(ModelConfig::from_toml(&mc.to_toml()).unwrap(), mc);
    let tc = TrainConfig {
        clip_norm: 0.0,
        ..Default::default()
    };
    assert_eq!(TrainConfig::from_toml(&tc.to_toml()).unwrap(), tc);
    assert!(TrainConfig::from_toml("warmup_steps = 0").is_err());
    assert!(TrainConfig::from_toml("no_such_field = 1").is_err());
}

#[test]
fn copy_task_is_learned_and_decoded_exactly() {
    let corpus = generate(&SyntheticTaskSpec {
        task: Task::Copy,
        vocab_size: 16,
        sentences: (8, 12),
        tokens: (5, 10),
        train: 50,
        dev: 10,
        test: 10,
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    let mc = ModelConfig {
        n_heads: 2,
        dropout: 0.1,
        ..ModelConfig::toy(corpus.vocab.len())
    }
    .with_variant(Variant::GTransformer);
    assert_eq!((mc.n_layers, mc.d_model), (2, 64));
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        warmup_steps: 200,
        batch_tokens: 1000,
        max_steps: 2000,
        eval_every: 250,
        patience: 30,
        word_dropout: Some(0.1),
        trace_every: 0,
        ..Default::default()
    };
    let model = Model::new(mc, &mut rng(5)).unwrap();
    let out = train(model, &corpus.train, &corpus.dev, Regime::RandomInitGtrans, None, &cfg, None).unwrap();
    let best = out.log.series("valid", "accuracy").into_iter().map(|p| p.1).fold(0.0, f64::max);
    assert!(best > 0.95, "valid accuracy {best}");
    let len = gtransformer::decoding::LengthParams::default();
    for pair in &corpus.train[..5] {
        let hyp = gtransformer::decoding::beam_search_document(&pair.src, &out.model, 5, &len).unwrap();
        assert_eq!(hyp.document, pair.src);
    }
}
