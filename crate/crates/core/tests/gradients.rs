//! Central finite-difference checks for every differentiable op and for a
//! whole model pass.

mod common;

use common::ops::op_cases;
use common::oracles::model_gradient_error;
use common::*;
use gtransformer::model::{Model, Variant};
use gtransformer::tagging::TokenDocument;

const TOL: f64 = 1e-3;

fn assert_ops(names: &[&str]) {
    let cases = op_cases();
    for name in names {
        let case = cases.iter().find(|c| c.name == *name).expect("known op");
        let err = case.error();
        assert!(err <= TOL, "{name}: relative error {err:.3e}");
    }
}

#[test]
fn every_op_has_a_case() {
    assert_eq!(op_cases().len(), 21);
}

#[test]
fn matmul() {
    assert_ops(&["matmul", "matmul_t"]);
}

#[test]
fn elementwise_binary() {
    assert_ops(&["add", "sub", "mul", "add_row"]);
}

#[test]
fn scalar_ops() {
    assert_ops(&["scale", "add_scalar", "mul_const"]);
}

#[test]
fn activations() {
    assert_ops(&["relu", "sigmoid"]);
}

#[test]
fn masked_softmax_with_and_without_mask() {
    assert_ops(&["softmax", "group-masked softmax"]);
}

#[test]
fn layer_norm() {
    assert_ops(&["layer_norm"]);
}

#[test]
fn gather_and_column_ops() {
    assert_ops(&["gather", "concat_cols", "slice_cols", "sum"]);
}

#[test]
fn smoothed_nll() {
    assert_ops(&["smoothed_nll", "smoothed_nll eps 0.1"]);
}

#[test]
fn combined_attention_block() {
    assert_ops(&["combined attention"]);
}

fn assert_model(model: &Model, src: &TokenDocument, tgt: &TokenDocument) {
    let (name, err) = model_gradient_error(model, src, tgt);
    assert!(err <= TOL, "{name}: relative error {err:.3e}");
}

fn doc_pair(seed: u64) -> (TokenDocument, TokenDocument) {
    let mut r = rng(seed);
    let src = random_doc(&mut r, 3, 20, 3);
    let tgt = random_doc(&mut r, 3, 20, 3);
    (src, tgt)
}

#[test]
fn full_two_layer_g_transformer() {
    let model = tiny_model(1, Variant::GTransformer);
    assert_eq!(model.config().n_layers, 2);
    let (src, tgt) = doc_pair(2);
    assert_model(&model, &src, &tgt);
}

#[test]
fn full_model_with_padding_and_baseline() {
    let (src, tgt) = doc_pair(3);
    let (src, tgt) = (src.padded(src.len() + 2), tgt.padded(tgt.len() + 3));
    assert_model(&tiny_model(4, Variant::GTransformer), &src, &tgt);
    assert_model(&tiny_model(5, Variant::BaselineTransformer), &src, &tgt);
}
