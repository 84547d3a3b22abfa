//! Gradient-check cases for every differentiable op.

use gtransformer::attention::{diff, group_mask, key_padding_mask, DEFAULT_GAMMA};
use gtransformer::nnet::{Graph, Tensor, Var};
use gtransformer::tagging::GroupTagSeq;

use super::{gradient_check, rng};

type OpFn = Box<dyn Fn(&mut Graph, &[Var]) -> Var>;

pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub f: OpFn,
}

impl OpCase {
    fn new(name: &'static str, inputs: Vec<Tensor>, f: impl Fn(&mut Graph, &[Var]) -> Var + 'static) -> Self {
        OpCase {
            name,
            inputs,
            f: Box::new(f),
        }
    }

    pub fn error(&self) -> f64 {
        gradient_check(&self.inputs, &self.f)
    }
}

fn t(r: usize, c: usize, seed: u64) -> Tensor {
    Tensor::uniform(r, c, 1.0, &mut rng(seed))
}

/// Values bounded away from zero so ReLU kinks are not probed.
fn off_kink(r: usize, c: usize, seed: u64) -> Tensor {
    t(r, c, seed).map(|v| if v.abs() < 0.1 { v + 0.3 } else { v })
}

pub fn op_cases() -> Vec<OpCase> {
    let pair = || vec![t(3, 4, 1), t(3, 4, 2)];
    let scores = t(4, 6, 1).map(|v| 3.0 * v);
    let mask = group_mask(
        &GroupTagSeq::new(vec![1, 2, 2, 1]),
        &GroupTagSeq::new(vec![1, 1, 2, 2, 2, 0]),
        DEFAULT_GAMMA,
    );
    let c = t(3, 4, 5);
    let targets = [Some(2), None, Some(0), Some(4)];
    vec![
        OpCase::new("matmul", vec![t(3, 4, 1), t(4, 5, 2)], |g, v| g.matmul(v[0], v[1])),
        OpCase::new("matmul_t", vec![t(3, 4, 1), t(5, 4, 2)], |g, v| g.matmul_t(v[0], v[1])),
        OpCase::new("add", pair(), |g, v| g.add(v[0], v[1])),
        OpCase::new("sub", pair(), |g, v| g.sub(v[0], v[1])),
        OpCase::new("mul", pair(), |g, v| g.mul(v[0], v[1])),
        OpCase::new("add_row", vec![t(3, 4, 1), t(1, 4, 2)], |g, v| g.add_row(v[0], v[1])),
        OpCase::new("scale", vec![t(3, 4, 1)], |g, v| g.scale(v[0], -2.5)),
        OpCase::new("add_scalar", vec![t(3, 4, 1)], |g, v| {
            let s = g.add_scalar(v[0], 0.7);
            g.mul(s, s)
        }),
        OpCase::new("mul_const", vec![t(3, 4, 1)], move |g, v| g.mul_const(v[0], c.clone())),
        OpCase::new("relu", vec![off_kink(4, 5, 1)], |g, v| g.relu(v[0])),
        OpCase::new("sigmoid", vec![t(4, 5, 1)], |g, v| g.sigmoid(v[0])),
        OpCase::new("softmax", vec![scores.clone()], |g, v| g.masked_softmax(v[0], None, DEFAULT_GAMMA)),
        OpCase::new("group-masked softmax", vec![scores], move |g, v| {
            g.masked_softmax(v[0], Some(&mask), DEFAULT_GAMMA)
        }),
        OpCase::new("layer_norm", vec![t(3, 6, 1), t(1, 6, 2), t(1, 6, 3)], |g, v| {
            g.layer_norm(v[0], v[1], v[2])
        }),
        OpCase::new("gather", vec![t(5, 3, 1)], |g, v| g.gather(v[0], &[4, 0, 4, 2])),
        OpCase::new("concat_cols", vec![t(3, 2, 1), t(3, 4, 2), t(3, 1, 3)], |g, v| {
            g.concat_cols(&[v[0], v[1], v[2]])
        }),
        OpCase::new("slice_cols", vec![t(3, 6, 1)], |g, v| g.slice_cols(v[0], 2, 3)),
        OpCase::new("sum", vec![t(3, 4, 1)], |g, v| g.sum(v[0])),
        OpCase::new("smoothed_nll", vec![t(4, 5, 1)], move |g, v| g.smoothed_nll(v[0], &targets, 0.0)),
        OpCase::new("smoothed_nll eps 0.1", vec![t(4, 5, 1)], move |g, v| {
            g.smoothed_nll(v[0], &targets, 0.1)
        }),
        combined_attention_case(),
    ]
}

fn combined_attention_case() -> OpCase {
    let (d, heads) = (8, 2);
    let tags = GroupTagSeq::new(vec![1, 1, 1, 2, 2, 0]);
    let masks = diff::SiteMasks {
        group: group_mask(&tags, &tags, DEFAULT_GAMMA),
        global: key_padding_mask(&tags, &tags, DEFAULT_GAMMA),
    };
    let mut ins = vec![t(6, d, 1)];
    ins.extend((0..8).map(|i| t(d, d, 10 + i).map(|v| v * 0.5)));
    ins.push(t(2 * d, d, 30).map(|v| v * 0.5));
    ins.push(t(1, d, 31));
    OpCase::new("combined attention", ins, move |g, v| {
        let hv = |o: usize| diff::HeadVars {
            wq: v[o],
            wk: v[o + 1],
            wv: v[o + 2],
            wo: v[o + 3],
            n_heads: heads,
        };
        let gate = diff::GateVars { w: v[9], b: v[10] };
        diff::combined_attention(g, v[0], v[0], v[0], &masks, &hv(1), &hv(5), &gate, DEFAULT_GAMMA).output
    })
}
