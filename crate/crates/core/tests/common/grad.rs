use super::{max_grad_error, project, random_frames, random_tensor, random_tokens, rel_err, rng, tiny_config, tiny_vocab, FD_STEP};
use rand::Rng;
use speechgrade::model::{attention_pool, ModelInput, ModelKind, ScoringModel};
use speechgrade::tensor::{bidirectional_scan, lstm_cell, Graph, LstmWeights, Tensor, Var};
use speechgrade::text::EmbeddingTable;

pub type OpCheck = fn(u64) -> f64;

fn lstm_inputs(d_in: usize, h: usize, r: &mut rand_chacha::ChaCha8Rng) -> Vec<Tensor> {
    vec![
        random_tensor(&[d_in, 4 * h], r),
        random_tensor(&[h, 4 * h], r),
        random_tensor(&[4 * h], r),
    ]
}

fn weights(v: &[Var]) -> LstmWeights {
    LstmWeights {
        input: v[0],
        hidden: v[1],
        bias: v[2],
    }
}

/// Every differentiable graph operation, each reduced to a scalar through
/// a fixed projection. The argument seeds the random instance.
pub fn op_checks() -> Vec<(&'static str, OpCheck)> {
    vec![
        ("matmul", |s| {
            let mut r = rng(s);
            let (m, k, n) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..5));
            let inputs = [random_tensor(&[m, k], &mut r), random_tensor(&[k, n], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.matmul(v[0], v[1]).unwrap();
                project(g, p)
            })
        }),
        ("add", |s| {
            let mut r = rng(s);
            let inputs = [random_tensor(&[3, 2], &mut r), random_tensor(&[3, 2], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.add(v[0], v[1]).unwrap();
                project(g, p)
            })
        }),
        ("sub", |s| {
            let mut r = rng(s);
            let inputs = [random_tensor(&[4], &mut r), random_tensor(&[4], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.sub(v[0], v[1]).unwrap();
                project(g, p)
            })
        }),
        ("mul", |s| {
            let mut r = rng(s);
            let inputs = [random_tensor(&[2, 3], &mut r), random_tensor(&[2, 3], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.mul(v[0], v[1]).unwrap();
                project(g, p)
            })
        }),
        ("scale", |s| {
            let mut r = rng(s);
            let factor = r.gen_range(-3.0..3.0);
            let inputs = [random_tensor(&[5], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.scale(v[0], factor);
                project(g, p)
            })
        }),
        ("sigmoid", |s| {
            let mut r = rng(s);
            let inputs = [random_tensor(&[6], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.sigmoid(v[0]);
                project(g, p)
            })
        }),
        ("tanh", |s| {
            let mut r = rng(s);
            let inputs = [random_tensor(&[6], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.tanh(v[0]);
                project(g, p)
            })
        }),
        ("relu", |s| {
            let mut r = rng(s);
            let inputs = [random_tensor(&[8], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.relu(v[0]);
                project(g, p)
            })
        }),
        ("reshape", |s| {
            let mut r = rng(s);
            let inputs = [random_tensor(&[2, 6], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.reshape(v[0], &[3, 4]).unwrap();
                project(g, p)
            })
        }),
        ("concat", |s| {
            let mut r = rng(s);
            let (a, b) = (r.gen_range(1..4), r.gen_range(1..4));
            let inputs = [random_tensor(&[a, 3], &mut r), random_tensor(&[b, 3], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.concat(v).unwrap();
                project(g, p)
            })
        }),
        ("stack", |s| {
            let mut r = rng(s);
            let inputs = [random_tensor(&[4], &mut r), random_tensor(&[4], &mut r), random_tensor(&[4], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.stack(v).unwrap();
                project(g, p)
            })
        }),
        ("slice_rows", |s| {
            let mut r = rng(s);
            let start = r.gen_range(0..3);
            let inputs = [random_tensor(&[5, 2], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.slice_rows(v[0], start, 2).unwrap();
                project(g, p)
            })
        }),
        ("row", |s| {
            let mut r = rng(s);
            let i = r.gen_range(0..4);
            let inputs = [random_tensor(&[4, 3], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.row(v[0], i).unwrap();
                project(g, p)
            })
        }),
        ("gather_rows", |s| {
            let mut r = rng(s);
            let ids: Vec<usize> = (0..5).map(|_| r.gen_range(0..4)).collect();
            let inputs = [random_tensor(&[4, 3], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.gather_rows(v[0], &ids).unwrap();
                project(g, p)
            })
        }),
        ("conv1d", |s| {
            let mut r = rng(s);
            let (cin, cout, width) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..4));
            let steps = r.gen_range(width..width + 5);
            let padding = r.gen_range(0..=(width - 1) / 2);
            let inputs = [
                random_tensor(&[cin, steps], &mut r),
                random_tensor(&[cout, cin, width], &mut r),
                random_tensor(&[cout], &mut r),
            ];
            max_grad_error(&inputs, |g, v| {
                let p = g.conv1d(v[0], v[1], v[2], padding).unwrap();
                project(g, p)
            })
        }),
        ("maxpool1d", |s| {
            let mut r = rng(s);
            let window = r.gen_range(1..4);
            let steps = r.gen_range(window..3 * window + 2);
            let inputs = [random_tensor(&[2, steps], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.maxpool1d(v[0], window).unwrap();
                project(g, p)
            })
        }),
        ("global_maxpool", |s| {
            let mut r = rng(s);
            let steps = r.gen_range(1..6);
            let inputs = [random_tensor(&[3, steps], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.global_maxpool(v[0]).unwrap();
                project(g, p)
            })
        }),
        ("softmax", |s| {
            let mut r = rng(s);
            let n = r.gen_range(1..7);
            let inputs = [random_tensor(&[n], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let p = g.softmax(v[0]).unwrap();
                project(g, p)
            })
        }),
        ("dropout", |s| {
            let mut r = rng(s);
            let inputs = [random_tensor(&[10], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let mut mask_rng = rng(s ^ 0xd0);
                let p = g.dropout(v[0], 0.4, true, &mut mask_rng).unwrap();
                project(g, p)
            })
        }),
        ("sum", |s| {
            let mut r = rng(s);
            let inputs = [random_tensor(&[2, 3], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let x = g.mul(v[0], v[0]).unwrap();
                g.sum(x)
            })
        }),
        ("mean", |s| {
            let mut r = rng(s);
            let inputs = [random_tensor(&[7], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let x = g.tanh(v[0]);
                g.mean(x)
            })
        }),
        ("dot", |s| {
            let mut r = rng(s);
            let inputs = [random_tensor(&[5], &mut r), random_tensor(&[5], &mut r)];
            max_grad_error(&inputs, |g, v| g.dot(v[0], v[1]).unwrap())
        }),
        ("lstm_cell", |s| {
            let mut r = rng(s);
            let (d_in, h) = (r.gen_range(1..4), r.gen_range(1..4));
            let mut inputs = vec![
                random_tensor(&[d_in], &mut r),
                random_tensor(&[h], &mut r),
                random_tensor(&[h], &mut r),
            ];
            inputs.extend(lstm_inputs(d_in, h, &mut r));
            max_grad_error(&inputs, |g, v| {
                let (h, c) = lstm_cell(g, v[0], v[1], v[2], &weights(&v[3..6])).unwrap();
                let both = g.concat(&[h, c]).unwrap();
                project(g, both)
            })
        }),
        ("bidirectional_scan", |s| {
            let mut r = rng(s);
            let (steps, d_in) = (r.gen_range(1..5), r.gen_range(1..4));
            let mut inputs = vec![random_tensor(&[steps, d_in], &mut r)];
            inputs.extend(lstm_inputs(d_in, 2, &mut r));
            inputs.extend(lstm_inputs(d_in, 2, &mut r));
            max_grad_error(&inputs, |g, v| {
                let out = bidirectional_scan(g, v[0], &weights(&v[1..4]), &weights(&v[4..7])).unwrap();
                project(g, out)
            })
        }),
        ("attention_pool", |s| {
            let mut r = rng(s);
            let (steps, width) = (r.gen_range(1..6), r.gen_range(1..5));
            let inputs = [random_tensor(&[steps, width], &mut r), random_tensor(&[width], &mut r)];
            max_grad_error(&inputs, |g, v| {
                let (context, weights) = attention_pool(g, v[0], v[1]).unwrap();
                let both = g.concat(&[context, weights]).unwrap();
                project(g, both)
            })
        }),
    ]
}

/// Largest relative error over every parameter of a freshly initialized
/// model at the tiny config, differentiating the eval-mode score.
pub fn model_grad_error(kind: ModelKind, seed: u64) -> f64 {
    let mut r = rng(seed);
    let table = kind.uses_text().then(|| EmbeddingTable::random(&tiny_vocab(), 5, &mut r));
    let mut model = ScoringModel::new(kind, tiny_config(), table, &mut r).unwrap();
    let frames = random_frames(r.gen_range(1..4), &mut r);
    let tokens = random_tokens(r.gen_range(1..6), 6, &mut r);
    let input = ModelInput {
        audio: kind.uses_audio().then_some(&frames),
        text: kind.uses_text().then_some(&tokens),
    };
    let mut g = Graph::new();
    let mut no_rng = rng(0);
    let out = model.forward(&mut g, &input, false, &mut no_rng).unwrap();
    g.backward(out.score).unwrap();
    let analytic: Vec<Tensor> = out.bound.params.iter().map(|&p| g.grad(p).unwrap()).collect();
    let base = model.parameter_values();
    let mut worst = 0.0f64;
    for (which, grad) in analytic.iter().enumerate() {
        for e in 0..grad.numel() {
            let mut eval = |delta: f64| {
                let mut values = base.clone();
                values[which].data_mut()[e] += delta;
                model.set_parameter_values(values).unwrap();
                model.predict(&input).unwrap().0
            };
            let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grad.data()[e], numeric));
        }
    }
    worst
}
