//! LSTM cell and bidirectional scan assembled from graph primitives.

use super::{Graph, Tensor, TensorError, Var};

/// Gate-stacked LSTM weights, gate order input, forget, candidate, output.
///
/// `input` is `[d_in x 4h]`, `hidden` is `[h x 4h]`, `bias` is `[4h]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub input: Var,
    pub hidden: Var,
    pub bias: Var,
}

impl LstmWeights {
    pub fn hidden_size(&self, g: &Graph) -> usize {
        g.value(self.hidden).shape()[0]
    }

    fn check(&self, g: &Graph, d_in: usize) -> Result<usize, TensorError> {
        let (wi, wh, b) = (g.value(self.input), g.value(self.hidden), g.value(self.bias));
        let h = wh.shape().first().copied().unwrap_or(0);
        let ok = wi.shape() == [d_in, 4 * h] && wh.shape() == [h, 4 * h] && b.shape() == [4 * h];
        if !ok {
            return Err(TensorError::Dimension {
                op: "lstm_cell",
                left: wi.shape().to_vec(),
                right: wh.shape().to_vec(),
            });
        }
        Ok(h)
    }
}

/// One LSTM step: returns `(h, c)`, both `[h]`.
pub fn lstm_cell(g: &mut Graph, x: Var, h_prev: Var, c_prev: Var, w: &LstmWeights) -> Result<(Var, Var), TensorError> {
    let d_in = g.value(x).numel();
    let h = w.check(g, d_in)?;
    let x_row = g.reshape(x, &[1, d_in])?;
    let projected = g.matmul(x_row, w.input)?;
    let projected = g.reshape(projected, &[4 * h])?;
    cell_from_projection(g, projected, h_prev, c_prev, w, h)
}

fn cell_from_projection(
    g: &mut Graph,
    projected: Var,
    h_prev: Var,
    c_prev: Var,
    w: &LstmWeights,
    h: usize,
) -> Result<(Var, Var), TensorError> {
    if g.value(h_prev).shape() != [h] || g.value(c_prev).shape() != [h] {
        return Err(TensorError::Dimension {
            op: "lstm_cell",
            left: g.value(h_prev).shape().to_vec(),
            right: g.value(c_prev).shape().to_vec(),
        });
    }
    let h_row = g.reshape(h_prev, &[1, h])?;
    let recurrent = g.matmul(h_row, w.hidden)?;
    let recurrent = g.reshape(recurrent, &[4 * h])?;
    let z = g.add(projected, recurrent)?;
    let z = g.add(z, w.bias)?;
    let zi = g.slice_rows(z, 0, h)?;
    let zf = g.slice_rows(z, h, h)?;
    let zg = g.slice_rows(z, 2 * h, h)?;
    let zo = g.slice_rows(z, 3 * h, h)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let squashed = g.tanh(c);
    let h_new = g.mul(o, squashed)?;
    Ok((h_new, c))
}

fn scan(g: &mut Graph, projected: Var, steps: &[usize], w: &LstmWeights, h: usize) -> Result<Vec<Var>, TensorError> {
    let mut hs = g.constant(Tensor::zeros(&[h]));
    let mut cs = g.constant(Tensor::zeros(&[h]));
    let mut out = vec![hs; steps.len()];
    for &t in steps {
        let row = g.row(projected, t)?;
        let (hn, cn) = cell_from_projection(g, row, hs, cs, w, h)?;
        out[t] = hn;
        hs = hn;
        cs = cn;
    }
    Ok(out)
}

/// Runs `forward` left to right and `backward` right to left over a
/// `[T x d_in]` sequence, concatenating the two hidden states per step into
/// a `[T x 2h]` result.
pub fn bidirectional_scan(
    g: &mut Graph,
    sequence: Var,
    forward: &LstmWeights,
    backward: &LstmWeights,
) -> Result<Var, TensorError> {
    let shape = g.value(sequence).shape().to_vec();
    if shape.len() != 2 {
        return Err(TensorError::Dimension {
            op: "bidirectional_scan",
            left: shape,
            right: vec![],
        });
    }
    let (steps, d_in) = (shape[0], shape[1]);
    if steps == 0 {
        return Err(TensorError::Degenerate {
            op: "bidirectional_scan",
            reason: "empty sequence".into(),
        });
    }
    let hf = forward.check(g, d_in)?;
    let hb = backward.check(g, d_in)?;
    let pf = g.matmul(sequence, forward.input)?;
    let pb = g.matmul(sequence, backward.input)?;
    let order: Vec<usize> = (0..steps).collect();
    let rev: Vec<usize> = (0..steps).rev().collect();
    let fwd = scan(g, pf, &order, forward, hf)?;
    let bwd = scan(g, pb, &rev, backward, hb)?;
    let mut rows = Vec::with_capacity(steps);
    for t in 0..steps {
        rows.push(g.concat(&[fwd[t], bwd[t]])?);
    }
    g.stack(&rows)
}
