use super::Tensor;
use crate::error::{shape_err, Result};

/// Numerically stable softmax over a contiguous slice.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = 1.0 / sum;
    for x in v.iter_mut() {
        *x *= inv;
    }
}

/// Softmax along `axis` of a row-major tensor.
pub fn softmax_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.shape.len() {
        return Err(shape_err!("softmax axis {axis} out of range for {:?}", x.shape));
    }
    let len = x.shape[axis];
    let inner: usize = x.shape[axis + 1..].iter().product();
    let outer: usize = x.shape[..axis].iter().product();
    let mut out = x.clone();
    let mut lane = vec![0.0; len];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            for (k, l) in lane.iter_mut().enumerate() {
                *l = x.data[idx(k)];
            }
            softmax_in_place(&mut lane);
            for (k, l) in lane.iter().enumerate() {
                out.data[idx(k)] = *l;
            }
        }
    }
    Ok(out)
}
