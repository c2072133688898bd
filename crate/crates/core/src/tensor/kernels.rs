//! Dense kernels and broadcast index maps used by the graph ops.

use crate::error::{Error, Result};

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row stride / column stride pair describing a 2-D view over a flat buffer.
#[derive(Clone, Copy)]
pub(crate) struct View {
    pub rs: isize,
    pub cs: isize,
}

impl View {
    pub fn row_major(cols: usize) -> Self {
        View {
            rs: cols as isize,
            cs: 1,
        }
    }

    /// The transpose of a row-major `[rows, cols]` matrix.
    pub fn transposed(cols: usize) -> Self {
        View {
            rs: 1,
            cs: cols as isize,
        }
    }
}

/// `c (+)= a[m,k] · b[k,n]`; `c` is row-major `[m, n]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    av: View,
    b: &[f64],
    bv: View,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|x| *x = 0.0);
        }
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the views address at most m*k, k*n and m*n elements, all of
    // which lie inside the checked slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            av.rs,
            av.cs,
            b.as_ptr(),
            bv.rs,
            bv.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// How one operand of a broadcasting binary op maps onto the output.
#[derive(Clone, Debug)]
pub(crate) enum Bcast {
    /// Operand has the output's shape.
    Same,
    /// Operand's shape is a trailing suffix of the output's: index `i % len`.
    Cycle(usize),
    /// General case: explicit operand index for every output element.
    Map(Vec<usize>),
}

impl Bcast {
    #[inline]
    pub fn index(&self, i: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Cycle(len) => i % len,
            Bcast::Map(map) => map[i],
        }
    }
}

pub(crate) fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(Error::shape(op, a, b)),
        };
    }
    Ok(out)
}

pub(crate) fn broadcast_map(operand: &[usize], out: &[usize]) -> Bcast {
    if operand == out {
        return Bcast::Same;
    }
    // strip leading unit dims, then check for a trailing-suffix match
    let lead = operand.iter().take_while(|&&d| d == 1).count();
    let core = &operand[lead..];
    if core.len() <= out.len() && out[out.len() - core.len()..] == *core {
        return Bcast::Cycle(numel(core).max(1));
    }
    let rank = out.len();
    let offset = rank - operand.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..operand.len()).rev() {
        strides[i + offset] = if operand[i] == 1 { 0 } else { acc };
        acc *= operand[i];
    }
    let total = numel(out);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut pos = 0usize;
    for _ in 0..total {
        map.push(pos);
        for d in (0..rank).rev() {
            idx[d] += 1;
            pos += strides[d];
            if idx[d] < out[d] {
                break;
            }
            pos -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    Bcast::Map(map)
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

/// Consecutive sub-batch ranges of `ghost` rows; a trailing single row joins
/// the previous sub-batch.
pub fn ghost_groups(batch: usize, ghost: usize) -> Vec<(usize, usize)> {
    let ghost = ghost.max(1);
    let mut groups = Vec::new();
    let mut start = 0;
    while start < batch {
        let end = (start + ghost).min(batch);
        groups.push((start, end));
        start = end;
    }
    if groups.len() > 1 {
        let (s, e) = groups[groups.len() - 1];
        if e - s == 1 {
            groups.pop();
            let last = groups.len() - 1;
            groups[last].1 = e;
        }
    }
    groups
}
