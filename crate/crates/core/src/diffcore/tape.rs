//! Reverse-mode tape over row-major matrices.
//!
//! Every node holds a `rows x cols` buffer. Arithmetic is restricted to eight
//! primitives (affine map, relu, sine, cosine, add, multiply, square, sum,
//! mean); `concat_cols` and `slice_rows` only move data around. Nodes are
//! evaluated eagerly as they are pushed, so the node list is always in
//! topological order.

use std::borrow::Cow;
use std::collections::HashMap;
use std::ops::Range;

use super::DiffError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Contiguous row ranges that select a distinct parameter row per group in
/// [`Tape::affine`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowGroups {
    offsets: Vec<usize>,
}

impl RowGroups {
    /// Builds groups from per-group row counts. Empty groups are allowed.
    pub fn from_counts(counts: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(counts.len() + 1);
        offsets.push(0);
        let mut acc = 0;
        for &c in counts {
            acc += c;
            offsets.push(acc);
        }
        Self { offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_rows(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn range(&self, g: usize) -> Range<usize> {
        self.offsets[g]..self.offsets[g + 1]
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf { trainable: bool },
    Affine { x: Var, params: Var, inputs: usize, outputs: usize, groups: Option<RowGroups> },
    Relu(Var),
    Sin(Var),
    Cos(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    SliceRows(Var, usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::Affine { .. } => "affine",
            Op::Relu(_) => "relu",
            Op::Sin(_) => "sin",
            Op::Cos(_) => "cos",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Square(_) => "square",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Concat(_) => "concat",
            Op::SliceRows(..) => "slice_rows",
        }
    }
}

struct Node<'a> {
    op: Op,
    rows: usize,
    cols: usize,
    value: Cow<'a, [f64]>,
    needs_grad: bool,
}

/// Reverse-mode tape. Leaves may borrow their buffers for the tape lifetime,
/// which lets large parameter vectors enter the graph without copying.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Adjoint of `var`, or `None` when the root does not depend on it.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.adjoints.get(var.0).and_then(|a| a.as_deref())
    }

    /// Moves the adjoint out, substituting zeros of length `len` when absent.
    pub fn take(&mut self, var: Var, len: usize) -> Vec<f64> {
        self.adjoints
            .get_mut(var.0)
            .and_then(Option::take)
            .unwrap_or_else(|| vec![0.0; len])
    }

    /// Returns every remaining adjoint buffer to `pool`.
    pub fn recycle(self, pool: &mut BufferPool) {
        self.adjoints.into_iter().flatten().for_each(|v| pool.put(v));
    }
}

/// Buffers smaller than this are left to the allocator.
const POOLED_MIN_LEN: usize = 4096;

/// Spare `f64` buffers keyed by length. Repeated passes over graphs of the
/// same shape reuse memory that is already mapped instead of faulting in
/// fresh pages on every step.
#[derive(Debug, Default)]
pub struct BufferPool {
    free: HashMap<usize, Vec<Vec<f64>>>,
}

impl BufferPool {
    /// A zero-filled buffer of length `len`.
    pub fn zeros(&mut self, len: usize) -> Vec<f64> {
        match self.free.get_mut(&len).and_then(Vec::pop) {
            Some(mut v) => {
                v.fill(0.0);
                v
            }
            None => vec![0.0; len],
        }
    }

    /// A buffer of length `len` with unspecified contents.
    pub fn reuse(&mut self, len: usize) -> Vec<f64> {
        self.free.get_mut(&len).and_then(Vec::pop).unwrap_or_else(|| vec![0.0; len])
    }

    pub fn put(&mut self, v: Vec<f64>) {
        if v.len() >= POOLED_MIN_LEN {
            self.free.entry(v.len()).or_default().push(v);
        }
    }
}

fn mismatch(node: usize, op: &'static str, detail: String) -> DiffError {
    DiffError::ShapeMismatch { node, op, detail }
}

/// `c (m x n) = a (m x k) * b (k x n) + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    // SAFETY: callers pass slices whose extents cover every strided access
    // implied by (m, k, n) and the strides; the output does not alias inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; its adjoint is produced by [`Tape::backward`].
    pub fn leaf(
        &mut self,
        rows: usize,
        cols: usize,
        data: impl Into<Cow<'a, [f64]>>,
    ) -> Result<Var, DiffError> {
        self.push_leaf(rows, cols, data.into(), true)
    }

    /// Leaf that never receives an adjoint (inputs, targets, frozen weights).
    pub fn constant(
        &mut self,
        rows: usize,
        cols: usize,
        data: impl Into<Cow<'a, [f64]>>,
    ) -> Result<Var, DiffError> {
        self.push_leaf(rows, cols, data.into(), false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.push_leaf(1, 1, Cow::Owned(vec![v]), false).expect("1x1 scalar")
    }

    fn push_leaf(
        &mut self,
        rows: usize,
        cols: usize,
        value: Cow<'a, [f64]>,
        trainable: bool,
    ) -> Result<Var, DiffError> {
        let id = self.nodes.len();
        if value.len() != rows * cols {
            return Err(mismatch(
                id,
                "leaf",
                format!("declared {rows}x{cols}, got {} values", value.len()),
            ));
        }
        self.nodes.push(Node { op: Op::Leaf { trainable }, rows, cols, value, needs_grad: trainable });
        Ok(Var(id))
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, op: Op) -> Result<Var, DiffError> {
        let id = self.nodes.len();
        let (rows, cols, value) = self.compute(id, &op)?;
        let needs_grad = self.inputs_need_grad(&op);
        self.nodes.push(Node { op, rows, cols, value: Cow::Owned(value), needs_grad });
        Ok(Var(id))
    }

    fn inputs_need_grad(&self, op: &Op) -> bool {
        let ng = |v: &Var| self.nodes[v.0].needs_grad;
        match op {
            Op::Leaf { trainable } => *trainable,
            Op::Affine { x, params, .. } => ng(x) || ng(params),
            Op::Relu(a) | Op::Sin(a) | Op::Cos(a) | Op::Square(a) | Op::Sum(a) | Op::Mean(a) => ng(a),
            Op::SliceRows(a, ..) => ng(a),
            Op::Add(a, b) | Op::Mul(a, b) => ng(a) || ng(b),
            Op::Concat(vs) => vs.iter().any(ng),
        }
    }

    /// Affine map `y = x W + b`. Each row of `params` packs a row-major
    /// `inputs x outputs` weight matrix followed by `outputs` biases. Without
    /// groups `params` has one row; with groups, row `g` applies to the rows
    /// of `x` in `groups.range(g)`.
    pub fn affine(
        &mut self,
        x: Var,
        params: Var,
        inputs: usize,
        outputs: usize,
        groups: Option<&RowGroups>,
    ) -> Result<Var, DiffError> {
        self.push(Op::Affine { x, params, inputs, outputs, groups: groups.cloned() })
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, DiffError> {
        self.push(Op::Relu(a))
    }

    pub fn sin(&mut self, a: Var) -> Result<Var, DiffError> {
        self.push(Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Result<Var, DiffError> {
        self.push(Op::Cos(a))
    }

    /// Elementwise sum; `b` may also be a single row or a 1x1 scalar,
    /// broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.push(Op::Add(a, b))
    }

    /// Elementwise product with the same broadcasting rules as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.push(Op::Mul(a, b))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, DiffError> {
        self.push(Op::Square(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, DiffError> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, DiffError> {
        self.push(Op::Mean(a))
    }

    /// Horizontal concatenation of nodes with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        self.push(Op::Concat(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, rows: Range<usize>) -> Result<Var, DiffError> {
        self.push(Op::SliceRows(a, rows.start, rows.end))
    }

    /// Multiplies by a constant scalar.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, DiffError> {
        let s = self.scalar(c);
        self.mul(a, s)
    }

    fn broadcast_kind(
        &self,
        id: usize,
        op: &'static str,
        a: Var,
        b: Var,
    ) -> Result<Broadcast, DiffError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if (ar, ac) == (br, bc) {
            Ok(Broadcast::Same)
        } else if br == 1 && bc == ac {
            Ok(Broadcast::Row)
        } else if br == 1 && bc == 1 {
            Ok(Broadcast::Scalar)
        } else {
            Err(mismatch(id, op, format!("cannot broadcast {br}x{bc} onto {ar}x{ac}")))
        }
    }

    fn compute(&self, id: usize, op: &Op) -> Result<(usize, usize, Vec<f64>), DiffError> {
        let val = |v: &Var| -> &[f64] { &self.nodes[v.0].value };
        let check = |v: &Var| -> Result<(), DiffError> {
            if v.0 >= id {
                Err(mismatch(id, op.name(), format!("input node {} is not earlier on the tape", v.0)))
            } else {
                Ok(())
            }
        };
        match op {
            Op::Leaf { .. } => {
                let n = &self.nodes[id];
                Ok((n.rows, n.cols, n.value.to_vec()))
            }
            Op::Affine { x, params, inputs, outputs, groups } => {
                check(x)?;
                check(params)?;
                let (xr, xc) = self.shape(*x);
                let (pr, pc) = self.shape(*params);
                let (ni, no) = (*inputs, *outputs);
                if xc != ni {
                    return Err(mismatch(id, "affine", format!("input has {xc} columns, map expects {ni}")));
                }
                if pc != ni * no + no {
                    return Err(mismatch(
                        id,
                        "affine",
                        format!("parameter rows hold {pc} values, {ni}x{no} map needs {}", ni * no + no),
                    ));
                }
                let expected_rows = groups.as_ref().map_or(1, RowGroups::len);
                if pr != expected_rows {
                    return Err(mismatch(id, "affine", format!("{pr} parameter rows for {expected_rows} groups")));
                }
                if let Some(g) = groups {
                    if g.total_rows() != xr {
                        return Err(mismatch(
                            id,
                            "affine",
                            format!("groups cover {} rows, input has {xr}", g.total_rows()),
                        ));
                    }
                }
                let xv = val(x);
                let pv = val(params);
                let mut out = vec![0.0; xr * no];
                let mut apply = |rows: Range<usize>, prow: &[f64]| {
                    let (w, b) = prow.split_at(ni * no);
                    for r in rows.clone() {
                        out[r * no..(r + 1) * no].copy_from_slice(b);
                    }
                    let m = rows.len();
                    gemm(
                        m,
                        ni,
                        no,
                        &xv[rows.start * ni..],
                        ni as isize,
                        1,
                        w,
                        no as isize,
                        1,
                        1.0,
                        &mut out[rows.start * no..],
                        no as isize,
                        1,
                    );
                };
                match groups {
                    None => apply(0..xr, pv),
                    Some(g) => {
                        for gi in 0..g.len() {
                            apply(g.range(gi), &pv[gi * pc..(gi + 1) * pc]);
                        }
                    }
                }
                Ok((xr, no, out))
            }
            Op::Relu(a) | Op::Sin(a) | Op::Cos(a) | Op::Square(a) => {
                check(a)?;
                let (r, c) = self.shape(*a);
                let f: fn(f64) -> f64 = match op {
                    Op::Relu(_) => |v| if v > 0.0 { v } else { 0.0 },
                    Op::Sin(_) => f64::sin,
                    Op::Cos(_) => f64::cos,
                    _ => |v| v * v,
                };
                Ok((r, c, val(a).iter().map(|&v| f(v)).collect()))
            }
            Op::Add(a, b) | Op::Mul(a, b) => {
                check(a)?;
                check(b)?;
                let kind = self.broadcast_kind(id, op.name(), *a, *b)?;
                let (r, c) = self.shape(*a);
                let (av, bv) = (val(a), val(b));
                let f: fn(f64, f64) -> f64 = if matches!(op, Op::Add(..)) { |x, y| x + y } else { |x, y| x * y };
                let out = match kind {
                    Broadcast::Same => av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect(),
                    Broadcast::Row => av.iter().enumerate().map(|(i, &x)| f(x, bv[i % c])).collect(),
                    Broadcast::Scalar => av.iter().map(|&x| f(x, bv[0])).collect(),
                };
                Ok((r, c, out))
            }
            Op::Sum(a) | Op::Mean(a) => {
                check(a)?;
                let v = val(a);
                let s: f64 = v.iter().sum();
                let out = if matches!(op, Op::Mean(_)) {
                    if v.is_empty() {
                        return Err(mismatch(id, "mean", "mean of an empty node".into()));
                    }
                    s / v.len() as f64
                } else {
                    s
                };
                Ok((1, 1, vec![out]))
            }
            Op::Concat(parts) => {
                if parts.is_empty() {
                    return Err(mismatch(id, "concat", "no inputs".into()));
                }
                for p in parts {
                    check(p)?;
                }
                let rows = self.shape(parts[0]).0;
                if let Some(p) = parts.iter().find(|p| self.shape(**p).0 != rows) {
                    return Err(mismatch(
                        id,
                        "concat",
                        format!("node {} has {} rows, expected {rows}", p.0, self.shape(*p).0),
                    ));
                }
                let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
                let mut out = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for p in parts {
                        let pc = self.shape(*p).1;
                        out.extend_from_slice(&val(p)[r * pc..(r + 1) * pc]);
                    }
                }
                Ok((rows, cols, out))
            }
            Op::SliceRows(a, start, end) => {
                check(a)?;
                let (r, c) = self.shape(*a);
                if start > end || *end > r {
                    return Err(mismatch(id, "slice_rows", format!("rows {start}..{end} out of 0..{r}")));
                }
                Ok((end - start, c, val(a)[start * c..end * c].to_vec()))
            }
        }
    }

    /// Replaces a leaf's values ahead of [`Tape::forward`].
    pub fn set_leaf(&mut self, v: Var, data: Vec<f64>) -> Result<(), DiffError> {
        let node = self.nodes.get_mut(v.0).ok_or(DiffError::UnknownNode(v.0))?;
        if !matches!(node.op, Op::Leaf { .. }) {
            return Err(mismatch(v.0, node.op.name(), "only leaves can be assigned".into()));
        }
        if data.len() != node.rows * node.cols {
            return Err(mismatch(
                v.0,
                "leaf",
                format!("declared {}x{}, got {} values", node.rows, node.cols, data.len()),
            ));
        }
        node.value = Cow::Owned(data);
        Ok(())
    }

    /// Re-evaluates every non-leaf node from the current leaf values.
    pub fn forward(&mut self) -> Result<(), DiffError> {
        for id in 0..self.nodes.len() {
            if matches!(self.nodes[id].op, Op::Leaf { .. }) {
                continue;
            }
            let op = self.nodes[id].op.clone();
            let (rows, cols, value) = self.compute(id, &op)?;
            let node = &mut self.nodes[id];
            node.rows = rows;
            node.cols = cols;
            node.value = Cow::Owned(value);
        }
        Ok(())
    }

    /// Reverse sweep from a scalar `root`. Adjoints are produced only for
    /// nodes that depend on a trainable leaf.
    pub fn backward(&self, root: Var) -> Result<Gradients, DiffError> {
        self.backward_pooled(root, &mut BufferPool::default())
    }

    /// [`Tape::backward`] drawing adjoint storage from `pool`.
    pub fn backward_pooled(&self, root: Var, pool: &mut BufferPool) -> Result<Gradients, DiffError> {
        let (rr, rc) = self.shape(root);
        if rr * rc != 1 {
            return Err(DiffError::NonScalarRoot { node: root.0, rows: rr, cols: rc });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = adj[id].take() else { continue };
            self.propagate(id, &dy, &mut adj, pool);
            adj[id] = Some(dy);
        }
        Ok(Gradients { adjoints: adj })
    }

    fn propagate(&self, id: usize, dy: &[f64], adj: &mut [Option<Vec<f64>>], pool: &mut BufferPool) {
        let node = &self.nodes[id];
        let val = |v: &Var| -> &[f64] { &self.nodes[v.0].value };
        let ng = |v: &Var| self.nodes[v.0].needs_grad;
        let len = |v: &Var| self.nodes[v.0].value.len();

        fn slot<'s>(adj: &'s mut [Option<Vec<f64>>], pool: &mut BufferPool, v: Var, len: usize) -> &'s mut Vec<f64> {
            adj[v.0].get_or_insert_with(|| pool.zeros(len))
        }

        match &node.op {
            Op::Leaf { .. } => {}
            Op::Affine { x, params, inputs, outputs, groups } => {
                let (ni, no) = (*inputs, *outputs);
                let xr = self.shape(*x).0;
                let pc = ni * no + no;
                let xv = val(x);
                let pv = val(params);
                let ranges: Vec<Range<usize>> = match groups {
                    None => vec![0..xr],
                    Some(g) => (0..g.len()).map(|i| g.range(i)).collect(),
                };
                if ng(x) {
                    let dx = slot(adj, pool, *x, len(x));
                    for (gi, rows) in ranges.iter().enumerate() {
                        let w = &pv[gi * pc..gi * pc + ni * no];
                        // dx += dy * W^T
                        gemm(
                            rows.len(),
                            no,
                            ni,
                            &dy[rows.start * no..],
                            no as isize,
                            1,
                            w,
                            1,
                            no as isize,
                            1.0,
                            &mut dx[rows.start * ni..],
                            ni as isize,
                            1,
                        );
                    }
                }
                if ng(params) {
                    // a fresh buffer is overwritten, so its stale contents never matter
                    let fresh = adj[params.0].is_none();
                    let dp = adj[params.0].get_or_insert_with(|| pool.reuse(len(params)));
                    let beta = if fresh { 0.0 } else { 1.0 };
                    for (gi, rows) in ranges.iter().enumerate() {
                        let block = &mut dp[gi * pc..(gi + 1) * pc];
                        if rows.is_empty() {
                            if fresh {
                                block.fill(0.0);
                            }
                            continue;
                        }
                        let (dw, db) = block.split_at_mut(ni * no);
                        // dW = x^T * dy (+ dW)
                        gemm(
                            ni,
                            rows.len(),
                            no,
                            &xv[rows.start * ni..],
                            1,
                            ni as isize,
                            &dy[rows.start * no..],
                            no as isize,
                            1,
                            beta,
                            dw,
                            no as isize,
                            1,
                        );
                        if fresh {
                            db.fill(0.0);
                        }
                        for r in rows.clone() {
                            for (d, &g) in db.iter_mut().zip(&dy[r * no..(r + 1) * no]) {
                                *d += g;
                            }
                        }
                    }
                }
            }
            Op::Relu(a) => {
                let av = val(a);
                let da = slot(adj, pool, *a, av.len());
                for ((d, &x), &g) in da.iter_mut().zip(av).zip(dy) {
                    *d += if x > 0.0 { g } else { 0.0 };
                }
            }
            Op::Sin(a) => {
                let av = val(a);
                let da = slot(adj, pool, *a, av.len());
                for ((d, &x), &g) in da.iter_mut().zip(av).zip(dy) {
                    *d += g * x.cos();
                }
            }
            Op::Cos(a) => {
                let av = val(a);
                let da = slot(adj, pool, *a, av.len());
                for ((d, &x), &g) in da.iter_mut().zip(av).zip(dy) {
                    *d -= g * x.sin();
                }
            }
            Op::Square(a) => {
                let av = val(a);
                let da = slot(adj, pool, *a, av.len());
                for ((d, &x), &g) in da.iter_mut().zip(av).zip(dy) {
                    *d += 2.0 * x * g;
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                let n = len(a);
                let g = if matches!(node.op, Op::Mean(_)) { dy[0] / n as f64 } else { dy[0] };
                for d in slot(adj, pool, *a, n).iter_mut() {
                    *d += g;
                }
            }
            Op::Add(a, b) | Op::Mul(a, b) => {
                let is_mul = matches!(node.op, Op::Mul(..));
                let c = node.cols;
                let kind = self.broadcast_kind(id, "", *a, *b).expect("validated in forward");
                let (av, bv) = (val(a), val(b));
                let bat = |i: usize| match kind {
                    Broadcast::Same => bv[i],
                    Broadcast::Row => bv[i % c],
                    Broadcast::Scalar => bv[0],
                };
                if ng(a) {
                    let da = slot(adj, pool, *a, av.len());
                    if is_mul {
                        for (i, (d, &g)) in da.iter_mut().zip(dy).enumerate() {
                            *d += g * bat(i);
                        }
                    } else {
                        for (d, &g) in da.iter_mut().zip(dy) {
                            *d += g;
                        }
                    }
                }
                if ng(b) {
                    let db = slot(adj, pool, *b, bv.len());
                    for (i, &g) in dy.iter().enumerate() {
                        let contrib = if is_mul { g * av[i] } else { g };
                        let j = match kind {
                            Broadcast::Same => i,
                            Broadcast::Row => i % c,
                            Broadcast::Scalar => 0,
                        };
                        db[j] += contrib;
                    }
                }
            }
            Op::Concat(parts) => {
                let rows = node.rows;
                let total = node.cols;
                let mut offset = 0;
                for p in parts {
                    let pc = self.shape(*p).1;
                    if ng(p) {
                        let dp = slot(adj, pool, *p, rows * pc);
                        for r in 0..rows {
                            for (d, &g) in dp[r * pc..(r + 1) * pc]
                                .iter_mut()
                                .zip(&dy[r * total + offset..r * total + offset + pc])
                            {
                                *d += g;
                            }
                        }
                    }
                    offset += pc;
                }
            }
            Op::SliceRows(a, start, _) => {
                let c = node.cols;
                let da = slot(adj, pool, *a, len(a));
                for (d, &g) in da[start * c..].iter_mut().zip(dy) {
                    *d += g;
                }
            }
        }
    }

    /// Name of the operation recorded at `v`; used in diagnostics.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }
}

#[derive(Clone, Copy, Debug)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_of_negative_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(1, 1, vec![-1.0]).unwrap();
        let y = t.relu(x).unwrap();
        assert_eq!(t.value(y), &[0.0]);
    }

    #[test]
    fn affine_scalar_map() {
        let mut t = Tape::new();
        let x = t.constant(1, 1, vec![3.0]).unwrap();
        let p = t.leaf(1, 2, vec![2.0, 1.0]).unwrap();
        let y = t.affine(x, p, 1, 1, None).unwrap();
        assert_eq!(t.value(y), &[7.0]);
    }

    #[test]
    fn sine_of_zero() {
        let mut t = Tape::new();
        let x = t.leaf(1, 1, vec![0.0]).unwrap();
        let y = t.sin(x).unwrap();
        assert_eq!(t.value(y), &[0.0]);
    }

    #[test]
    fn derivative_of_square_at_three() {
        let mut t = Tape::new();
        let x = t.leaf(1, 1, vec![3.0]).unwrap();
        let y = t.square(x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap(), &[6.0]);
        assert_eq!(g.get(y).unwrap(), &[1.0]);
    }

    #[test]
    fn derivative_of_relu_at_two() {
        let mut t = Tape::new();
        let x = t.leaf(1, 1, vec![2.0]).unwrap();
        let y = t.relu(x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0]);
    }

    #[test]
    fn derivative_of_sin_2x_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(1, 1, vec![0.0]).unwrap();
        let two_x = t.scale(x, 2.0).unwrap();
        let y = t.sin(two_x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap(), &[2.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(1, 2, vec![1.0, 2.0]).unwrap();
        let y = t.square(x).unwrap();
        assert!(matches!(t.backward(y), Err(DiffError::NonScalarRoot { .. })));
    }

    #[test]
    fn shape_mismatch_names_node() {
        let mut t = Tape::new();
        let a = t.leaf(2, 2, vec![0.0; 4]).unwrap();
        let b = t.leaf(3, 1, vec![0.0; 3]).unwrap();
        match t.add(a, b) {
            Err(DiffError::ShapeMismatch { node, op, .. }) => {
                assert_eq!(node, 2);
                assert_eq!(op, "add");
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
        assert!(t.leaf(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn forward_recomputes_after_leaf_change() {
        let mut t = Tape::new();
        let x = t.leaf(1, 1, vec![1.0]).unwrap();
        let y = t.square(x).unwrap();
        t.set_leaf(x, vec![4.0]).unwrap();
        t.forward().unwrap();
        assert_eq!(t.value(y), &[16.0]);
        assert!(t.set_leaf(x, vec![1.0, 2.0]).is_err());
        assert!(t.set_leaf(y, vec![1.0]).is_err());
    }

    #[test]
    fn backward_leaves_values_untouched() {
        let mut t = Tape::new();
        let x = t.leaf(1, 3, vec![0.5, -0.2, 1.5]).unwrap();
        let s = t.sin(x).unwrap();
        let q = t.square(s).unwrap();
        let m = t.mean(q).unwrap();
        let before: Vec<Vec<f64>> = [x, s, q, m].iter().map(|v| t.value(*v).to_vec()).collect();
        t.backward(m).unwrap();
        let after: Vec<Vec<f64>> = [x, s, q, m].iter().map(|v| t.value(*v).to_vec()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn grouped_affine_uses_per_group_rows() {
        let mut t = Tape::new();
        // two groups of one row each; 1 -> 1 maps y = 2x + 1 and y = -x
        let x = t.constant(2, 1, vec![3.0, 3.0]).unwrap();
        let p = t.leaf(2, 2, vec![2.0, 1.0, -1.0, 0.0]).unwrap();
        let groups = RowGroups::from_counts(&[1, 1]);
        let y = t.affine(x, p, 1, 1, Some(&groups)).unwrap();
        assert_eq!(t.value(y), &[7.0, -3.0]);
    }

    #[test]
    fn slice_and_concat_route_gradients() {
        let mut t = Tape::new();
        let a = t.leaf(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let b = t.leaf(3, 1, vec![4.0, 5.0, 6.0]).unwrap();
        let c = t.concat_cols(&[a, b]).unwrap();
        assert_eq!(t.value(c), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let s = t.slice_rows(c, 1..3).unwrap();
        let q = t.square(s).unwrap();
        let root = t.sum(q).unwrap();
        let g = t.backward(root).unwrap();
        assert_eq!(g.get(a).unwrap(), &[0.0, 4.0, 6.0]);
        assert_eq!(g.get(b).unwrap(), &[0.0, 10.0, 12.0]);
    }

    #[test]
    fn pooled_backward_matches_fresh_with_dirty_pool() {
        let build = |t: &mut Tape<'_>| {
            let x = t.constant(5, 3, (0..15).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>()).unwrap();
            let p = t.leaf(3, 3 * 2 + 2, (0..24).map(|i| (i as f64 * 0.11).cos()).collect::<Vec<_>>()).unwrap();
            // middle group is empty
            let g = RowGroups::from_counts(&[2, 0, 3]);
            let y = t.affine(x, p, 3, 2, Some(&g)).unwrap();
            let y = t.relu(y).unwrap();
            let y = t.square(y).unwrap();
            (p, t.sum(y).unwrap())
        };
        let mut t = Tape::new();
        let (p, root) = build(&mut t);
        let fresh = t.backward(root).unwrap().get(p).unwrap().to_vec();

        let mut pool = BufferPool::default();
        pool.put(vec![f64::NAN; 24]);
        pool.put(vec![7.0; 24]);
        let pooled = t.backward_pooled(root, &mut pool).unwrap();
        assert_eq!(pooled.get(p).unwrap(), fresh.as_slice());
        assert!(fresh[8..16].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pool_hands_back_zeroed_buffers_of_the_right_length() {
        let mut pool = BufferPool::default();
        pool.put(vec![3.0; 5000]);
        assert_eq!(pool.zeros(5000), vec![0.0; 5000]);
        assert_eq!(pool.zeros(4999).len(), 4999);
    }
}
