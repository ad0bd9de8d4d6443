//! Reverse-mode gradient tape.
//!
//! Nodes hold flat vectors; matrices are row-major with the row count kept
//! in the op. Parameters are read in place from the [`ParamStore`] and their
//! gradients land in a [`Grads`] buffer on [`Tape::backward`].

use crate::params::{Grads, ParamStore, Pid};
use crate::real::{add_into, axpy, dot, log_sum_exp, sigmoid, softmax, softplus, Real};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op<F> {
    Input,
    /// One row of a parameter matrix (embedding lookup).
    Row {
        p: Pid,
        row: usize,
    },
    /// A whole parameter read as a vector.
    Param {
        p: Pid,
    },
    /// `W x (+ b)` with `W` a parameter.
    Affine {
        w: Pid,
        b: Option<Pid>,
        x: NodeId,
    },
    /// `W` applied to each of the `n` rows of a node matrix.
    RowsAffine {
        w: Pid,
        m: NodeId,
        n: usize,
    },
    Concat(Vec<NodeId>),
    Slice {
        x: NodeId,
        start: usize,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Elementwise product with a constant vector (dropout mask).
    Mask {
        x: NodeId,
        mask: Vec<F>,
    },
    Sigmoid(NodeId),
    Tanh(NodeId),
    /// Fused LSTM cell: gate pre-activations `[i f g o]` and previous cell
    /// state in, `[h c]` out.
    Lstm {
        gates: NodeId,
        c_prev: NodeId,
    },
    /// `s_j = v . tanh(K_j + q)` over the `n` rows of `K`.
    AdditiveScores {
        keys: NodeId,
        n: usize,
        query: NodeId,
        v: Pid,
    },
    /// Node matrix (`n` rows) times node vector.
    MatVec {
        m: NodeId,
        n: usize,
        x: NodeId,
    },
    /// Transposed node matrix (`n` rows) times node vector: `sum_j w_j M_j`.
    MatTVec {
        m: NodeId,
        n: usize,
        w: NodeId,
    },
    Softmax(NodeId),
    /// `-ln P(y)` for the gated mixture of a generation softmax and a copy
    /// softmax over source positions.
    MixtureNll {
        gen: NodeId,
        copy: NodeId,
        gate: NodeId,
        gen_index: Option<usize>,
        copy_pos: Vec<usize>,
    },
    Sum(Vec<NodeId>),
    Scale(NodeId, F),
}

#[derive(Debug, Clone)]
struct Node<F> {
    value: Vec<F>,
    op: Op<F>,
    /// Forward values kept for the backward pass.
    aux: Vec<F>,
}

pub struct Tape<'p, F> {
    params: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
}

impl<'p, F: Real> Tape<'p, F> {
    pub fn new(params: &'p ParamStore<F>) -> Self {
        Tape { params, nodes: Vec::with_capacity(1024) }
    }

    pub fn value(&self, n: NodeId) -> &[F] {
        &self.nodes[n].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<F>, op: Op<F>, aux: Vec<F>) -> NodeId {
        self.nodes.push(Node { value, op, aux });
        self.nodes.len() - 1
    }

    pub fn input(&mut self, value: Vec<F>) -> NodeId {
        self.push(value, Op::Input, Vec::new())
    }

    pub fn zeros(&mut self, n: usize) -> NodeId {
        self.input(vec![F::zero(); n])
    }

    pub fn row(&mut self, p: Pid, row: usize) -> NodeId {
        let v = self.params.row(p, row).to_vec();
        self.push(v, Op::Row { p, row }, Vec::new())
    }

    pub fn param(&mut self, p: Pid) -> NodeId {
        let v = self.params.data[p].clone();
        self.push(v, Op::Param { p }, Vec::new())
    }

    pub fn affine(&mut self, w: Pid, b: Option<Pid>, x: NodeId) -> NodeId {
        let shape = &self.params.shapes[w];
        let (rows, cols) = (shape.rows, shape.cols);
        let xv = &self.nodes[x].value;
        assert_eq!(xv.len(), cols, "affine input width for {}", shape.name);
        let wd = &self.params.data[w];
        let mut out: Vec<F> = (0..rows).map(|r| dot(&wd[r * cols..(r + 1) * cols], xv)).collect();
        if let Some(b) = b {
            add_into(&self.params.data[b], &mut out);
        }
        self.push(out, Op::Affine { w, b, x }, Vec::new())
    }

    pub fn rows_affine(&mut self, w: Pid, m: NodeId, n: usize) -> NodeId {
        let shape = &self.params.shapes[w];
        let (rows, cols) = (shape.rows, shape.cols);
        let mv = &self.nodes[m].value;
        assert_eq!(mv.len(), n * cols);
        let wd = &self.params.data[w];
        let mut out = Vec::with_capacity(n * rows);
        for j in 0..n {
            let x = &mv[j * cols..(j + 1) * cols];
            out.extend((0..rows).map(|r| dot(&wd[r * cols..(r + 1) * cols], x)));
        }
        self.push(out, Op::RowsAffine { w, m, n }, Vec::new())
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = Vec::new();
        for &p in parts {
            v.extend_from_slice(&self.nodes[p].value);
        }
        self.push(v, Op::Concat(parts.to_vec()), Vec::new())
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.nodes[x].value[start..start + len].to_vec();
        self.push(v, Op::Slice { x, start }, Vec::new())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.iter().zip(&self.nodes[b].value).map(|(x, y)| *x + *y).collect();
        self.push(v, Op::Add(a, b), Vec::new())
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.iter().zip(&self.nodes[b].value).map(|(x, y)| *x * *y).collect();
        self.push(v, Op::Mul(a, b), Vec::new())
    }

    pub fn mask(&mut self, x: NodeId, mask: Vec<F>) -> NodeId {
        let v = self.nodes[x].value.iter().zip(&mask).map(|(x, m)| *x * *m).collect();
        self.push(v, Op::Mask { x, mask }, Vec::new())
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x].value.iter().map(|x| sigmoid(*x)).collect();
        self.push(v, Op::Sigmoid(x), Vec::new())
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x].value.iter().map(|x| x.tanh()).collect();
        self.push(v, Op::Tanh(x), Vec::new())
    }

    pub fn lstm(&mut self, gates: NodeId, c_prev: NodeId) -> NodeId {
        let z = &self.nodes[gates].value;
        let cp = &self.nodes[c_prev].value;
        let h = cp.len();
        assert_eq!(z.len(), 4 * h);
        // aux = [i f g o tanh(c)]
        let mut aux = Vec::with_capacity(5 * h);
        aux.extend(z[..h].iter().map(|x| sigmoid(*x)));
        aux.extend(z[h..2 * h].iter().map(|x| sigmoid(*x)));
        aux.extend(z[2 * h..3 * h].iter().map(|x| x.tanh()));
        aux.extend(z[3 * h..].iter().map(|x| sigmoid(*x)));
        let c: Vec<F> = (0..h).map(|k| aux[h + k] * cp[k] + aux[k] * aux[2 * h + k]).collect();
        aux.extend(c.iter().map(|x| x.tanh()));
        let mut out: Vec<F> = (0..h).map(|k| aux[3 * h + k] * aux[4 * h + k]).collect();
        out.extend(c);
        self.push(out, Op::Lstm { gates, c_prev }, aux)
    }

    pub fn additive_scores(&mut self, keys: NodeId, n: usize, query: NodeId, v: Pid) -> NodeId {
        let q = &self.nodes[query].value;
        let a = q.len();
        let kv = &self.nodes[keys].value;
        assert_eq!(kv.len(), n * a);
        let vv = &self.params.data[v];
        let mut aux = Vec::with_capacity(n * a);
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let start = aux.len();
            aux.extend(kv[j * a..(j + 1) * a].iter().zip(q).map(|(k, q)| (*k + *q).tanh()));
            out.push(dot(&aux[start..], vv));
        }
        self.push(out, Op::AdditiveScores { keys, n, query, v }, aux)
    }

    pub fn mat_vec(&mut self, m: NodeId, n: usize, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let d = xv.len();
        let mv = &self.nodes[m].value;
        assert_eq!(mv.len(), n * d);
        let out = (0..n).map(|j| dot(&mv[j * d..(j + 1) * d], xv)).collect();
        self.push(out, Op::MatVec { m, n, x }, Vec::new())
    }

    pub fn mat_t_vec(&mut self, m: NodeId, n: usize, w: NodeId) -> NodeId {
        let wv = &self.nodes[w].value;
        assert_eq!(wv.len(), n);
        let mv = &self.nodes[m].value;
        let d = mv.len() / n;
        let mut out = vec![F::zero(); d];
        for j in 0..n {
            axpy(wv[j], &mv[j * d..(j + 1) * d], &mut out);
        }
        self.push(out, Op::MatTVec { m, n, w }, Vec::new())
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let v = softmax(&self.nodes[x].value);
        self.push(v, Op::Softmax(x), Vec::new())
    }

    /// Negative log-probability of a target under
    /// `P = g * softmax(gen)[gen_index] + (1 - g) * sum_{j in copy_pos} softmax(copy)[j]`
    /// with `g = sigmoid(gate)`, computed in log space.
    pub fn mixture_nll(
        &mut self,
        gen: NodeId,
        copy: NodeId,
        gate: NodeId,
        gen_index: Option<usize>,
        copy_pos: Vec<usize>,
    ) -> NodeId {
        assert!(gen_index.is_some() || !copy_pos.is_empty(), "target has no support");
        let g = self.nodes[gate].value[0];
        let gl = &self.nodes[gen].value;
        let cl = &self.nodes[copy].value;
        let mut terms = Vec::with_capacity(1 + copy_pos.len());
        if let Some(y) = gen_index {
            terms.push(-softplus(-g) + gl[y] - log_sum_exp(gl));
        }
        if !copy_pos.is_empty() {
            let lse = log_sum_exp(cl);
            terms.extend(copy_pos.iter().map(|&j| -softplus(g) + cl[j] - lse));
        }
        let total = log_sum_exp(&terms);
        // aux = responsibilities of each term
        let aux = terms.iter().map(|t| (*t - total).exp()).collect();
        self.push(vec![-total], Op::MixtureNll { gen, copy, gate, gen_index, copy_pos }, aux)
    }

    pub fn sum(&mut self, xs: &[NodeId]) -> NodeId {
        let s = xs.iter().map(|x| self.nodes[*x].value[0]).sum();
        self.push(vec![s], Op::Sum(xs.to_vec()), Vec::new())
    }

    pub fn scale(&mut self, x: NodeId, k: F) -> NodeId {
        let v = self.nodes[x].value.iter().map(|v| *v * k).collect();
        self.push(v, Op::Scale(x, k), Vec::new())
    }

    /// Back-propagates from scalar node `root` and returns parameter
    /// gradients.
    pub fn backward(&self, root: NodeId) -> Grads<F> {
        let mut pg = self.params.zero_grads();
        self.backward_into(root, &mut pg);
        pg
    }

    pub fn backward_into(&self, root: NodeId, pg: &mut Grads<F>) {
        assert_eq!(self.nodes[root].value.len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Vec<F>> = vec![Vec::new(); root + 1];
        grads[root] = vec![F::one()];

        fn acc<F: Real>(grads: &mut [Vec<F>], id: NodeId, len: usize) -> &mut Vec<F> {
            let g = &mut grads[id];
            if g.is_empty() {
                *g = vec![F::zero(); len];
            }
            g
        }

        for id in (0..=root).rev() {
            if grads[id].is_empty() {
                continue;
            }
            let dy = std::mem::take(&mut grads[id]);
            let node = &self.nodes[id];
            let nl = |n: NodeId| self.nodes[n].value.len();
            match &node.op {
                Op::Input => {}
                Op::Row { p, row } => {
                    let c = self.params.shapes[*p].cols;
                    add_into(&dy, &mut pg.data[*p][row * c..(row + 1) * c]);
                }
                Op::Param { p } => add_into(&dy, &mut pg.data[*p]),
                Op::Affine { w, b, x } => {
                    let cols = self.params.shapes[*w].cols;
                    let xv = &self.nodes[*x].value;
                    let wd = &self.params.data[*w];
                    {
                        let gw = &mut pg.data[*w];
                        for (r, d) in dy.iter().enumerate() {
                            if *d != F::zero() {
                                axpy(*d, xv, &mut gw[r * cols..(r + 1) * cols]);
                            }
                        }
                    }
                    if let Some(b) = b {
                        add_into(&dy, &mut pg.data[*b]);
                    }
                    let gx = acc(&mut grads, *x, cols);
                    for (r, d) in dy.iter().enumerate() {
                        if *d != F::zero() {
                            axpy(*d, &wd[r * cols..(r + 1) * cols], gx);
                        }
                    }
                }
                Op::RowsAffine { w, m, n } => {
                    let (rows, cols) = (self.params.shapes[*w].rows, self.params.shapes[*w].cols);
                    let mv = &self.nodes[*m].value;
                    let wd = &self.params.data[*w];
                    {
                        let gw = &mut pg.data[*w];
                        for j in 0..*n {
                            let x = &mv[j * cols..(j + 1) * cols];
                            for r in 0..rows {
                                axpy(dy[j * rows + r], x, &mut gw[r * cols..(r + 1) * cols]);
                            }
                        }
                    }
                    let gm = acc(&mut grads, *m, n * cols);
                    for j in 0..*n {
                        for r in 0..rows {
                            axpy(dy[j * rows + r], &wd[r * cols..(r + 1) * cols], &mut gm[j * cols..(j + 1) * cols]);
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let l = nl(p);
                        add_into(&dy[off..off + l], acc(&mut grads, p, l));
                        off += l;
                    }
                }
                Op::Slice { x, start } => {
                    let l = nl(*x);
                    add_into(&dy, &mut acc(&mut grads, *x, l)[*start..*start + dy.len()]);
                }
                Op::Add(a, b) => {
                    add_into(&dy, acc(&mut grads, *a, dy.len()));
                    add_into(&dy, acc(&mut grads, *b, dy.len()));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let ga = acc(&mut grads, *a, dy.len());
                    for k in 0..dy.len() {
                        ga[k] += dy[k] * bv[k];
                    }
                    let gb = acc(&mut grads, *b, dy.len());
                    for k in 0..dy.len() {
                        gb[k] += dy[k] * av[k];
                    }
                }
                Op::Mask { x, mask } => {
                    let gx = acc(&mut grads, *x, dy.len());
                    for k in 0..dy.len() {
                        gx[k] += dy[k] * mask[k];
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let gx = acc(&mut grads, *x, dy.len());
                    for k in 0..dy.len() {
                        gx[k] += dy[k] * y[k] * (F::one() - y[k]);
                    }
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let gx = acc(&mut grads, *x, dy.len());
                    for k in 0..dy.len() {
                        gx[k] += dy[k] * (F::one() - y[k] * y[k]);
                    }
                }
                Op::Lstm { gates, c_prev } => {
                    let h = dy.len() / 2;
                    let a = &node.aux;
                    let (i, f, g, o, tc) = (&a[..h], &a[h..2 * h], &a[2 * h..3 * h], &a[3 * h..4 * h], &a[4 * h..]);
                    let cp = &self.nodes[*c_prev].value;
                    let one = F::one();
                    let mut dz = vec![F::zero(); 4 * h];
                    let mut dcp = vec![F::zero(); h];
                    for k in 0..h {
                        let dh = dy[k];
                        let dc = dy[h + k] + dh * o[k] * (one - tc[k] * tc[k]);
                        dz[k] = dc * g[k] * i[k] * (one - i[k]);
                        dz[h + k] = dc * cp[k] * f[k] * (one - f[k]);
                        dz[2 * h + k] = dc * i[k] * (one - g[k] * g[k]);
                        dz[3 * h + k] = dh * tc[k] * o[k] * (one - o[k]);
                        dcp[k] = dc * f[k];
                    }
                    add_into(&dz, acc(&mut grads, *gates, 4 * h));
                    add_into(&dcp, acc(&mut grads, *c_prev, h));
                }
                Op::AdditiveScores { keys, n, query, v } => {
                    let a = self.nodes[*query].value.len();
                    let t = &node.aux;
                    let vv = &self.params.data[*v];
                    let mut dpre = vec![F::zero(); n * a];
                    {
                        let gv = &mut pg.data[*v];
                        for j in 0..*n {
                            let tj = &t[j * a..(j + 1) * a];
                            axpy(dy[j], tj, gv);
                            for k in 0..a {
                                dpre[j * a + k] = dy[j] * vv[k] * (F::one() - tj[k] * tj[k]);
                            }
                        }
                    }
                    let gq = acc(&mut grads, *query, a);
                    for j in 0..*n {
                        add_into(&dpre[j * a..(j + 1) * a], gq);
                    }
                    add_into(&dpre, acc(&mut grads, *keys, n * a));
                }
                Op::MatVec { m, n, x } => {
                    let xv = &self.nodes[*x].value;
                    let mv = &self.nodes[*m].value;
                    let d = xv.len();
                    {
                        let gm = acc(&mut grads, *m, n * d);
                        for j in 0..*n {
                            axpy(dy[j], xv, &mut gm[j * d..(j + 1) * d]);
                        }
                    }
                    let gx = acc(&mut grads, *x, d);
                    for j in 0..*n {
                        axpy(dy[j], &mv[j * d..(j + 1) * d], gx);
                    }
                }
                Op::MatTVec { m, n, w } => {
                    let wv = &self.nodes[*w].value;
                    let mv = &self.nodes[*m].value;
                    let d = dy.len();
                    {
                        let gm = acc(&mut grads, *m, n * d);
                        for j in 0..*n {
                            axpy(wv[j], &dy, &mut gm[j * d..(j + 1) * d]);
                        }
                    }
                    let gw = acc(&mut grads, *w, *n);
                    for j in 0..*n {
                        gw[j] += dot(&dy, &mv[j * d..(j + 1) * d]);
                    }
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let s = dot(&dy, y);
                    let gx = acc(&mut grads, *x, dy.len());
                    for k in 0..dy.len() {
                        gx[k] += y[k] * (dy[k] - s);
                    }
                }
                Op::MixtureNll { gen, copy, gate, gen_index, copy_pos } => {
                    let d = dy[0];
                    let r = &node.aux;
                    let gv = self.nodes[*gate].value[0];
                    let sg = sigmoid(gv);
                    let (r_gen, r_copy) = match gen_index {
                        Some(_) => (r[0], &r[1..]),
                        None => (F::zero(), &r[..]),
                    };
                    let r_copy_total: F = r_copy.iter().copied().sum();
                    if let Some(y) = gen_index {
                        let sm = softmax(&self.nodes[*gen].value);
                        let gg = acc(&mut grads, *gen, sm.len());
                        for k in 0..sm.len() {
                            gg[k] += d * r_gen * sm[k];
                        }
                        gg[*y] -= d * r_gen;
                    }
                    if !copy_pos.is_empty() {
                        let sm = softmax(&self.nodes[*copy].value);
                        let gc = acc(&mut grads, *copy, sm.len());
                        for k in 0..sm.len() {
                            gc[k] += d * r_copy_total * sm[k];
                        }
                        for (j, rj) in copy_pos.iter().zip(r_copy) {
                            gc[*j] -= d * *rj;
                        }
                    }
                    let gg = acc(&mut grads, *gate, 1);
                    gg[0] -= d * (r_gen * (F::one() - sg) - r_copy_total * sg);
                }
                Op::Sum(xs) => {
                    for &x in xs {
                        acc(&mut grads, x, 1)[0] += dy[0];
                    }
                }
                Op::Scale(x, k) => {
                    let gx = acc(&mut grads, *x, dy.len());
                    axpy(*k, &dy, gx);
                }
            }
        }
    }
}
