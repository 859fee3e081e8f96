//! Single-layer graph convolution over pre-aggregated inputs.
//!
//! Inputs `X̄` are fixed tables built once by [`AggregatedFeatures::build`].
//! A user tower and an item tower map them to `H = relu(W X̄)`, and a
//! prediction head turns a `(user, item)` pair into a logit. Gradients are
//! computed analytically for a whole mini-batch.

pub mod aggregate;
pub mod checkpoint;
pub mod optim;
pub mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{gemm, Matrix, Op};
use crate::scalar::Scalar;
use crate::seed;

pub use aggregate::{aggregate_neighborhood, concat_features, AggregatedFeatures, NeighborhoodFeatures};
pub use optim::{adam_step, AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HeadKind {
    /// Towers, then an MLP over `H_u ⊕ H_i`.
    #[default]
    Std,
    /// The same MLP directly over `X̄_u ⊕ X̄_i`.
    Lin,
    /// `sigmoid(a · cos(X̄_u, X̄_i) + b)`.
    Vcos,
    /// `sigmoid(a · relu(cos(X̄_u, X̄_i)) + b)`.
    Cos,
}

impl HeadKind {
    pub const ALL: [HeadKind; 4] = [HeadKind::Std, HeadKind::Lin, HeadKind::Vcos, HeadKind::Cos];

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Std => "std",
            HeadKind::Lin => "lin",
            HeadKind::Vcos => "vcos",
            HeadKind::Cos => "cos",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadKind::ALL
            .into_iter()
            .find(|h| h.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown head `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Width of `X̄`, i.e. `m * (1 + slices)`.
    pub input_dim: usize,
    pub repr_dim: usize,
    pub hidden: Vec<usize>,
    pub head: HeadKind,
    /// Make the `X̄` tables themselves trainable parameters.
    pub trainable_inputs: bool,
}

impl ModelConfig {
    pub fn new(input_dim: usize) -> Self {
        ModelConfig {
            input_dim,
            repr_dim: 256,
            hidden: vec![512, 512, 512],
            head: HeadKind::Std,
            trainable_inputs: false,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.repr_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if matches!(self.head, HeadKind::Std | HeadKind::Lin) && self.hidden.is_empty() {
            return Err(Error::Config("MLP heads need at least one hidden layer".into()));
        }
        Ok(())
    }
}

/// Indices of each parameter group in the flat tensor list.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Layout {
    towers: Option<usize>,
    mlp: Option<(usize, usize)>,
    cos: Option<usize>,
    tables: Option<usize>,
}

/// Named tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Matrix<T>>,
}

impl<T: Scalar> ModelParameters<T> {
    pub fn get(&self, name: &str) -> Option<&Matrix<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.as_slice().iter().all(|x| x.is_finite()))
    }
}

pub(crate) fn glorot<T: Scalar, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| T::of(rng.gen_range(-a..=a))).collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

#[inline]
fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus<T: Scalar>(z: T) -> T {
    relu(z) + (-z.abs()).exp().ln_1p()
}

fn add_bias<T: Scalar>(z: &mut Matrix<T>, bias: &Matrix<T>) {
    let b = bias.as_slice();
    for r in 0..z.rows() {
        for (x, &bb) in z.row_mut(r).iter_mut().zip(b) {
            *x += bb;
        }
    }
}

fn column_sums<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(1, m.cols());
    for r in 0..m.rows() {
        for (o, &x) in out.as_mut_slice().iter_mut().zip(m.row(r)) {
            *o += x;
        }
    }
    out
}

fn relu_in_place<T: Scalar>(m: &mut Matrix<T>) {
    for x in m.as_mut_slice() {
        *x = relu(*x);
    }
}

/// Zeroes `grad` where the forward activation was inactive.
fn mask_relu<T: Scalar>(grad: &mut Matrix<T>, activation: &Matrix<T>) {
    for (g, &a) in grad.as_mut_slice().iter_mut().zip(activation.as_slice()) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Sorted unique ids and, per sample, the position of its id.
fn unique_positions(ids: &[u32]) -> (Vec<u32>, Vec<usize>) {
    let mut uniq = ids.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let pos = ids
        .iter()
        .map(|id| uniq.binary_search(id).expect("present"))
        .collect();
    (uniq, pos)
}

/// Activations kept for the backward pass.
struct Cache<T> {
    users: Vec<u32>,
    items: Vec<u32>,
    user_pos: Vec<usize>,
    item_pos: Vec<usize>,
    /// Tower inputs and post-ReLU outputs (STD only).
    tower: Option<[(Matrix<T>, Matrix<T>); 2]>,
    /// Input to each MLP layer; entry `l > 0` is the post-ReLU output of
    /// hidden layer `l - 1`.
    mlp_inputs: Vec<Matrix<T>>,
    /// Per sample `(cos, |x_u|, |x_i|)` (cosine heads only).
    cos: Vec<(T, T, T)>,
}

/// Model parameters plus the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    layout: Layout,
    params: ModelParameters<T>,
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters: Glorot-uniform weights, zero biases, cosine map
    /// `a = 1, b = 0`. With trainable inputs the tables start as copies of
    /// `inputs`.
    pub fn new(config: ModelConfig, inputs: Option<&AggregatedFeatures<T>>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed, &[seed::stream::INIT]);
        let mut names: Vec<String> = Vec::new();
        let mut tensors: Vec<Matrix<T>> = Vec::new();
        fn push<T>(names: &mut Vec<String>, tensors: &mut Vec<Matrix<T>>, name: String, m: Matrix<T>) -> usize {
            names.push(name);
            tensors.push(m);
            names.len() - 1
        }
        let (d, r) = (config.input_dim, config.repr_dim);
        let mut layout = Layout {
            towers: None,
            mlp: None,
            cos: None,
            tables: None,
        };
        match config.head {
            HeadKind::Std | HeadKind::Lin => {
                if config.head == HeadKind::Std {
                    let u = push(&mut names, &mut tensors, "tower.user".into(), glorot(r, d, &mut rng));
                    push(&mut names, &mut tensors, "tower.item".into(), glorot(r, d, &mut rng));
                    layout.towers = Some(u);
                }
                let mut width = if config.head == HeadKind::Std { 2 * r } else { 2 * d };
                let first = names.len();
                for (l, &h) in config.hidden.iter().enumerate() {
                    push(&mut names, &mut tensors, format!("mlp.{l}.weight"), glorot(h, width, &mut rng));
                    push(&mut names, &mut tensors, format!("mlp.{l}.bias"), Matrix::zeros(1, h));
                    width = h;
                }
                push(&mut names, &mut tensors, "mlp.out.weight".into(), glorot(1, width, &mut rng));
                push(&mut names, &mut tensors, "mlp.out.bias".into(), Matrix::zeros(1, 1));
                layout.mlp = Some((first, config.hidden.len() + 1));
            }
            HeadKind::Vcos | HeadKind::Cos => {
                let a = push(&mut names, &mut tensors, "cos.scale".into(), Matrix::from_vec(1, 1, vec![T::one()])?);
                push(&mut names, &mut tensors, "cos.bias".into(), Matrix::zeros(1, 1));
                layout.cos = Some(a);
            }
        }
        if config.trainable_inputs {
            let inputs = inputs.ok_or_else(|| Error::invalid("trainable inputs need initial tables"))?;
            if inputs.input_dim() != d {
                return Err(Error::Shape(format!("inputs have width {} but the model expects {d}", inputs.input_dim())));
            }
            let u = push(&mut names, &mut tensors, "inputs.user".into(), inputs.users().clone());
            push(&mut names, &mut tensors, "inputs.item".into(), inputs.items().clone());
            layout.tables = Some(u);
        }
        Ok(Model {
            config,
            layout,
            params: ModelParameters { names, tensors },
        })
    }

    /// Rebuilds a model from stored tensors, checking names and shapes.
    pub fn from_parameters(config: ModelConfig, params: ModelParameters<T>) -> Result<Self> {
        let template_inputs;
        let inputs = if config.trainable_inputs {
            let find = |n: &str| params.get(n).cloned().ok_or_else(|| Error::Shape(format!("missing tensor `{n}`")));
            template_inputs = AggregatedFeatures::from_tables(config.input_dim, 0, find("inputs.user")?, find("inputs.item")?)?;
            Some(&template_inputs)
        } else {
            None
        };
        let mut model = Model::new(config, inputs, 0)?;
        if model.params.names != params.names {
            return Err(Error::Shape("tensor names do not match the configuration".into()));
        }
        for (a, b) in model.params.tensors.iter().zip(&params.tensors) {
            if (a.rows(), a.cols()) != (b.rows(), b.cols()) {
                return Err(Error::Shape("tensor shapes do not match the configuration".into()));
            }
        }
        model.params = params;
        Ok(model)
    }

    /// Sets the output bias of the MLP heads, e.g. to the log-odds of the
    /// label prior. Cosine heads keep their own affine map.
    pub fn set_output_bias(&mut self, bias: T) {
        if let Some((first, layers)) = self.layout.mlp {
            self.params.tensors[first + 2 * (layers - 1) + 1].as_mut_slice()[0] = bias;
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> &ModelParameters<T> {
        &self.params
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.params.tensors
    }

    /// The user and item input tables: the trained copies when inputs are
    /// trainable, otherwise the supplied fixed tables.
    pub fn input_tables<'a>(&'a self, inputs: &'a AggregatedFeatures<T>) -> (&'a Matrix<T>, &'a Matrix<T>) {
        match self.layout.tables {
            Some(t) => (&self.params.tensors[t], &self.params.tensors[t + 1]),
            None => (inputs.users(), inputs.items()),
        }
    }

    /// `H = relu(W x)` for one user (`item == false`) or item input row.
    pub fn node_representation(&self, x: &[T], item: bool) -> Result<Vec<T>> {
        let t = self
            .layout
            .towers
            .ok_or_else(|| Error::invalid("this head has no representation layer"))?;
        let w = &self.params.tensors[t + item as usize];
        if x.len() != w.cols() {
            return Err(Error::Shape(format!("input has length {} but W expects {}", x.len(), w.cols())));
        }
        Ok((0..w.rows()).map(|r| relu(crate::linalg::dot(w.row(r), x))).collect())
    }

    fn check_batch(&self, tables: (&Matrix<T>, &Matrix<T>), users: &[u32], items: &[u32]) -> Result<()> {
        if users.len() != items.len() {
            return Err(Error::Shape("user and item batches differ in length".into()));
        }
        if tables.0.cols() != self.config.input_dim || tables.1.cols() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "inputs have width {} but the model expects {}",
                tables.0.cols(),
                self.config.input_dim
            )));
        }
        if users.iter().any(|&u| u as usize >= tables.0.rows()) || items.iter().any(|&i| i as usize >= tables.1.rows()) {
            return Err(Error::Shape("batch references a node without inputs".into()));
        }
        Ok(())
    }

    fn forward(&self, tables: (&Matrix<T>, &Matrix<T>), users: &[u32], items: &[u32]) -> (Vec<T>, Cache<T>) {
        let (uniq_u, pos_u) = unique_positions(users);
        let (uniq_i, pos_i) = unique_positions(items);
        let mut cache = Cache {
            users: uniq_u,
            items: uniq_i,
            user_pos: pos_u,
            item_pos: pos_i,
            tower: None,
            mlp_inputs: Vec::new(),
            cos: Vec::new(),
        };
        let b = users.len();
        let p = &self.params.tensors;
        let logits = match self.config.head {
            HeadKind::Std | HeadKind::Lin => {
                let a0 = if let Some(t) = self.layout.towers {
                    let xu = tables.0.gather_rows(&cache.users);
                    let xi = tables.1.gather_rows(&cache.items);
                    let mut hu = Matrix::zeros(xu.rows(), self.config.repr_dim);
                    gemm(T::one(), &xu, Op::N, &p[t], Op::T, T::zero(), &mut hu);
                    relu_in_place(&mut hu);
                    let mut hi = Matrix::zeros(xi.rows(), self.config.repr_dim);
                    gemm(T::one(), &xi, Op::N, &p[t + 1], Op::T, T::zero(), &mut hi);
                    relu_in_place(&mut hi);
                    let a0 = pair_rows(&hu, &cache.user_pos, &hi, &cache.item_pos);
                    cache.tower = Some([(xu, hu), (xi, hi)]);
                    a0
                } else {
                    pair_rows(tables.0, &to_usize(users), tables.1, &to_usize(items))
                };
                let (first, layers) = self.layout.mlp.expect("MLP head");
                let mut a = a0;
                for l in 0..layers {
                    let (w, bias) = (&p[first + 2 * l], &p[first + 2 * l + 1]);
                    let mut z = Matrix::zeros(b, w.rows());
                    gemm(T::one(), &a, Op::N, w, Op::T, T::zero(), &mut z);
                    add_bias(&mut z, bias);
                    if l + 1 < layers {
                        relu_in_place(&mut z);
                    }
                    cache.mlp_inputs.push(std::mem::replace(&mut a, z));
                }
                a.into_vec()
            }
            HeadKind::Vcos | HeadKind::Cos => {
                let c = self.layout.cos.expect("cosine head");
                let (scale, bias) = (p[c].as_slice()[0], p[c + 1].as_slice()[0]);
                let mut out = Vec::with_capacity(b);
                for (&u, &i) in users.iter().zip(items) {
                    let (xu, xi) = (tables.0.row(u as usize), tables.1.row(i as usize));
                    let (nu, ni) = (norm(xu), norm(xi));
                    let cos = if nu > T::zero() && ni > T::zero() {
                        crate::linalg::dot(xu, xi) / (nu * ni)
                    } else {
                        T::zero()
                    };
                    let r = if self.config.head == HeadKind::Cos { relu(cos) } else { cos };
                    cache.cos.push((cos, nu, ni));
                    out.push(scale * r + bias);
                }
                out
            }
        };
        (logits, cache)
    }

    /// Logits for a batch of pairs. Larger means more likely relevant.
    pub fn logits(&self, inputs: &AggregatedFeatures<T>, users: &[u32], items: &[u32]) -> Result<Vec<T>> {
        let tables = self.input_tables(inputs);
        self.check_batch(tables, users, items)?;
        const CHUNK: usize = 10_240;
        let mut out = Vec::with_capacity(users.len());
        for (u, i) in users.chunks(CHUNK).zip(items.chunks(CHUNK)) {
            out.extend(self.forward(tables, u, i).0);
        }
        Ok(out)
    }

    /// Probabilities `ŷ` in `(0, 1)`.
    pub fn predict(&self, inputs: &AggregatedFeatures<T>, users: &[u32], items: &[u32]) -> Result<Vec<T>> {
        Ok(self.logits(inputs, users, items)?.into_iter().map(sigmoid).collect())
    }

    /// Mean binary cross-entropy of a batch and its gradient with respect to
    /// every parameter tensor.
    pub fn loss_and_gradient(&self, inputs: &AggregatedFeatures<T>, users: &[u32], items: &[u32], labels: &[T]) -> Result<(T, Vec<Matrix<T>>)> {
        let tables = self.input_tables(inputs);
        self.check_batch(tables, users, items)?;
        if labels.len() != users.len() || users.is_empty() {
            return Err(Error::Shape("labels must match a nonempty batch".into()));
        }
        let (logits, cache) = self.forward(tables, users, items);
        let bsz = T::of(users.len() as f64);
        let mut loss = T::zero();
        let mut dz = Vec::with_capacity(logits.len());
        for (&z, &y) in logits.iter().zip(labels) {
            loss += softplus(z) - y * z;
            dz.push((sigmoid(z) - y) / bsz);
        }
        loss /= bsz;
        let (grads, _) = self.backward(tables, &cache, users, items, dz, false);
        Ok((loss, grads))
    }

    /// Like [`Model::loss_and_gradient`] on caller-supplied input tables,
    /// also returning the gradient with respect to every table row. Rows not
    /// referenced by the batch get zero gradient.
    pub fn loss_and_input_gradient(
        &self,
        user_table: &Matrix<T>,
        item_table: &Matrix<T>,
        users: &[u32],
        items: &[u32],
        labels: &[T],
    ) -> Result<(T, Vec<Matrix<T>>, Matrix<T>, Matrix<T>)> {
        if self.layout.tables.is_some() {
            return Err(Error::invalid("external tables need a model without trainable inputs"));
        }
        let tables = (user_table, item_table);
        self.check_batch(tables, users, items)?;
        if labels.len() != users.len() || users.is_empty() {
            return Err(Error::Shape("labels must match a nonempty batch".into()));
        }
        let (logits, cache) = self.forward(tables, users, items);
        let bsz = T::of(users.len() as f64);
        let mut loss = T::zero();
        let mut dz = Vec::with_capacity(logits.len());
        for (&z, &y) in logits.iter().zip(labels) {
            loss += softplus(z) - y * z;
            dz.push((sigmoid(z) - y) / bsz);
        }
        loss /= bsz;
        let (grads, d) = self.backward(tables, &cache, users, items, dz, true);
        let (gu, gi) = d.expect("requested input gradients");
        Ok((loss, grads, gu, gi))
    }

    fn backward(
        &self,
        tables: (&Matrix<T>, &Matrix<T>),
        cache: &Cache<T>,
        users: &[u32],
        items: &[u32],
        dz: Vec<T>,
        want_inputs: bool,
    ) -> (Vec<Matrix<T>>, Option<(Matrix<T>, Matrix<T>)>) {
        let p = &self.params.tensors;
        let mut grads: Vec<Matrix<T>> = p.iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
        let b = dz.len();
        let mut d_tables: Option<(Matrix<T>, Matrix<T>)> = (want_inputs || self.layout.tables.is_some())
            .then(|| (Matrix::zeros(tables.0.rows(), tables.0.cols()), Matrix::zeros(tables.1.rows(), tables.1.cols())));
        match self.config.head {
            HeadKind::Std | HeadKind::Lin => {
                let (first, layers) = self.layout.mlp.expect("MLP head");
                let mut d = Matrix::from_vec(b, 1, dz).expect("sized");
                for l in (0..layers).rev() {
                    let a = &cache.mlp_inputs[l];
                    let w = &p[first + 2 * l];
                    gemm(T::one(), &d, Op::T, a, Op::N, T::zero(), &mut grads[first + 2 * l]);
                    grads[first + 2 * l + 1] = column_sums(&d);
                    let needs_input = l > 0 || self.layout.towers.is_some() || d_tables.is_some();
                    if !needs_input {
                        break;
                    }
                    let mut da = Matrix::zeros(b, w.cols());
                    gemm(T::one(), &d, Op::N, w, Op::N, T::zero(), &mut da);
                    if l > 0 {
                        mask_relu(&mut da, a);
                    }
                    d = da;
                }
                // `d` is now the gradient of the MLP input.
                if let Some(t) = self.layout.towers {
                    let r = self.config.repr_dim;
                    let [(xu, hu), (xi, hi)] = cache.tower.as_ref().expect("tower cache");
                    let mut dhu = Matrix::zeros(hu.rows(), r);
                    let mut dhi = Matrix::zeros(hi.rows(), r);
                    for s in 0..b {
                        let row = d.row(s);
                        for (o, &g) in dhu.row_mut(cache.user_pos[s]).iter_mut().zip(&row[..r]) {
                            *o += g;
                        }
                        for (o, &g) in dhi.row_mut(cache.item_pos[s]).iter_mut().zip(&row[r..]) {
                            *o += g;
                        }
                    }
                    mask_relu(&mut dhu, hu);
                    mask_relu(&mut dhi, hi);
                    gemm(T::one(), &dhu, Op::T, xu, Op::N, T::zero(), &mut grads[t]);
                    gemm(T::one(), &dhi, Op::T, xi, Op::N, T::zero(), &mut grads[t + 1]);
                    if let Some((gu, gi)) = d_tables.as_mut() {
                        let mut dxu = Matrix::zeros(xu.rows(), xu.cols());
                        gemm(T::one(), &dhu, Op::N, &p[t], Op::N, T::zero(), &mut dxu);
                        let mut dxi = Matrix::zeros(xi.rows(), xi.cols());
                        gemm(T::one(), &dhi, Op::N, &p[t + 1], Op::N, T::zero(), &mut dxi);
                        scatter_add(gu, &cache.users, &dxu);
                        scatter_add(gi, &cache.items, &dxi);
                    }
                } else if let Some((gu, gi)) = d_tables.as_mut() {
                    let dim = self.config.input_dim;
                    for s in 0..b {
                        let row = d.row(s);
                        add_into(gu.row_mut(users[s] as usize), &row[..dim]);
                        add_into(gi.row_mut(items[s] as usize), &row[dim..]);
                    }
                }
            }
            HeadKind::Vcos | HeadKind::Cos => {
                let c = self.layout.cos.expect("cosine head");
                let scale = p[c].as_slice()[0];
                let (mut ga, mut gb) = (T::zero(), T::zero());
                for (s, &g) in dz.iter().enumerate() {
                    let (cos, nu, ni) = cache.cos[s];
                    let active = self.config.head == HeadKind::Vcos || cos > T::zero();
                    let r = if active { cos } else { T::zero() };
                    ga += g * r;
                    gb += g;
                    let Some((gu, gi)) = d_tables.as_mut() else { continue };
                    if !active || nu <= T::zero() || ni <= T::zero() {
                        continue;
                    }
                    let dc = g * scale;
                    let (xu, xi) = (tables.0.row(users[s] as usize), tables.1.row(items[s] as usize));
                    let inv = T::one() / (nu * ni);
                    for ((o, &a), &bb) in gu.row_mut(users[s] as usize).iter_mut().zip(xu).zip(xi) {
                        *o += dc * (bb * inv - cos * a / (nu * nu));
                    }
                    for ((o, &bb), &a) in gi.row_mut(items[s] as usize).iter_mut().zip(xi).zip(xu) {
                        *o += dc * (a * inv - cos * bb / (ni * ni));
                    }
                }
                grads[c].as_mut_slice()[0] = ga;
                grads[c + 1].as_mut_slice()[0] = gb;
            }
        }
        if let Some(t) = self.layout.tables {
            let (gu, gi) = d_tables.take().expect("table gradients");
            grads[t] = gu;
            grads[t + 1] = gi;
        }
        (grads, d_tables)
    }
}

fn norm<T: Scalar>(x: &[T]) -> T {
    crate::linalg::dot(x, x).sqrt()
}

fn to_usize(ids: &[u32]) -> Vec<usize> {
    ids.iter().map(|&x| x as usize).collect()
}

/// Row `s` is `left[lp[s]] ⊕ right[rp[s]]`.
fn pair_rows<T: Scalar>(left: &Matrix<T>, lp: &[usize], right: &Matrix<T>, rp: &[usize]) -> Matrix<T> {
    let (a, c) = (left.cols(), right.cols());
    let mut out = Matrix::zeros(lp.len(), a + c);
    for (s, (&l, &r)) in lp.iter().zip(rp).enumerate() {
        let row = out.row_mut(s);
        row[..a].copy_from_slice(left.row(l));
        row[a..].copy_from_slice(right.row(r));
    }
    out
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (o, &x) in dst.iter_mut().zip(src) {
        *o += x;
    }
}

fn scatter_add<T: Scalar>(dst: &mut Matrix<T>, rows: &[u32], src: &Matrix<T>) {
    for (k, &r) in rows.iter().enumerate() {
        add_into(dst.row_mut(r as usize), src.row(k));
    }
}

/// Mean negative log-likelihood of probabilities against 0/1 labels.
pub fn loss<T: Scalar>(predictions: &[T], labels: &[T]) -> Result<T> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::Shape("predictions and labels must be nonempty and equally long".into()));
    }
    let mut total = T::zero();
    for (&p, &y) in predictions.iter().zip(labels) {
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::Numeric(format!("prediction {p} outside (0, 1)")));
        }
        total -= y * p.ln() + (T::one() - y) * (T::one() - p).ln();
    }
    Ok(total / T::of(predictions.len() as f64))
}
