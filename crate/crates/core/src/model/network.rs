//! Parameters, batched forward pass and backpropagation.
//!
//! Sequences are `[start] ++ x` (or `[start] ++ reverse(x)` for the backward
//! kinds), right-aligned in a batch. Rows that have not started yet keep a
//! zero state, so a batch computes exactly what each row would alone.

use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, ScalarOperand, Zip};
use num_traits::{Float, FromPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Activation, ModelOptions, StructureConfig};
use super::ModelError;

pub trait Real:
    ndarray::LinalgScalar
    + Float
    + FromPrimitive
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn cast<T: Real>(v: f64) -> T {
    T::from_f64(v).unwrap()
}

const BN_EPS: f64 = 1e-3;
const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// in × out
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Real> Dense<T> {
    fn zeros(input: usize, output: usize) -> Self {
        Dense { w: Array2::zeros((input, output)), b: Array1::zeros(output) }
    }
}

/// Every tensor of a model. Gradients and optimizer moments reuse this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// (|V|+1) × input width; the last row is the start-of-game token.
    pub embedding: Array2<T>,
    /// input × gates·H, gate blocks LSTM (i, f, g, o) or GRU (r, u, n).
    pub rnn_wx: Array2<T>,
    /// H × gates·H
    pub rnn_wh: Array2<T>,
    pub rnn_b: Array1<T>,
    /// Empty when batch-norm is off.
    pub bn_gamma: Array1<T>,
    pub bn_beta: Array1<T>,
    pub bn_mean: Array1<T>,
    pub bn_var: Array1<T>,
    pub fc: Vec<Dense<T>>,
    pub out: Dense<T>,
}

impl<T: Real> Params<T> {
    pub fn zeros(config: &StructureConfig, options: &ModelOptions, vocab_size: usize) -> Self {
        let e = options.input_dim(vocab_size);
        let h = options.hidden(config);
        let g = config.rnn_kind.gates() * h;
        let bn = if config.batch_norm { h } else { 0 };
        Params {
            embedding: Array2::zeros((vocab_size + 1, e)),
            rnn_wx: Array2::zeros((e, g)),
            rnn_wh: Array2::zeros((h, g)),
            rnn_b: Array1::zeros(g),
            bn_gamma: Array1::zeros(bn),
            bn_beta: Array1::zeros(bn),
            bn_mean: Array1::zeros(bn),
            bn_var: Array1::zeros(bn),
            fc: (0..config.num_fc).map(|_| Dense::zeros(h, h)).collect(),
            out: Dense::zeros(h, vocab_size),
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_| T::zero())
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U + Copy) -> Params<U> {
        Params {
            embedding: self.embedding.mapv(f),
            rnn_wx: self.rnn_wx.mapv(f),
            rnn_wh: self.rnn_wh.mapv(f),
            rnn_b: self.rnn_b.mapv(f),
            bn_gamma: self.bn_gamma.mapv(f),
            bn_beta: self.bn_beta.mapv(f),
            bn_mean: self.bn_mean.mapv(f),
            bn_var: self.bn_var.mapv(f),
            fc: self.fc.iter().map(|d| Dense { w: d.w.mapv(f), b: d.b.mapv(f) }).collect(),
            out: Dense { w: self.out.w.mapv(f), b: self.out.b.mapv(f) },
        }
    }

    /// Tensor names in storage order.
    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["embedding", "rnn.wx", "rnn.wh", "rnn.b", "bn.gamma", "bn.beta", "bn.mean", "bn.var"]
            .map(String::from)
            .to_vec();
        for i in 0..self.fc.len() {
            v.push(format!("fc{i}.w"));
            v.push(format!("fc{i}.b"));
        }
        v.push("out.w".into());
        v.push("out.b".into());
        v
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut v = vec![
            self.embedding.shape().to_vec(),
            self.rnn_wx.shape().to_vec(),
            self.rnn_wh.shape().to_vec(),
            self.rnn_b.shape().to_vec(),
            self.bn_gamma.shape().to_vec(),
            self.bn_beta.shape().to_vec(),
            self.bn_mean.shape().to_vec(),
            self.bn_var.shape().to_vec(),
        ];
        for d in &self.fc {
            v.push(d.w.shape().to_vec());
            v.push(d.b.shape().to_vec());
        }
        v.push(self.out.w.shape().to_vec());
        v.push(self.out.b.shape().to_vec());
        v
    }

    pub fn slices(&self) -> Vec<&[T]> {
        let mut v = vec![
            self.embedding.as_slice().unwrap(),
            self.rnn_wx.as_slice().unwrap(),
            self.rnn_wh.as_slice().unwrap(),
            self.rnn_b.as_slice().unwrap(),
            self.bn_gamma.as_slice().unwrap(),
            self.bn_beta.as_slice().unwrap(),
            self.bn_mean.as_slice().unwrap(),
            self.bn_var.as_slice().unwrap(),
        ];
        for d in &self.fc {
            v.push(d.w.as_slice().unwrap());
            v.push(d.b.as_slice().unwrap());
        }
        v.push(self.out.w.as_slice().unwrap());
        v.push(self.out.b.as_slice().unwrap());
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = vec![
            self.embedding.as_slice_mut().unwrap(),
            self.rnn_wx.as_slice_mut().unwrap(),
            self.rnn_wh.as_slice_mut().unwrap(),
            self.rnn_b.as_slice_mut().unwrap(),
            self.bn_gamma.as_slice_mut().unwrap(),
            self.bn_beta.as_slice_mut().unwrap(),
            self.bn_mean.as_slice_mut().unwrap(),
            self.bn_var.as_slice_mut().unwrap(),
        ];
        for d in &mut self.fc {
            v.push(d.w.as_slice_mut().unwrap());
            v.push(d.b.as_slice_mut().unwrap());
        }
        v.push(self.out.w.as_slice_mut().unwrap());
        v.push(self.out.b.as_slice_mut().unwrap());
        v
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Sum of squared FC and projection weights (biases excluded).
    pub fn penalized_sq_norm(&self) -> f64 {
        let sq = |w: &Array2<T>| w.iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>();
        self.fc.iter().map(|d| sq(&d.w)).sum::<f64>() + sq(&self.out.w)
    }
}

/// Whether the tensor at `name` is updated by the optimizer.
pub fn is_trainable(name: &str, options: &ModelOptions) -> bool {
    match name {
        "bn.mean" | "bn.var" => false,
        "embedding" => !options.one_hot,
        _ => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout (when a generator is supplied) and batch statistics.
    Train,
    /// No dropout, running batch-norm statistics.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    pub config: StructureConfig,
    pub options: ModelOptions,
    pub vocab_size: usize,
    pub params: Params<T>,
}

impl<T: Real> Model<T> {
    /// Deterministic from `seed`: weights uniform in ±1/sqrt(fan_in), biases
    /// zero except the LSTM forget gate (one), batch-norm scale one.
    pub fn build(config: StructureConfig, options: ModelOptions, vocab_size: usize, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if vocab_size == 0 || options.embedding_dim == 0 {
            return Err(ModelError::InvalidConfig(vec!["vocabulary and embedding must be nonempty".into()]));
        }
        Ok(Self::build_unchecked(config, options, vocab_size, seed))
    }

    /// Like [`Model::build`] without candidate-set validation, for reduced-scale tests.
    pub fn build_unchecked(config: StructureConfig, options: ModelOptions, vocab_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::<T>::zeros(&config, &options, vocab_size);
        let fill = |a: &mut [T], fan_in: usize, rng: &mut ChaCha8Rng| {
            let r = 1.0 / (fan_in as f64).sqrt();
            for v in a.iter_mut() {
                *v = cast(rng.random_range(-r..r));
            }
        };
        let e = options.input_dim(vocab_size);
        let h = options.hidden(&config);
        if options.one_hot {
            for i in 0..vocab_size {
                p.embedding[[i, i]] = T::one();
            }
        } else {
            fill(p.embedding.as_slice_mut().unwrap(), e, &mut rng);
        }
        fill(p.rnn_wx.as_slice_mut().unwrap(), e, &mut rng);
        fill(p.rnn_wh.as_slice_mut().unwrap(), h, &mut rng);
        if !config.rnn_kind.is_gru() {
            p.rnn_b.slice_mut(s![h..2 * h]).fill(T::one());
        }
        p.bn_gamma.fill(T::one());
        p.bn_var.fill(T::one());
        for d in &mut p.fc {
            fill(d.w.as_slice_mut().unwrap(), h, &mut rng);
        }
        fill(p.out.w.as_slice_mut().unwrap(), h, &mut rng);
        Model { config, options, vocab_size, params: p }
    }

    pub fn hidden(&self) -> usize {
        self.options.hidden(&self.config)
    }

    pub fn start_token(&self) -> usize {
        self.vocab_size
    }

    /// Every stored scalar, batch-norm running statistics included.
    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn trainable_count(&self) -> usize {
        self.params
            .names()
            .iter()
            .zip(self.params.slices())
            .filter(|(n, _)| is_trainable(n, &self.options))
            .map(|(_, s)| s.len())
            .sum()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config,
            options: self.options,
            vocab_size: self.vocab_size,
            params: self.params.map(|v| cast(v.to_f64().unwrap())),
        }
    }

    /// Log-probabilities (batch × |V|) in inference mode.
    pub fn log_probs(&self, xs: &[&[u16]]) -> Result<Array2<T>, ModelError> {
        Ok(self.forward_cache(xs, Mode::Infer, None)?.log_probs)
    }

    /// Log-probabilities with an explicit mode; dropout only if `rng` is given.
    pub fn log_probs_with(&self, xs: &[&[u16]], mode: Mode, rng: Option<&mut ChaCha8Rng>) -> Result<Array2<T>, ModelError> {
        Ok(self.forward_cache(xs, mode, rng)?.log_probs)
    }

    /// Mean cross-entropy plus `fc_reg` times the squared FC/projection weights.
    pub fn loss(&self, xs: &[&[u16]], ys: &[u16], mode: Mode) -> Result<f64, ModelError> {
        let cache = self.forward_cache(xs, mode, None)?;
        Ok(cross_entropy(&cache.log_probs, ys)? + self.config.fc_reg * self.params.penalized_sq_norm())
    }

    /// Loss, gradients and (in train mode) the batch statistics for the
    /// running batch-norm update.
    pub fn loss_and_gradient(
        &self,
        xs: &[&[u16]],
        ys: &[u16],
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Params<T>, Option<BatchStats<T>>), ModelError> {
        let cache = self.forward_cache(xs, mode, rng)?;
        let loss = cross_entropy(&cache.log_probs, ys)? + self.config.fc_reg * self.params.penalized_sq_norm();
        let grads = self.backward(&cache, ys);
        let stats = cache.bn.as_ref().filter(|_| mode == Mode::Train).map(|bn| BatchStats {
            mean: bn.mean.clone(),
            var: bn.var.clone(),
        });
        Ok((loss, grads, stats))
    }

    /// Blends batch statistics into the running ones.
    pub fn update_running_stats(&mut self, stats: &BatchStats<T>) {
        let mom: T = cast(BN_MOMENTUM);
        let rest = T::one() - mom;
        Zip::from(&mut self.params.bn_mean).and(&stats.mean).for_each(|r, &b| *r = mom * *r + rest * b);
        Zip::from(&mut self.params.bn_var).and(&stats.var).for_each(|r, &b| *r = mom * *r + rest * b);
    }

    fn sequences(&self, xs: &[&[u16]]) -> Result<SeqBatch, ModelError> {
        let b = xs.len();
        let t = xs.iter().map(|x| x.len() + 1).max().unwrap_or(1);
        let mut tokens = vec![self.vocab_size as u32; t * b];
        let mut starts = Vec::with_capacity(b);
        for (row, x) in xs.iter().enumerate() {
            if let Some(&bad) = x.iter().find(|&&v| v as usize >= self.vocab_size) {
                return Err(ModelError::IndexOutOfRange { index: bad as usize, size: self.vocab_size });
            }
            let start = t - (x.len() + 1);
            starts.push(start);
            let mut put = |k: usize, v: u16| tokens[(start + 1 + k) * b + row] = v as u32;
            if self.config.rnn_kind.is_backward() {
                x.iter().rev().enumerate().for_each(|(k, &v)| put(k, v));
            } else {
                x.iter().enumerate().for_each(|(k, &v)| put(k, v));
            }
        }
        Ok(SeqBatch { b, t, tokens, starts })
    }

    pub(crate) fn forward_cache(&self, xs: &[&[u16]], mode: Mode, mut rng: Option<&mut ChaCha8Rng>) -> Result<Cache<T>, ModelError> {
        if xs.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let p = &self.params;
        let seq = self.sequences(xs)?;
        let (b, t, h) = (seq.b, seq.t, self.hidden());
        let e = p.embedding.ncols();

        let mut x_all = Array2::<T>::zeros((t * b, e));
        for (r, &tok) in seq.tokens.iter().enumerate() {
            x_all.row_mut(r).assign(&p.embedding.row(tok as usize));
        }
        let mut zx = x_all.dot(&p.rnn_wx);
        zx += &p.rnn_b;

        let mut hs = vec![Array2::<T>::zeros((b, h))];
        let mut cs = vec![Array2::<T>::zeros((b, h))];
        let mut gates = Vec::with_capacity(t);
        let gru = self.config.rnn_kind.is_gru();
        for step in 0..t {
            let h_prev = &hs[step];
            let zx_t = zx.slice(s![step * b..(step + 1) * b, ..]);
            let (mut g, h_new, c_new) = if gru {
                let mut z = zx_t.to_owned();
                {
                    let mut zru = z.slice_mut(s![.., ..2 * h]);
                    general_mat_mul(T::one(), h_prev, &p.rnn_wh.slice(s![.., ..2 * h]), T::one(), &mut zru);
                    zru.mapv_inplace(sigmoid);
                }
                let rh = &z.slice(s![.., ..h]) * h_prev;
                {
                    let mut zn = z.slice_mut(s![.., 2 * h..]);
                    general_mat_mul(T::one(), &rh, &p.rnn_wh.slice(s![.., 2 * h..]), T::one(), &mut zn);
                    zn.mapv_inplace(Float::tanh);
                }
                let u = z.slice(s![.., h..2 * h]);
                let n = z.slice(s![.., 2 * h..]);
                let mut hn = Array2::zeros((b, h));
                Zip::from(&mut hn).and(&u).and(&n).and(h_prev).for_each(|o, &u, &n, &hp| {
                    *o = (T::one() - u) * n + u * hp;
                });
                (z, hn, Array2::zeros((0, 0)))
            } else {
                let mut z = zx_t.to_owned();
                general_mat_mul(T::one(), h_prev, &p.rnn_wh, T::one(), &mut z);
                z.slice_mut(s![.., ..2 * h]).mapv_inplace(sigmoid);
                z.slice_mut(s![.., 2 * h..3 * h]).mapv_inplace(Float::tanh);
                z.slice_mut(s![.., 3 * h..]).mapv_inplace(sigmoid);
                let mut cn = Array2::zeros((b, h));
                Zip::from(&mut cn)
                    .and(&z.slice(s![.., ..h]))
                    .and(&z.slice(s![.., h..2 * h]))
                    .and(&z.slice(s![.., 2 * h..3 * h]))
                    .and(&cs[step])
                    .for_each(|c, &i, &f, &g, &cp| *c = f * cp + i * g);
                let mut hn = Array2::zeros((b, h));
                Zip::from(&mut hn).and(&z.slice(s![.., 3 * h..])).and(&cn).for_each(|o, &og, &c| *o = og * c.tanh());
                (z, hn, cn)
            };
            let (mut h_new, mut c_new) = (h_new, c_new);
            for (row, &start) in seq.starts.iter().enumerate() {
                if step < start {
                    h_new.row_mut(row).fill(T::zero());
                    if !gru {
                        c_new.row_mut(row).fill(T::zero());
                    }
                    g.row_mut(row).fill(T::zero());
                }
            }
            gates.push(g);
            hs.push(h_new);
            cs.push(c_new);
        }

        let train = mode == Mode::Train;
        let mut a = hs[t].clone();
        let rnn_mask = match rng.as_deref_mut() {
            Some(r) if train && self.config.rnn_dropout > 0.0 => Some(dropout_mask(r, (b, h), self.config.rnn_dropout)),
            _ => None,
        };
        if let Some(m) = &rnn_mask {
            a *= m;
        }
        activate(&mut a, self.config.rnn_activation);
        let rnn_act = a.clone();

        let bn = if self.config.batch_norm {
            let eps: T = cast(BN_EPS);
            let (mean, var) = if train {
                let mean = a.mean_axis(Axis(0)).unwrap();
                let var = (&a - &mean).mapv(|v| v * v).mean_axis(Axis(0)).unwrap();
                (mean, var)
            } else {
                (p.bn_mean.clone(), p.bn_var.clone())
            };
            let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
            let xhat = (&a - &mean) * &inv_std;
            a = &xhat * &p.bn_gamma + &p.bn_beta;
            Some(BnCache { xhat, inv_std, mean, var, batch_stats: train })
        } else {
            None
        };

        let mut fc_inputs = Vec::with_capacity(p.fc.len());
        let mut fc_acts = Vec::with_capacity(p.fc.len());
        let mut fc_masks = Vec::with_capacity(p.fc.len());
        for d in &p.fc {
            let mut z = a.dot(&d.w);
            z += &d.b;
            activate(&mut z, self.config.fc_activation);
            let mask = match rng.as_deref_mut() {
                Some(r) if train && self.config.fc_dropout > 0.0 => Some(dropout_mask(r, (b, h), self.config.fc_dropout)),
                _ => None,
            };
            let out = match &mask {
                Some(m) => &z * m,
                None => z.clone(),
            };
            fc_inputs.push(std::mem::replace(&mut a, out));
            fc_acts.push(z);
            fc_masks.push(mask);
        }

        let mut logits = a.dot(&p.out.w);
        logits += &p.out.b;
        log_softmax_rows(&mut logits);
        Ok(Cache {
            seq,
            x_all,
            gates,
            hs,
            cs,
            rnn_mask,
            rnn_act,
            bn,
            fc_inputs,
            fc_acts,
            fc_masks,
            out_input: a,
            log_probs: logits,
        })
    }

    fn backward(&self, cache: &Cache<T>, ys: &[u16]) -> Params<T> {
        let p = &self.params;
        let mut g = p.zeros_like();
        let (b, t, h) = (cache.seq.b, cache.seq.t, self.hidden());
        let reg2: T = cast(2.0 * self.config.fc_reg);
        let inv_b: T = cast(1.0 / b as f64);

        let mut d = cache.log_probs.mapv(|v| v.exp() * inv_b);
        for (row, &y) in ys.iter().enumerate() {
            d[[row, y as usize]] = d[[row, y as usize]] - inv_b;
        }
        g.out.w = cache.out_input.t().dot(&d) + &p.out.w * reg2;
        g.out.b = d.sum_axis(Axis(0));
        let mut da = d.dot(&p.out.w.t());

        for (k, layer) in p.fc.iter().enumerate().rev() {
            if let Some(m) = &cache.fc_masks[k] {
                da *= m;
            }
            activation_backward(&mut da, &cache.fc_acts[k], self.config.fc_activation);
            g.fc[k].w = cache.fc_inputs[k].t().dot(&da) + &layer.w * reg2;
            g.fc[k].b = da.sum_axis(Axis(0));
            da = da.dot(&layer.w.t());
        }

        if let Some(bn) = &cache.bn {
            g.bn_gamma = (&da * &bn.xhat).sum_axis(Axis(0));
            g.bn_beta = da.sum_axis(Axis(0));
            let dxhat = &da * &p.bn_gamma;
            da = if bn.batch_stats {
                let n: T = cast(b as f64);
                let sum_d = dxhat.sum_axis(Axis(0));
                let sum_dx = (&dxhat * &bn.xhat).sum_axis(Axis(0));
                let inner = &dxhat * n - &sum_d - &bn.xhat * &sum_dx;
                inner * &bn.inv_std.mapv(|v| v / n)
            } else {
                dxhat * &bn.inv_std
            };
        }

        activation_backward(&mut da, &cache.rnn_act, self.config.rnn_activation);
        if let Some(m) = &cache.rnn_mask {
            da *= m;
        }

        // backpropagation through time
        let gh = self.config.rnn_kind.gates() * h;
        let gru = self.config.rnn_kind.is_gru();
        let mut dz_all = Array2::<T>::zeros((t * b, gh));
        let mut dh = da;
        let mut dc = Array2::<T>::zeros((b, h));
        for step in (0..t).rev() {
            for (row, &start) in cache.seq.starts.iter().enumerate() {
                if step < start {
                    dh.row_mut(row).fill(T::zero());
                    dc.row_mut(row).fill(T::zero());
                }
            }
            let gates = &cache.gates[step];
            let h_prev = &cache.hs[step];
            let mut dz = dz_all.slice_mut(s![step * b..(step + 1) * b, ..]);
            let mut dh_prev = Array2::<T>::zeros((b, h));
            if gru {
                let mut dzn = Array2::<T>::zeros((b, h));
                for row in 0..b {
                    let gr = gates.row(row);
                    let gr = gr.as_slice().unwrap();
                    let (u, n) = (&gr[h..2 * h], &gr[2 * h..]);
                    let hp = h_prev.row(row);
                    let hp = hp.as_slice().unwrap();
                    let dhr = dh.row(row);
                    let dhr = dhr.as_slice().unwrap();
                    let mut dzr = dz.row_mut(row);
                    let dzr = dzr.as_slice_mut().unwrap();
                    let mut dhp = dh_prev.row_mut(row);
                    let dhp = dhp.as_slice_mut().unwrap();
                    let mut dznr = dzn.row_mut(row);
                    let dznr = dznr.as_slice_mut().unwrap();
                    for j in 0..h {
                        dznr[j] = dhr[j] * (T::one() - u[j]) * (T::one() - n[j] * n[j]);
                        dzr[h + j] = dhr[j] * (hp[j] - n[j]) * u[j] * (T::one() - u[j]);
                        dzr[2 * h + j] = dznr[j];
                        dhp[j] = dhr[j] * u[j];
                    }
                }
                let rh = &gates.slice(s![.., ..h]) * h_prev;
                let drh = dzn.dot(&p.rnn_wh.slice(s![.., 2 * h..]).t());
                general_mat_mul(T::one(), &rh.t(), &dzn, T::one(), &mut g.rnn_wh.slice_mut(s![.., 2 * h..]));
                for row in 0..b {
                    for j in 0..h {
                        let r = gates[[row, j]];
                        let d = drh[[row, j]];
                        dz[[row, j]] = d * h_prev[[row, j]] * r * (T::one() - r);
                        dh_prev[[row, j]] = dh_prev[[row, j]] + d * r;
                    }
                }
                let dzru = dz.slice(s![.., ..2 * h]);
                general_mat_mul(T::one(), &h_prev.t(), &dzru, T::one(), &mut g.rnn_wh.slice_mut(s![.., ..2 * h]));
                general_mat_mul(T::one(), &dzru, &p.rnn_wh.slice(s![.., ..2 * h]).t(), T::one(), &mut dh_prev);
            } else {
                let c = &cache.cs[step + 1];
                let c_prev = &cache.cs[step];
                for row in 0..b {
                    let gr = gates.row(row);
                    let gr = gr.as_slice().unwrap();
                    let cr = c.row(row);
                    let cr = cr.as_slice().unwrap();
                    let cpr = c_prev.row(row);
                    let cpr = cpr.as_slice().unwrap();
                    let dhr = dh.row(row);
                    let dhr = dhr.as_slice().unwrap();
                    let mut dzr = dz.row_mut(row);
                    let dzr = dzr.as_slice_mut().unwrap();
                    let mut dcr = dc.row_mut(row);
                    let dcr = dcr.as_slice_mut().unwrap();
                    for j in 0..h {
                        let (i, f, gg, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                        let tc = cr[j].tanh();
                        let dct = dcr[j] + dhr[j] * o * (T::one() - tc * tc);
                        dzr[j] = dct * gg * i * (T::one() - i);
                        dzr[h + j] = dct * cpr[j] * f * (T::one() - f);
                        dzr[2 * h + j] = dct * i * (T::one() - gg * gg);
                        dzr[3 * h + j] = dhr[j] * tc * o * (T::one() - o);
                        // dc now carries the gradient into the previous cell
                        dcr[j] = dct * f;
                    }
                }
                general_mat_mul(T::one(), &h_prev.t(), &dz, T::one(), &mut g.rnn_wh);
                general_mat_mul(T::one(), &dz, &p.rnn_wh.t(), T::zero(), &mut dh_prev);
            }
            dh = dh_prev;
        }
        g.rnn_wx = cache.x_all.t().dot(&dz_all);
        g.rnn_b = dz_all.sum_axis(Axis(0));
        if is_trainable("embedding", &self.options) {
            let dx = dz_all.dot(&p.rnn_wx.t());
            for (r, &tok) in cache.seq.tokens.iter().enumerate() {
                let step = r / b;
                if step >= cache.seq.starts[r % b] {
                    let mut row = g.embedding.row_mut(tok as usize);
                    row += &dx.row(r);
                }
            }
        }
        g
    }
}

pub struct BatchStats<T> {
    pub mean: Array1<T>,
    pub var: Array1<T>,
}

struct SeqBatch {
    b: usize,
    t: usize,
    /// time-major: step * b + row
    tokens: Vec<u32>,
    /// first active step per row
    starts: Vec<usize>,
}

struct BnCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
    mean: Array1<T>,
    var: Array1<T>,
    batch_stats: bool,
}

pub(crate) struct Cache<T> {
    seq: SeqBatch,
    x_all: Array2<T>,
    gates: Vec<Array2<T>>,
    hs: Vec<Array2<T>>,
    cs: Vec<Array2<T>>,
    rnn_mask: Option<Array2<T>>,
    rnn_act: Array2<T>,
    bn: Option<BnCache<T>>,
    fc_inputs: Vec<Array2<T>>,
    fc_acts: Vec<Array2<T>>,
    fc_masks: Vec<Option<Array2<T>>>,
    out_input: Array2<T>,
    pub(crate) log_probs: Array2<T>,
}

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

fn dropout_mask<T: Real>(rng: &mut ChaCha8Rng, shape: (usize, usize), rate: f64) -> Array2<T> {
    let keep = 1.0 - rate;
    let scale: T = cast(1.0 / keep);
    Array2::from_shape_fn(shape, |_| if rng.random::<f64>() < keep { scale } else { T::zero() })
}

fn softmax_rows<T: Real>(a: &mut Array2<T>) {
    for mut row in a.rows_mut() {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn log_softmax_rows<T: Real>(a: &mut Array2<T>) {
    for mut row in a.rows_mut() {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = max + row.fold(T::zero(), |s, &v| s + (v - max).exp()).ln();
        row.mapv_inplace(|v| v - lse);
    }
}

fn activate<T: Real>(a: &mut Array2<T>, act: Activation) {
    match act {
        Activation::Relu => a.mapv_inplace(|v| v.max(T::zero())),
        Activation::Tanh => a.mapv_inplace(Float::tanh),
        Activation::Linear => {}
        Activation::Softmax => softmax_rows(a),
    }
}

/// `d` holds dL/dy on entry and dL/dz on return, given `y = act(z)`.
fn activation_backward<T: Real>(d: &mut Array2<T>, y: &Array2<T>, act: Activation) {
    match act {
        Activation::Relu => Zip::from(d).and(y).for_each(|d, &y| {
            if y <= T::zero() {
                *d = T::zero()
            }
        }),
        Activation::Tanh => Zip::from(d).and(y).for_each(|d, &y| *d = *d * (T::one() - y * y)),
        Activation::Linear => {}
        Activation::Softmax => {
            for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                let dot = drow.iter().zip(yrow.iter()).fold(T::zero(), |s, (&a, &b)| s + a * b);
                Zip::from(&mut drow).and(&yrow).for_each(|d, &y| *d = y * (*d - dot));
            }
        }
    }
}

/// Mean negative log-likelihood of `ys` under row-wise log-probabilities.
pub fn cross_entropy<T: Real>(log_probs: &Array2<T>, ys: &[u16]) -> Result<f64, ModelError> {
    if ys.len() != log_probs.nrows() || ys.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut total = 0.0;
    for (row, &y) in ys.iter().enumerate() {
        if y as usize >= log_probs.ncols() {
            return Err(ModelError::IndexOutOfRange { index: y as usize, size: log_probs.ncols() });
        }
        total -= log_probs[[row, y as usize]].to_f64().unwrap();
    }
    Ok(total / ys.len() as f64)
}

/// Probabilities of one row of log-probabilities, computed in f64.
pub fn row_probs<T: Real>(log_probs: ArrayView2<T>, row: usize) -> Vec<f64> {
    let lp: Vec<f64> = log_probs.row(row).iter().map(|v| v.to_f64().unwrap()).collect();
    let max = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = lp.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= sum);
    p
}
