//! Post-norm transformer encoder with a token head and a marker-pooled
//! sequence head. Backward passes are written out by hand.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Init, ParamLayout, TOKEN_CLASSES};
use super::{EncoderConfig, EncoderError};
use crate::preproc::LabeledSequence;
use crate::scalar::Scalar;

const INIT_RANGE: f64 = 0.02;
const LN_EPS: f64 = 1e-5;

/// Encoder parameters plus the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel<S: Scalar> {
    config: EncoderConfig,
    n_classes: usize,
    layout: ParamLayout,
    params: Vec<S>,
}

/// Gradient buffer laid out exactly like [`EncoderModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S: Scalar>(pub Vec<S>);

impl<S: Scalar> Gradients<S> {
    pub fn zeros(len: usize) -> Self {
        Gradients(vec![S::zero(); len])
    }

    pub fn norm(&self) -> S {
        self.0.iter().map(|&g| g * g).sum::<S>().sqrt()
    }

    pub fn add_assign(&mut self, other: &Gradients<S>) {
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: S) {
        for g in &mut self.0 {
            *g *= k;
        }
    }
}

struct NormCache<S> {
    xhat: Array2<S>,
    inv_std: Array1<S>,
}

struct LayerCache<S> {
    input: Array2<S>,
    q: Array2<S>,
    k: Array2<S>,
    v: Array2<S>,
    probs: Vec<Array2<S>>,
    prob_masks: Option<Vec<Array2<S>>>,
    ctx: Array2<S>,
    norm1: NormCache<S>,
    x1: Array2<S>,
    pre_act: Array2<S>,
    act_mask: Option<Array2<S>>,
    act: Array2<S>,
    norm2: NormCache<S>,
}

/// Activations kept from a forward pass for the backward pass.
pub(crate) struct ForwardCache<S> {
    ids: Vec<usize>,
    emb_mask: Option<Array2<S>>,
    layers: Vec<LayerCache<S>>,
    pub output: Array2<S>,
}

fn gelu<S: Scalar>(x: S) -> S {
    let c = S::of((2.0 / std::f64::consts::PI).sqrt());
    let a = S::of(0.044715);
    let half = S::of(0.5);
    half * x * (S::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<S: Scalar>(x: S) -> S {
    let c = S::of((2.0 / std::f64::consts::PI).sqrt());
    let a = S::of(0.044715);
    let half = S::of(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (S::one() + t) + half * x * (S::one() - t * t) * c * (S::one() + S::of(3.0) * a * x * x)
}

fn layer_norm<S: Scalar>(r: &Array2<S>, gain: ArrayView1<S>, bias: ArrayView1<S>) -> (Array2<S>, NormCache<S>) {
    let h = S::of(r.ncols() as f64);
    let eps = S::of(LN_EPS);
    let mut xhat = r.clone();
    let mut inv_std = Array1::zeros(r.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / h;
        row.mapv_inplace(|x| x - mean);
        let var = row.iter().map(|&x| x * x).sum::<S>() / h;
        *inv = S::one() / (var + eps).sqrt();
        let k = *inv;
        row.mapv_inplace(|x| x * k);
    }
    let y = &xhat * &gain + bias;
    (y, NormCache { xhat, inv_std })
}

/// Returns d(input); accumulates gain and bias gradients.
fn layer_norm_backward<S: Scalar>(
    dy: &Array2<S>,
    cache: &NormCache<S>,
    gain: ArrayView1<S>,
    d_gain: &mut [S],
    d_bias: &mut [S],
) -> Array2<S> {
    let h = S::of(dy.ncols() as f64);
    for (row_dy, row_xh) in dy.rows().into_iter().zip(cache.xhat.rows()) {
        for j in 0..row_dy.len() {
            d_gain[j] += row_dy[j] * row_xh[j];
            d_bias[j] += row_dy[j];
        }
    }
    let mut dx = dy * &gain;
    for ((mut row, xh), &inv) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.inv_std) {
        let mean_d = row.sum() / h;
        let mean_dx = row.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<S>() / h;
        Zip::from(&mut row).and(&xh).for_each(|d, &x| {
            *d = inv * (*d - mean_d - x * mean_dx);
        });
    }
    dx
}

fn dropout_mask<S: Scalar>(shape: (usize, usize), rate: f64, rng: &mut ChaCha8Rng) -> Array2<S> {
    let keep = S::of(1.0 / (1.0 - rate));
    Array2::from_shape_simple_fn(shape, || {
        if rng.gen::<f64>() < rate {
            S::zero()
        } else {
            keep
        }
    })
}

fn softmax_rows<S: Scalar>(scores: &mut Array2<S>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().fold(S::neg_infinity(), |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let z = row.sum();
        row.mapv_inplace(|x| x / z);
    }
}

fn add_rows<S: Scalar>(m: &mut Array2<S>, bias: ArrayView1<S>) {
    for mut row in m.rows_mut() {
        row += &bias;
    }
}

fn accumulate<S: Scalar>(dst: &mut [S], src: impl IntoIterator<Item = S>) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn column_sums<S: Scalar>(m: &Array2<S>) -> Array1<S> {
    m.sum_axis(Axis(0))
}

impl<S: Scalar> EncoderModel<S> {
    /// Draws weights from a seeded uniform(-0.02, 0.02); biases start at zero
    /// and layer-norm gains at one. `n_classes` sizes the sequence head and
    /// may be zero for a tagging-only model.
    pub fn init(cfg: EncoderConfig, n_classes: usize) -> Result<Self, EncoderError> {
        cfg.validate()?;
        if cfg.precision != S::PRECISION {
            return Err(EncoderError::Config(format!(
                "config asks for {}-bit parameters but the model type is {}-bit",
                cfg.precision, S::PRECISION
            )));
        }
        let layout = ParamLayout::new(&cfg, n_classes);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = vec![S::zero(); layout.total];
        for t in &layout.tensors {
            let slot = &mut params[t.range()];
            match t.init {
                Init::Uniform => {
                    for p in slot {
                        *p = S::of(rng.gen_range(-INIT_RANGE..INIT_RANGE));
                    }
                }
                Init::Zeros => {}
                Init::Ones => slot.fill(S::one()),
            }
        }
        Ok(EncoderModel {
            config: cfg,
            n_classes,
            layout,
            params,
        })
    }

    /// Reassembles a model from stored parameters.
    pub fn from_parts(cfg: EncoderConfig, n_classes: usize, params: Vec<S>) -> Result<Self, EncoderError> {
        cfg.validate()?;
        let layout = ParamLayout::new(&cfg, n_classes);
        if params.len() != layout.total {
            return Err(EncoderError::Config(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(EncoderError::Numeric("non-finite parameter".into()));
        }
        Ok(EncoderModel {
            config: cfg,
            n_classes,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    fn mat(&self, off: usize, rows: usize, cols: usize) -> ArrayView2<'_, S> {
        ArrayView2::from_shape((rows, cols), &self.params[off..off + rows * cols]).expect("layout shape")
    }

    fn vector(&self, off: usize, len: usize) -> ArrayView1<'_, S> {
        ArrayView1::from(&self.params[off..off + len])
    }

    fn linear(&self, x: &Array2<S>, w: usize, b: usize, out: usize) -> Array2<S> {
        let mut y = x.dot(&self.mat(w, x.ncols(), out));
        add_rows(&mut y, self.vector(b, out));
        y
    }

    fn check_input(&self, seq: &LabeledSequence) -> Result<Vec<usize>, EncoderError> {
        if seq.len() > self.config.max_len {
            return Err(EncoderError::Length {
                len: seq.len(),
                max_len: self.config.max_len,
            });
        }
        let n = seq.effective_len();
        if n == 0 {
            return Err(EncoderError::Length { len: 0, max_len: self.config.max_len });
        }
        seq.subtoken_ids[..n]
            .iter()
            .map(|&id| {
                let id = id as usize;
                if id < self.config.vocab_size {
                    Ok(id)
                } else {
                    Err(EncoderError::Index(format!(
                        "token id {id} outside vocabulary of {}",
                        self.config.vocab_size
                    )))
                }
            })
            .collect()
    }

    /// Runs the encoder stack; positions past the last unmasked one are not
    /// computed. `rng` enables dropout.
    pub(crate) fn forward_cached(
        &self,
        seq: &LabeledSequence,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardCache<S>, EncoderError> {
        let ids = self.check_input(seq)?;
        let n = ids.len();
        let h = self.config.hidden_dim;
        let f = self.config.ffn_dim;
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let rate = self.config.dropout_rate;
        let dropping = rng.is_some() && rate > 0.0;
        let scale = S::one() / S::of(dh as f64).sqrt();

        let tok = self.mat(self.layout.token_emb, self.config.vocab_size, h);
        let pos = self.mat(self.layout.pos_emb, self.config.max_len, h);
        let mut x = Array2::zeros((n, h));
        for (i, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(i);
            row.assign(&tok.row(id));
            row += &pos.row(i);
        }
        let emb_mask = match rng.as_deref_mut() {
            Some(r) if dropping => {
                let m = dropout_mask::<S>((n, h), rate, r);
                x *= &m;
                Some(m)
            }
            _ => None,
        };

        let key_masked: Vec<bool> = seq.attention_mask[..n].iter().map(|&m| m == 0).collect();
        let mut layers = Vec::with_capacity(self.layout.layers.len());
        for lo in &self.layout.layers {
            let q = self.linear(&x, lo.q_w, lo.q_b, h);
            let k = self.linear(&x, lo.k_w, lo.k_b, h);
            let v = self.linear(&x, lo.v_w, lo.v_b, h);
            let mut ctx = Array2::zeros((n, h));
            let mut probs = Vec::with_capacity(heads);
            let mut prob_masks = dropping.then(Vec::new);
            for hd in 0..heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                for mut row in scores.rows_mut() {
                    for (j, masked) in key_masked.iter().enumerate() {
                        if *masked {
                            row[j] = S::neg_infinity();
                        }
                    }
                }
                softmax_rows(&mut scores);
                let head_out = match (&mut prob_masks, rng.as_deref_mut()) {
                    (Some(masks), Some(r)) => {
                        let m = dropout_mask::<S>((n, n), rate, r);
                        let out = (&scores * &m).dot(&v.slice(cols));
                        masks.push(m);
                        out
                    }
                    _ => scores.dot(&v.slice(cols)),
                };
                ctx.slice_mut(cols).assign(&head_out);
                probs.push(scores);
            }
            let attn = self.linear(&ctx, lo.o_w, lo.o_b, h);
            let (x1, norm1) = layer_norm(&(&x + &attn), self.vector(lo.ln1_g, h), self.vector(lo.ln1_b, h));

            let pre_act = self.linear(&x1, lo.ff1_w, lo.ff1_b, f);
            let mut act = pre_act.mapv(gelu);
            let act_mask = match rng.as_deref_mut() {
                Some(r) if dropping => {
                    let m = dropout_mask::<S>((n, f), rate, r);
                    act *= &m;
                    Some(m)
                }
                _ => None,
            };
            let ffn = self.linear(&act, lo.ff2_w, lo.ff2_b, h);
            let (x2, norm2) = layer_norm(&(&x1 + &ffn), self.vector(lo.ln2_g, h), self.vector(lo.ln2_b, h));

            layers.push(LayerCache {
                input: x,
                q,
                k,
                v,
                probs,
                prob_masks,
                ctx,
                norm1,
                x1,
                pre_act,
                act_mask,
                act,
                norm2,
            });
            x = x2;
        }
        Ok(ForwardCache {
            ids,
            emb_mask,
            layers,
            output: x,
        })
    }

    /// Hidden states for every computed position, dropout off.
    pub fn forward(&self, seq: &LabeledSequence) -> Result<Array2<S>, EncoderError> {
        Ok(self.forward_cached(seq, None)?.output)
    }

    /// Attention probabilities per layer and head, dropout off.
    pub fn attention_maps(&self, seq: &LabeledSequence) -> Result<Vec<Vec<Array2<S>>>, EncoderError> {
        let cache = self.forward_cached(seq, None)?;
        Ok(cache.layers.into_iter().map(|l| l.probs).collect())
    }

    /// Per-position logits over B, I, O.
    pub fn token_logits(&self, hidden: &Array2<S>) -> Array2<S> {
        self.linear(hidden, self.layout.tok_head_w, self.layout.tok_head_b, TOKEN_CLASSES)
    }

    /// Concatenation of the `[CLS]`, `[S]` and `[E]` hidden states.
    pub fn pooled_features(&self, hidden: &Array2<S>, s_pos: usize, e_pos: usize) -> Result<Array1<S>, EncoderError> {
        let n = hidden.nrows();
        if s_pos >= n || e_pos >= n {
            return Err(EncoderError::Index(format!(
                "marker positions ({s_pos}, {e_pos}) outside {n} computed positions"
            )));
        }
        let h = self.config.hidden_dim;
        let mut feat = Array1::zeros(3 * h);
        feat.slice_mut(s![..h]).assign(&hidden.row(0));
        feat.slice_mut(s![h..2 * h]).assign(&hidden.row(s_pos));
        feat.slice_mut(s![2 * h..]).assign(&hidden.row(e_pos));
        Ok(feat)
    }

    /// Sequence-head logits from the pooled marker features.
    pub fn sequence_logits(&self, hidden: &Array2<S>, s_pos: usize, e_pos: usize) -> Result<Array1<S>, EncoderError> {
        if self.n_classes == 0 {
            return Err(EncoderError::Config("model has no sequence head".into()));
        }
        let feat = self.pooled_features(hidden, s_pos, e_pos)?;
        let w = self.mat(self.layout.seq_head_w, 3 * self.config.hidden_dim, self.n_classes);
        Ok(feat.dot(&w) + self.vector(self.layout.seq_head_b, self.n_classes))
    }

    /// Backward for the token head: accumulates head gradients, returns d(hidden).
    pub(crate) fn token_head_backward(&self, hidden: &Array2<S>, d_logits: &Array2<S>, grads: &mut [S]) -> Array2<S> {
        let h = self.config.hidden_dim;
        let w_off = self.layout.tok_head_w;
        let b_off = self.layout.tok_head_b;
        {
            let mut gw = grad_mat(grads, w_off, h, TOKEN_CLASSES);
            general_mat_mul(S::one(), &hidden.t(), d_logits, S::one(), &mut gw);
        }
        accumulate(&mut grads[b_off..b_off + TOKEN_CLASSES], column_sums(d_logits));
        d_logits.dot(&self.mat(w_off, h, TOKEN_CLASSES).t())
    }

    /// Backward for the sequence head: returns d(hidden) for the computed positions.
    pub(crate) fn sequence_head_backward(
        &self,
        hidden: &Array2<S>,
        s_pos: usize,
        e_pos: usize,
        d_logits: &Array1<S>,
        grads: &mut [S],
    ) -> Result<Array2<S>, EncoderError> {
        let h = self.config.hidden_dim;
        let c = self.n_classes;
        let feat = self.pooled_features(hidden, s_pos, e_pos)?;
        let w_off = self.layout.seq_head_w;
        for i in 0..3 * h {
            let row = &mut grads[w_off + i * c..w_off + (i + 1) * c];
            for (g, &d) in row.iter_mut().zip(d_logits) {
                *g += feat[i] * d;
            }
        }
        let b_off = self.layout.seq_head_b;
        accumulate(&mut grads[b_off..b_off + c], d_logits.iter().copied());
        let d_feat = self.mat(w_off, 3 * h, c).dot(d_logits);
        let mut d_hidden = Array2::zeros(hidden.raw_dim());
        for (slot, pos) in [0, s_pos, e_pos].into_iter().enumerate() {
            let mut row = d_hidden.row_mut(pos);
            row += &d_feat.slice(s![slot * h..(slot + 1) * h]);
        }
        Ok(d_hidden)
    }

    /// Backpropagates d(hidden) through the stack into `grads`.
    pub(crate) fn backward(&self, cache: &ForwardCache<S>, d_out: Array2<S>, grads: &mut [S]) {
        let h = self.config.hidden_dim;
        let f = self.config.ffn_dim;
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let scale = S::one() / S::of(dh as f64).sqrt();
        let mut d = d_out;

        for (lc, lo) in cache.layers.iter().zip(&self.layout.layers).rev() {
            let d_r2 = {
                let (g_gain, g_bias) = split_pair(grads, lo.ln2_g, lo.ln2_b, h);
                layer_norm_backward(&d, &lc.norm2, self.vector(lo.ln2_g, h), g_gain, g_bias)
            };
            // feed-forward block
            let mut d_x1 = d_r2.clone();
            self.linear_backward_params(&lc.act, &d_r2, lo.ff2_w, lo.ff2_b, f, h, grads);
            let mut d_act = d_r2.dot(&self.mat(lo.ff2_w, f, h).t());
            if let Some(m) = &lc.act_mask {
                d_act *= m;
            }
            Zip::from(&mut d_act).and(&lc.pre_act).for_each(|g, &x| *g *= gelu_grad(x));
            self.linear_backward_params(&lc.x1, &d_act, lo.ff1_w, lo.ff1_b, h, f, grads);
            d_x1 += &d_act.dot(&self.mat(lo.ff1_w, h, f).t());

            let d_r1 = {
                let (g_gain, g_bias) = split_pair(grads, lo.ln1_g, lo.ln1_b, h);
                layer_norm_backward(&d_x1, &lc.norm1, self.vector(lo.ln1_g, h), g_gain, g_bias)
            };
            // attention block
            let mut d_x = d_r1.clone();
            self.linear_backward_params(&lc.ctx, &d_r1, lo.o_w, lo.o_b, h, h, grads);
            let d_ctx = d_r1.dot(&self.mat(lo.o_w, h, h).t());
            let n = d_ctx.nrows();
            let mut d_q = Array2::zeros((n, h));
            let mut d_k = Array2::zeros((n, h));
            let mut d_v = Array2::zeros((n, h));
            for hd in 0..heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let p = &lc.probs[hd];
                let d_ctx_h = d_ctx.slice(cols);
                let pd = match &lc.prob_masks {
                    Some(ms) => p * &ms[hd],
                    None => p.clone(),
                };
                d_v.slice_mut(cols).assign(&pd.t().dot(&d_ctx_h));
                let mut d_p = d_ctx_h.dot(&lc.v.slice(cols).t());
                if let Some(ms) = &lc.prob_masks {
                    d_p *= &ms[hd];
                }
                // softmax backward, row by row
                let mut d_s = d_p;
                for (mut ds_row, p_row) in d_s.rows_mut().into_iter().zip(p.rows()) {
                    let dot = ds_row.iter().zip(p_row.iter()).map(|(&a, &b)| a * b).sum::<S>();
                    Zip::from(&mut ds_row).and(&p_row).for_each(|g, &pv| *g = pv * (*g - dot) * scale);
                }
                d_q.slice_mut(cols).assign(&d_s.dot(&lc.k.slice(cols)));
                d_k.slice_mut(cols).assign(&d_s.t().dot(&lc.q.slice(cols)));
            }
            for (dy, w, b) in [(&d_q, lo.q_w, lo.q_b), (&d_k, lo.k_w, lo.k_b), (&d_v, lo.v_w, lo.v_b)] {
                self.linear_backward_params(&lc.input, dy, w, b, h, h, grads);
                d_x += &dy.dot(&self.mat(w, h, h).t());
            }
            d = d_x;
        }

        if let Some(m) = &cache.emb_mask {
            d *= m;
        }
        let tok = self.layout.token_emb;
        let pos = self.layout.pos_emb;
        for (i, &id) in cache.ids.iter().enumerate() {
            let row = d.row(i);
            accumulate(&mut grads[tok + id * h..tok + (id + 1) * h], row.iter().copied());
            accumulate(&mut grads[pos + i * h..pos + (i + 1) * h], row.iter().copied());
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn linear_backward_params(
        &self,
        x: &Array2<S>,
        dy: &Array2<S>,
        w_off: usize,
        b_off: usize,
        rows: usize,
        cols: usize,
        grads: &mut [S],
    ) {
        {
            let mut gw = grad_mat(grads, w_off, rows, cols);
            general_mat_mul(S::one(), &x.t(), dy, S::one(), &mut gw);
        }
        accumulate(&mut grads[b_off..b_off + cols], column_sums(dy));
    }
}

fn grad_mat<S: Scalar>(grads: &mut [S], off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, S> {
    ArrayViewMut2::from_shape((rows, cols), &mut grads[off..off + rows * cols]).expect("layout shape")
}

/// Disjoint mutable slices for a layer-norm gain and its bias.
fn split_pair<S>(grads: &mut [S], gain: usize, bias: usize, len: usize) -> (&mut [S], &mut [S]) {
    debug_assert!(gain + len <= bias);
    let (head, tail) = grads.split_at_mut(bias);
    (&mut head[gain..gain + len], &mut tail[..len])
}
