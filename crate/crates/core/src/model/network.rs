use ndarray::{Array1, Array2, Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::Sample;
use super::layers::{gelu, gelu_grad, layer_norm, layer_norm_backward, NormCache};
use super::{ModelConfig, Task};
use crate::attention::{
    pde_attention_backward, pde_attention_forward, softmax_rows, AttentionTape, ProjectionWeights,
};
use crate::error::{Error, Result};
use crate::metrics::log_sum_exp;
use crate::pde::{Coefficients, PdeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub attn: ProjectionWeights,
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub ff_w1: Array2<f64>,
    pub ff_b1: Array1<f64>,
    pub ff_w2: Array2<f64>,
    pub ff_b2: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

fn uniform<R: Rng>(shape: (usize, usize), bound: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.random_range(-bound..bound))
}

fn slice_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_memory_order_mut()
        .expect("parameters are stored contiguously")
}

fn slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice_memory_order()
        .expect("parameters are stored contiguously")
}

impl LayerParams {
    fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        let (d, h) = (cfg.d_model, cfg.d_hidden);
        Ok(LayerParams {
            attn: ProjectionWeights::init(d, cfg.n_heads, &cfg.pde, rng)?,
            ln1_gain: Array1::ones(d),
            ln1_bias: Array1::zeros(d),
            ff_w1: uniform((d, h), 1.0 / (d as f64).sqrt(), rng),
            ff_b1: Array1::zeros(h),
            ff_w2: uniform((h, d), 1.0 / (h as f64).sqrt(), rng),
            ff_b2: Array1::zeros(d),
            ln2_gain: Array1::ones(d),
            ln2_bias: Array1::zeros(d),
        })
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for w in [
            &mut self.attn.w_q,
            &mut self.attn.w_k,
            &mut self.attn.w_v,
            &mut self.attn.w_o,
            &mut self.ff_w1,
            &mut self.ff_w2,
        ] {
            f(slice_mut(w));
        }
        for b in [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.ff_b1,
            &mut self.ff_b2,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ] {
            f(slice_mut(b));
        }
        for k in &mut self.attn.coeffs {
            let mut buf = [k.alpha, k.beta, k.c];
            f(&mut buf);
            *k = Coefficients {
                alpha: buf[0],
                beta: buf[1],
                c: buf[2],
            };
        }
    }

    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for w in [
            &self.attn.w_q,
            &self.attn.w_k,
            &self.attn.w_v,
            &self.attn.w_o,
            &self.ff_w1,
            &self.ff_w2,
        ] {
            f(slice(w));
        }
        for b in [
            &self.ln1_gain,
            &self.ln1_bias,
            &self.ff_b1,
            &self.ff_b2,
            &self.ln2_gain,
            &self.ln2_bias,
        ] {
            f(slice(b));
        }
        for k in &self.attn.coeffs {
            f(&[k.alpha, k.beta, k.c]);
        }
    }
}

impl ModelParams {
    /// Fan-in scaled uniform initialisation; layer norms start at identity.
    pub fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let tok_emb = uniform((cfg.vocab_size, d), 1.0, rng);
        let pos_emb = uniform((cfg.max_seq_len, d), 1.0, rng);
        let layers = (0..cfg.n_layers)
            .map(|_| LayerParams::init(cfg, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelParams {
            tok_emb,
            pos_emb,
            layers,
            out_w: uniform((d, cfg.n_outputs()), 1.0 / (d as f64).sqrt(), rng),
            out_b: Array1::zeros(cfg.n_outputs()),
        })
    }

    /// Visit every parameter block in a fixed order.
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(slice_mut(&mut self.tok_emb));
        f(slice_mut(&mut self.pos_emb));
        for l in &mut self.layers {
            l.visit_mut(f);
        }
        f(slice_mut(&mut self.out_w));
        f(slice_mut(&mut self.out_b));
    }

    pub fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(slice(&self.tok_emb));
        f(slice(&self.pos_emb));
        for l in &self.layers {
            l.visit(f);
        }
        f(slice(&self.out_w));
        f(slice(&self.out_b));
    }

    pub fn len(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    pub fn assign(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::shape(self.len().to_string(), values.len().to_string()));
        }
        let mut at = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&values[at..at + s.len()]);
            at += s.len();
        });
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |s| s.fill(0.0));
        z
    }

    /// L2 norms of the embedding block, each layer, and the output block.
    pub fn group_norms(&self) -> Vec<f64> {
        let norm = |visit: &dyn Fn(&mut dyn FnMut(&[f64]))| {
            let mut acc = 0.0;
            visit(&mut |s| acc += s.iter().map(|x| x * x).sum::<f64>());
            acc.sqrt()
        };
        let mut out = vec![norm(&|f| {
            f(slice(&self.tok_emb));
            f(slice(&self.pos_emb));
        })];
        for l in &self.layers {
            out.push(norm(&|f| l.visit(f)));
        }
        out.push(norm(&|f| {
            f(slice(&self.out_w));
            f(slice(&self.out_b));
        }));
        out
    }
}

/// Batched forward output.
#[derive(Debug, Clone, PartialEq)]
pub enum Logits {
    /// `(batch, seq, vocab)` for language modelling.
    Sequence(Array3<f64>),
    /// `(batch, classes)` for classification.
    Classes(Array2<f64>),
}

#[derive(Debug, Clone)]
struct LayerCache {
    attn: AttentionTape,
    ln1: NormCache,
    h: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    ln2: NormCache,
}

#[derive(Debug, Clone)]
struct ForwardCache {
    tokens: Vec<usize>,
    layers: Vec<LayerCache>,
    last: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let params = ModelParams::init(&config, rng)?;
        Ok(Model { config, params })
    }

    fn pde(&self) -> PdeConfig {
        self.config.attention_pde()
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        let n = tokens.len();
        if n < 2 || n > self.config.max_seq_len {
            return Err(Error::InvalidInput(format!(
                "sequence length {n} outside 2..={}",
                self.config.max_seq_len
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::InvalidInput(format!(
                "token id {bad} out of vocabulary of size {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    fn forward_cached(&self, tokens: &[usize]) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_tokens(tokens)?;
        let p = &self.params;
        let cfg = &self.config;
        let pde = self.pde();
        let mask = cfg.mask();
        let n = tokens.len();
        let mut x = Array2::zeros((n, cfg.d_model));
        for (i, (mut row, &tok)) in x.axis_iter_mut(Axis(0)).zip(tokens).enumerate() {
            row.assign(&(&p.tok_emb.row(tok) + &p.pos_emb.row(i)));
        }
        let mut layers = Vec::with_capacity(p.layers.len());
        for lp in &p.layers {
            let (a, attn) = pde_attention_forward(&x, &lp.attn, &pde, &mask)?;
            let (h, ln1) = layer_norm(&(&x + &a), &lp.ln1_gain, &lp.ln1_bias, cfg.layer_norm_eps);
            let ff_pre = h.dot(&lp.ff_w1) + &lp.ff_b1;
            let ff_act = ff_pre.mapv(gelu);
            let f = ff_act.dot(&lp.ff_w2) + &lp.ff_b2;
            let (next, ln2) = layer_norm(&(&h + &f), &lp.ln2_gain, &lp.ln2_bias, cfg.layer_norm_eps);
            layers.push(LayerCache {
                attn,
                ln1,
                h,
                ff_pre,
                ff_act,
                ln2,
            });
            x = next;
        }
        let logits = match cfg.task {
            Task::CausalLm => x.dot(&p.out_w) + &p.out_b,
            Task::Classification => {
                let pooled = x.mean_axis(Axis(0)).expect("n >= 2").insert_axis(Axis(0));
                pooled.dot(&p.out_w) + &p.out_b
            }
        };
        let cache = ForwardCache {
            tokens: tokens.to_vec(),
            layers,
            last: x,
        };
        Ok((logits, cache))
    }

    /// Logits for one sequence: `(seq, vocab)` or `(1, classes)`.
    pub fn forward_one(&self, tokens: &[usize]) -> Result<Array2<f64>> {
        Ok(self.forward_cached(tokens)?.0)
    }

    /// Batched forward. Language-model batches must share one length.
    pub fn forward(&self, batch: &[Vec<usize>]) -> Result<Logits> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let outs = batch
            .iter()
            .map(|t| self.forward_one(t))
            .collect::<Result<Vec<_>>>()?;
        match self.config.task {
            Task::CausalLm => {
                let (n, v) = outs[0].dim();
                let mut out = Array3::zeros((batch.len(), n, v));
                for (b, o) in outs.iter().enumerate() {
                    if o.dim() != (n, v) {
                        return Err(Error::shape(format!("({n}, {v})"), format!("{:?}", o.dim())));
                    }
                    out.index_axis_mut(Axis(0), b).assign(o);
                }
                Ok(Logits::Sequence(out))
            }
            Task::Classification => {
                let mut out = Array2::zeros((batch.len(), self.config.n_classes));
                for (b, o) in outs.iter().enumerate() {
                    out.row_mut(b).assign(&o.row(0));
                }
                Ok(Logits::Classes(out))
            }
        }
    }

    fn backward(&self, cache: &ForwardCache, dlogits: &Array2<f64>) -> Result<ModelParams> {
        let p = &self.params;
        let mut g = p.zeros_like();
        let n = cache.tokens.len();
        let mut dx = match self.config.task {
            Task::CausalLm => {
                g.out_w = cache.last.t().dot(dlogits);
                g.out_b = dlogits.sum_axis(Axis(0));
                dlogits.dot(&p.out_w.t())
            }
            Task::Classification => {
                let pooled = cache.last.mean_axis(Axis(0)).expect("n >= 2").insert_axis(Axis(0));
                g.out_w = pooled.t().dot(dlogits);
                g.out_b = dlogits.sum_axis(Axis(0));
                let d_pooled = dlogits.dot(&p.out_w.t()) / n as f64;
                d_pooled
                    .broadcast((n, self.config.d_model))
                    .expect("row broadcast")
                    .to_owned()
            }
        };
        for ((lp, lc), lg) in p.layers.iter().zip(&cache.layers).zip(&mut g.layers).rev() {
            let (d_sum2, dg2, db2) = layer_norm_backward(&dx, &lp.ln2_gain, &lc.ln2);
            lg.ln2_gain = dg2;
            lg.ln2_bias = db2;
            lg.ff_w2 = lc.ff_act.t().dot(&d_sum2);
            lg.ff_b2 = d_sum2.sum_axis(Axis(0));
            let mut d_pre = d_sum2.dot(&lp.ff_w2.t());
            d_pre.zip_mut_with(&lc.ff_pre, |d, &x| *d *= gelu_grad(x));
            lg.ff_w1 = lc.h.t().dot(&d_pre);
            lg.ff_b1 = d_pre.sum_axis(Axis(0));
            let dh = d_sum2 + d_pre.dot(&lp.ff_w1.t());
            let (d_sum1, dg1, db1) = layer_norm_backward(&dh, &lp.ln1_gain, &lc.ln1);
            lg.ln1_gain = dg1;
            lg.ln1_bias = db1;
            let ag = pde_attention_backward(&lc.attn, &d_sum1)?;
            lg.attn.w_q = ag.w_q;
            lg.attn.w_k = ag.w_k;
            lg.attn.w_v = ag.w_v;
            lg.attn.w_o = ag.w_o;
            lg.attn.coeffs = if self.config.learn_coefficients {
                ag.coeffs
            } else {
                vec![Coefficients::default(); lp.attn.n_heads]
            };
            dx = d_sum1 + ag.x;
        }
        for (i, (&tok, row)) in cache.tokens.iter().zip(dx.axis_iter(Axis(0))).enumerate() {
            let mut t = g.tok_emb.row_mut(tok);
            t += &row;
            let mut q = g.pos_emb.row_mut(i);
            q += &row;
        }
        Ok(g)
    }

    /// Mean cross-entropy of one sample and its logit gradient.
    fn loss_of(&self, logits: &Array2<f64>, sample: &Sample) -> Result<(f64, Array2<f64>)> {
        let mut dlogits = Array2::zeros(logits.raw_dim());
        let targets: Vec<(usize, usize)> = match self.config.task {
            Task::CausalLm => {
                if sample.targets.len() != logits.nrows() {
                    return Err(Error::shape(
                        logits.nrows().to_string(),
                        sample.targets.len().to_string(),
                    ));
                }
                sample
                    .targets
                    .iter()
                    .enumerate()
                    .filter_map(|(i, t)| t.map(|t| (i, t)))
                    .collect()
            }
            Task::Classification => {
                let label = sample
                    .label
                    .ok_or_else(|| Error::InvalidInput("classification sample without label".into()))?;
                vec![(0, label)]
            }
        };
        if targets.is_empty() {
            return Ok((0.0, dlogits));
        }
        let width = logits.ncols();
        let probs = softmax_rows(logits);
        let scale = 1.0 / targets.len() as f64;
        let mut loss = 0.0;
        for &(i, t) in &targets {
            if t >= width {
                return Err(Error::InvalidInput(format!("target {t} out of range {width}")));
            }
            loss += log_sum_exp(logits.row(i)) - logits[(i, t)];
            let mut d = dlogits.row_mut(i);
            d.assign(&(&probs.row(i) * scale));
            d[t] -= scale;
        }
        Ok((loss * scale, dlogits))
    }

    pub fn loss(&self, sample: &Sample) -> Result<f64> {
        let logits = self.forward_one(&sample.tokens)?;
        Ok(self.loss_of(&logits, sample)?.0)
    }

    pub fn loss_and_grad(&self, sample: &Sample) -> Result<(f64, ModelParams)> {
        let (logits, cache) = self.forward_cached(&sample.tokens)?;
        let (loss, dlogits) = self.loss_of(&logits, sample)?;
        Ok((loss, self.backward(&cache, &dlogits)?))
    }

    /// Arg-max class of a classification sample.
    pub fn predict(&self, tokens: &[usize]) -> Result<usize> {
        Ok(argmax_last_row(&self.forward_one(tokens)?))
    }

    /// Loss plus the predicted class (classification only) from one forward
    /// pass.
    pub fn loss_and_prediction(&self, sample: &Sample) -> Result<(f64, Option<usize>)> {
        let logits = self.forward_one(&sample.tokens)?;
        let loss = self.loss_of(&logits, sample)?.0;
        let predicted = (self.config.task == Task::Classification).then(|| argmax_last_row(&logits));
        Ok((loss, predicted))
    }
}

fn argmax_last_row(logits: &Array2<f64>) -> usize {
    logits
        .row(logits.nrows() - 1)
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}
