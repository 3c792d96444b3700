//! Recurrent Gaussian policy: a ReLU encoder, one GRU cell, a linear mean
//! head with a state-independent log-std vector, and a linear value head.
//! Parameters live in one flat vector so optimizers and checkpoints stay
//! simple.

use crate::error::{Error, Result};
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub obs_dim: usize,
    /// Widths of the fully connected encoder layers; empty feeds the
    /// observation straight into the recurrent cell.
    pub encoder: Vec<usize>,
    pub hidden: usize,
    pub action_dim: usize,
}

impl NetworkConfig {
    pub fn standard(action_dim: usize) -> Self {
        Self {
            obs_dim: crate::env::OBS_DIM,
            encoder: vec![128, 128],
            hidden: 128,
            action_dim,
        }
    }

    /// Wider recurrent core matching the reference architecture.
    pub fn wide(action_dim: usize) -> Self {
        Self {
            hidden: 512,
            ..Self::standard(action_dim)
        }
    }

    /// Architecture string embedded in checkpoints.
    pub fn descriptor(&self) -> String {
        let enc: Vec<String> = self.encoder.iter().map(|w| w.to_string()).collect();
        format!(
            "gru-gaussian/obs={}/enc=[{}]/hidden={}/act={}",
            self.obs_dim,
            enc.join(","),
            self.hidden,
            self.action_dim
        )
    }

    /// Inverse of [`NetworkConfig::descriptor`].
    pub fn from_descriptor(text: &str) -> Result<Self> {
        let bad = || Error::Checkpoint(format!("unrecognised architecture '{text}'"));
        let mut parts = text.split('/');
        if parts.next() != Some("gru-gaussian") {
            return Err(bad());
        }
        let mut field = |key: &str| -> Result<&str> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(key))
                .and_then(|p| p.strip_prefix('='))
                .ok_or_else(bad)
        };
        let num = |v: &str| v.parse::<usize>().map_err(|_| bad());
        let obs_dim = num(field("obs")?)?;
        let enc = field("enc")?
            .strip_prefix('[')
            .and_then(|e| e.strip_suffix(']'))
            .ok_or_else(bad)?;
        let encoder = if enc.is_empty() {
            Vec::new()
        } else {
            enc.split(',').map(num).collect::<Result<Vec<_>>>()?
        };
        let hidden = num(field("hidden")?)?;
        let action_dim = num(field("act")?)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        let config = Self { obs_dim, encoder, hidden, action_dim };
        config.validate().map_err(|_| bad())?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.hidden == 0 || self.action_dim == 0 || self.encoder.contains(&0) {
            return Err(Error::Config(format!("degenerate network shape {}", self.descriptor())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Tensor {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Tensor {
    fn len(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    /// (weight, bias) per encoder layer.
    encoder: Vec<(Tensor, Tensor)>,
    w_ih: Tensor,
    w_hh: Tensor,
    b_ih: Tensor,
    b_hh: Tensor,
    w_mu: Tensor,
    b_mu: Tensor,
    log_std: Tensor,
    w_v: Tensor,
    b_v: Tensor,
    total: usize,
}

impl Layout {
    fn new(c: &NetworkConfig) -> Self {
        let mut off = 0;
        let mut take = |rows: usize, cols: usize| {
            let t = Tensor { offset: off, rows, cols };
            off += rows * cols;
            t
        };
        let mut encoder = Vec::new();
        let mut input = c.obs_dim;
        for &w in &c.encoder {
            encoder.push((take(w, input), take(1, w)));
            input = w;
        }
        let h = c.hidden;
        let w_ih = take(3 * h, input);
        let w_hh = take(3 * h, h);
        let b_ih = take(1, 3 * h);
        let b_hh = take(1, 3 * h);
        let w_mu = take(c.action_dim, h);
        let b_mu = take(1, c.action_dim);
        let log_std = take(1, c.action_dim);
        let w_v = take(1, h);
        let b_v = take(1, 1);
        Layout {
            encoder,
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            w_mu,
            b_mu,
            log_std,
            w_v,
            b_v,
            total: off,
        }
    }
}

/// Flat parameter vector for a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub values: Vec<f64>,
}

impl PolicyParams {
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Outputs of one recurrent step for a batch.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub mean: Array2<f64>,
    pub log_std: Vec<f64>,
    pub value: Array1<f64>,
    pub hidden: Array2<f64>,
}

/// Everything the backward pass needs from a sequence forward pass.
#[derive(Debug, Clone)]
pub struct SequenceCache {
    pub steps: usize,
    pub batch: usize,
    /// `[T, B, A]`
    pub mean: Array3<f64>,
    /// `[T, B]`
    pub value: Array2<f64>,
    pub log_std: Vec<f64>,
    /// Encoder activations per layer, rows ordered `t * B + b`; index 0 is
    /// the observation.
    acts: Vec<Array2<f64>>,
    h_in: Vec<Array2<f64>>,
    r: Vec<Array2<f64>>,
    z: Vec<Array2<f64>>,
    n: Vec<Array2<f64>>,
    gh_n: Vec<Array2<f64>>,
    h_out: Vec<Array2<f64>>,
    keep: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    layout: Layout,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn clamp_log_std(v: f64) -> f64 {
    v.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        Ok(Self { config, layout })
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn zeros(&self) -> PolicyParams {
        PolicyParams {
            values: vec![0.0; self.layout.total],
        }
    }

    /// Fan-in scaled Gaussian weights, zero biases, a small mean head so
    /// initial actions centre on zero, and unit action noise.
    pub fn init(&self, rng: &mut impl Rng) -> PolicyParams {
        let mut p = self.zeros();
        let mut fill = |t: &Tensor, scale: f64, p: &mut PolicyParams| {
            for v in &mut p.values[t.offset..t.offset + t.len()] {
                let g: f64 = rng.sample(StandardNormal);
                *v = g * scale;
            }
        };
        for (w, _) in &self.layout.encoder {
            fill(w, (2.0 / w.cols as f64).sqrt(), &mut p);
        }
        let k = 1.0 / (self.config.hidden as f64).sqrt();
        fill(&self.layout.w_ih, k, &mut p);
        fill(&self.layout.w_hh, k, &mut p);
        fill(&self.layout.w_mu, 0.01 * k, &mut p);
        fill(&self.layout.w_v, k, &mut p);
        p
    }

    fn check(&self, params: &PolicyParams) -> Result<()> {
        if params.values.len() != self.layout.total {
            return Err(Error::Dimension {
                expected: self.layout.total,
                got: params.values.len(),
            });
        }
        Ok(())
    }

    fn mat<'a>(&self, p: &'a [f64], t: &Tensor) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((t.rows, t.cols), &p[t.offset..t.offset + t.len()])
            .expect("layout tensors are contiguous")
    }

    fn vec<'a>(&self, p: &'a [f64], t: &Tensor) -> ArrayView1<'a, f64> {
        ArrayView1::from(&p[t.offset..t.offset + t.len()])
    }

    pub fn log_std(&self, params: &PolicyParams) -> Vec<f64> {
        self.vec(&params.values, &self.layout.log_std)
            .iter()
            .map(|v| clamp_log_std(*v))
            .collect()
    }

    /// Clamps the stored log-std entries into range.
    pub fn clamp_params(&self, params: &mut PolicyParams) {
        let t = self.layout.log_std;
        for v in &mut params.values[t.offset..t.offset + t.len()] {
            *v = clamp_log_std(*v);
        }
    }

    /// Indices belonging to the value head.
    pub fn value_head_range(&self) -> std::ops::Range<usize> {
        self.layout.w_v.offset..self.layout.b_v.offset + 1
    }

    fn encode(&self, p: &[f64], x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.clone()];
        for (w, b) in &self.layout.encoder {
            let prev = acts.last().expect("non-empty");
            let mut y = prev.dot(&self.mat(p, w).t());
            y += &self.vec(p, b);
            y.mapv_inplace(|v| v.max(0.0));
            acts.push(y);
        }
        acts
    }

    /// One GRU step. Returns `(h', r, z, n, gh_n)`.
    fn gru(
        &self,
        p: &[f64],
        x: ArrayView2<f64>,
        h: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        let hd = self.config.hidden;
        let mut gi = x.dot(&self.mat(p, &self.layout.w_ih).t());
        gi += &self.vec(p, &self.layout.b_ih);
        let mut gh = h.dot(&self.mat(p, &self.layout.w_hh).t());
        gh += &self.vec(p, &self.layout.b_hh);
        let r = (&gi.slice(s![.., 0..hd]) + &gh.slice(s![.., 0..hd])).mapv(sigmoid);
        let z = (&gi.slice(s![.., hd..2 * hd]) + &gh.slice(s![.., hd..2 * hd])).mapv(sigmoid);
        let gh_n = gh.slice(s![.., 2 * hd..]).to_owned();
        let n = (&gi.slice(s![.., 2 * hd..]) + &(&r * &gh_n)).mapv(f64::tanh);
        let h_new = &n + &(&z * &(h - &n));
        (h_new, r, z, n, gh_n)
    }

    fn heads(&self, p: &[f64], h: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let mut mean = h.dot(&self.mat(p, &self.layout.w_mu).t());
        mean += &self.vec(p, &self.layout.b_mu);
        let w_v = self.vec(p, &self.layout.w_v);
        let b_v = p[self.layout.b_v.offset];
        let value = h.dot(&w_v) + b_v;
        (mean, value)
    }

    /// Batched single step: `obs` is `[B, obs_dim]`, `hidden` is `[B, H]`.
    pub fn forward(
        &self,
        params: &PolicyParams,
        obs: &Array2<f64>,
        hidden: &Array2<f64>,
    ) -> Result<StepOutput> {
        self.check(params)?;
        if obs.ncols() != self.config.obs_dim {
            return Err(Error::Dimension {
                expected: self.config.obs_dim,
                got: obs.ncols(),
            });
        }
        if hidden.dim() != (obs.nrows(), self.config.hidden) {
            return Err(Error::Shape(format!(
                "hidden state {:?} for batch {} and width {}",
                hidden.dim(),
                obs.nrows(),
                self.config.hidden
            )));
        }
        let p = &params.values;
        let acts = self.encode(p, obs);
        let x = acts.last().expect("non-empty");
        let (h, ..) = self.gru(p, x.view(), hidden);
        let (mean, value) = self.heads(p, &h);
        Ok(StepOutput {
            mean,
            log_std: self.log_std(params),
            value,
            hidden: h,
        })
    }

    /// Unrolls `T` steps for `B` sequences. `starts[t, b]` zeroes the hidden
    /// state before step `t`.
    pub fn forward_sequence(
        &self,
        params: &PolicyParams,
        obs: &Array3<f64>,
        starts: &Array2<bool>,
        h0: &Array2<f64>,
    ) -> Result<SequenceCache> {
        self.check(params)?;
        let (t_len, batch, od) = obs.dim();
        if od != self.config.obs_dim {
            return Err(Error::Dimension {
                expected: self.config.obs_dim,
                got: od,
            });
        }
        if starts.dim() != (t_len, batch) || h0.dim() != (batch, self.config.hidden) {
            return Err(Error::Shape("sequence masks or initial state misaligned".into()));
        }
        let p = &params.values;
        let flat = obs
            .to_shape((t_len * batch, od))
            .map_err(|e| Error::Shape(e.to_string()))?
            .to_owned();
        let acts = self.encode(p, &flat);
        let x = acts.last().expect("non-empty");
        let keep = starts.mapv(|s| if s { 0.0 } else { 1.0 });
        let a = self.config.action_dim;
        let mut cache = SequenceCache {
            steps: t_len,
            batch,
            mean: Array3::zeros((t_len, batch, a)),
            value: Array2::zeros((t_len, batch)),
            log_std: self.log_std(params),
            acts: Vec::new(),
            h_in: Vec::with_capacity(t_len),
            r: Vec::with_capacity(t_len),
            z: Vec::with_capacity(t_len),
            n: Vec::with_capacity(t_len),
            gh_n: Vec::with_capacity(t_len),
            h_out: Vec::with_capacity(t_len),
            keep: keep.clone(),
        };
        let mut h = h0.clone();
        for t in 0..t_len {
            let mask = keep.row(t).insert_axis(Axis(1)).to_owned();
            let h_in = &h * &mask;
            let xt = x.slice(s![t * batch..(t + 1) * batch, ..]);
            let (h_new, r, z, n, gh_n) = self.gru(p, xt, &h_in);
            let (mean, value) = self.heads(p, &h_new);
            cache.mean.slice_mut(s![t, .., ..]).assign(&mean);
            cache.value.row_mut(t).assign(&value);
            cache.h_in.push(h_in);
            cache.r.push(r);
            cache.z.push(z);
            cache.n.push(n);
            cache.gh_n.push(gh_n);
            cache.h_out.push(h_new.clone());
            h = h_new;
        }
        cache.acts = acts;
        Ok(cache)
    }

    /// Gradient of a loss with respect to the parameters given its partials
    /// with respect to the means `[T, B, A]`, values `[T, B]` and the
    /// (clamped) log-std vector. Log-std entries pinned by the clamp get no
    /// gradient.
    pub fn backward_sequence(
        &self,
        params: &PolicyParams,
        cache: &SequenceCache,
        d_mean: &Array3<f64>,
        d_value: &Array2<f64>,
        d_log_std: &[f64],
    ) -> Vec<f64> {
        let p = &params.values;
        let l = &self.layout;
        let hd = self.config.hidden;
        let (t_len, batch) = (cache.steps, cache.batch);
        let mut g = vec![0.0; l.total];

        for (i, d) in d_log_std.iter().enumerate() {
            let raw = p[l.log_std.offset + i];
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                g[l.log_std.offset + i] += d;
            }
        }

        let w_mu = self.mat(p, &l.w_mu);
        let w_v = self.vec(p, &l.w_v);
        let w_ih = self.mat(p, &l.w_ih);
        let w_hh = self.mat(p, &l.w_hh);
        let mut gw_mu = Array2::<f64>::zeros((l.w_mu.rows, l.w_mu.cols));
        let mut gb_mu = Array1::<f64>::zeros(l.b_mu.cols);
        let mut gw_v = Array1::<f64>::zeros(hd);
        let mut gb_v = 0.0;
        let mut gw_ih = Array2::<f64>::zeros((3 * hd, l.w_ih.cols));
        let mut gw_hh = Array2::<f64>::zeros((3 * hd, hd));
        let mut gb_ih = Array1::<f64>::zeros(3 * hd);
        let mut gb_hh = Array1::<f64>::zeros(3 * hd);
        let x = cache.acts.last().expect("non-empty");
        let mut dx = Array2::<f64>::zeros(x.dim());
        let mut carry = Array2::<f64>::zeros((batch, hd));

        for t in (0..t_len).rev() {
            let dm = d_mean.slice(s![t, .., ..]);
            let dv = d_value.row(t);
            let h_t = &cache.h_out[t];
            gw_mu += &dm.t().dot(h_t);
            gb_mu += &dm.sum_axis(Axis(0));
            gw_v += &h_t.t().dot(&dv);
            gb_v += dv.sum();
            let mut dh = dm.dot(&w_mu);
            dh += &(&dv.insert_axis(Axis(1)) * &w_v.insert_axis(Axis(0)));
            dh += &carry;

            let (r, z, n, gh_n, h_in) = (&cache.r[t], &cache.z[t], &cache.n[t], &cache.gh_n[t], &cache.h_in[t]);
            let dn = &dh * &z.mapv(|v| 1.0 - v);
            let dz = &dh * &(h_in - n);
            let dh_direct = &dh * z;
            let da_n = &dn * &n.mapv(|v| 1.0 - v * v);
            let dr = &da_n * gh_n;
            let da_r = &dr * &r.mapv(|v| v * (1.0 - v));
            let da_z = &dz * &z.mapv(|v| v * (1.0 - v));
            let mut d_gi = Array2::<f64>::zeros((batch, 3 * hd));
            d_gi.slice_mut(s![.., 0..hd]).assign(&da_r);
            d_gi.slice_mut(s![.., hd..2 * hd]).assign(&da_z);
            d_gi.slice_mut(s![.., 2 * hd..]).assign(&da_n);
            let mut d_gh = d_gi.clone();
            d_gh.slice_mut(s![.., 2 * hd..]).assign(&(&da_n * r));

            let xt = x.slice(s![t * batch..(t + 1) * batch, ..]);
            gw_ih += &d_gi.t().dot(&xt);
            gb_ih += &d_gi.sum_axis(Axis(0));
            gw_hh += &d_gh.t().dot(h_in);
            gb_hh += &d_gh.sum_axis(Axis(0));
            dx.slice_mut(s![t * batch..(t + 1) * batch, ..]).assign(&d_gi.dot(&w_ih));
            let dh_in = dh_direct + d_gh.dot(&w_hh);
            let mask = cache.keep.row(t).insert_axis(Axis(1)).to_owned();
            carry = dh_in * &mask;
        }

        let mut put = |t: &Tensor, src: &[f64]| {
            for (dst, v) in g[t.offset..t.offset + t.len()].iter_mut().zip(src) {
                *dst += v;
            }
        };
        put(&l.w_mu, gw_mu.as_slice().expect("contiguous"));
        put(&l.b_mu, gb_mu.as_slice().expect("contiguous"));
        put(&l.w_v, gw_v.as_slice().expect("contiguous"));
        put(&l.b_v, &[gb_v]);
        put(&l.w_ih, gw_ih.as_slice().expect("contiguous"));
        put(&l.w_hh, gw_hh.as_slice().expect("contiguous"));
        put(&l.b_ih, gb_ih.as_slice().expect("contiguous"));
        put(&l.b_hh, gb_hh.as_slice().expect("contiguous"));

        let mut d = dx;
        for (k, (w, b)) in l.encoder.iter().enumerate().rev() {
            let out = &cache.acts[k + 1];
            let input = &cache.acts[k];
            let d_pre = &d * &out.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            put(w, d_pre.t().dot(input).as_standard_layout().as_slice().expect("contiguous"));
            put(b, d_pre.sum_axis(Axis(0)).as_slice().expect("contiguous"));
            d = d_pre.dot(&self.mat(p, w));
        }
        g
    }
}

/// Single-observation convenience wrapper returning
/// `(mean, log_std, value, hidden')`.
pub fn policy_forward(
    network: &Network,
    params: &PolicyParams,
    obs: &[f64],
    hidden: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, f64, Vec<f64>)> {
    if obs.len() != network.config.obs_dim {
        return Err(Error::Dimension {
            expected: network.config.obs_dim,
            got: obs.len(),
        });
    }
    if hidden.len() != network.config.hidden {
        return Err(Error::Dimension {
            expected: network.config.hidden,
            got: hidden.len(),
        });
    }
    let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).map_err(|e| Error::Shape(e.to_string()))?;
    let h = Array2::from_shape_vec((1, hidden.len()), hidden.to_vec()).map_err(|e| Error::Shape(e.to_string()))?;
    let out = network.forward(params, &x, &h)?;
    Ok((
        out.mean.row(0).to_vec(),
        out.log_std,
        out.value[0],
        out.hidden.row(0).to_vec(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
}

/// Diagonal Gaussian sample. The log-probability is that of the returned,
/// unclamped action.
pub fn sample_action(mean: &[f64], log_std: &[f64], rng: &mut impl Rng) -> GaussianSample {
    let action: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(m, ls)| {
            let eps: f64 = rng.sample(StandardNormal);
            m + clamp_log_std(*ls).exp() * eps
        })
        .collect();
    let log_prob = gaussian_log_prob(&action, mean, log_std);
    GaussianSample { action, log_prob }
}

pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let ls = clamp_log_std(*ls);
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_TWO_PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| clamp_log_std(*ls) + 0.5 + HALF_LOG_TWO_PI).sum()
}
