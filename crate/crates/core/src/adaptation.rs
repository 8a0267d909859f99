//! SGD adaptation of either factorization to a transfer distribution, with
//! exact KL tracking.

use serde::{Deserialize, Serialize};

use crate::categorical::{log_sum_exp, neumaier_sum, softmax_into, JointDistribution, RandomSource};
use crate::error::{Error, Result};
use crate::intervention::TransferPair;
use crate::scm::{AntiCausalParams, CausalParams, ChainScores, Factorization};
use crate::theory::{deltas, DeltaPair};

/// Largest tolerated `|sum(slice)|` after a run.
pub const GAUGE_DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Also track KL at the running average of the iterates.
    pub track_average: bool,
    pub kl_every: usize,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            learning_rate: 0.1,
            batch_size: 10,
            track_average: false,
            kl_every: 1,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.kl_every == 0 {
            return Err(Error::invalid("kl_every must be at least 1"));
        }
        // zero is allowed: it freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and >= 0"));
        }
        Ok(())
    }

    /// Steps at which KL is recorded.
    pub fn recorded_steps(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=self.steps).filter(move |t| t % self.kl_every == 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sample {
    pub a: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory<F> {
    pub initial_kl: f64,
    /// `(step, KL(p* || p_theta_t))`, step ascending.
    pub kl_current: Vec<(usize, f64)>,
    /// KL at the mean of `theta_0 .. theta_{t-1}`, when tracked.
    pub kl_averaged: Option<Vec<(usize, f64)>>,
    pub final_params: F,
    pub gauge_residual: f64,
}

impl<F> Trajectory<F> {
    pub fn kl_at(&self, step: usize) -> Option<f64> {
        self.kl_current
            .binary_search_by_key(&step, |(s, _)| *s)
            .ok()
            .map(|i| self.kl_current[i].1)
    }

    pub fn final_kl(&self) -> f64 {
        self.kl_current.last().map_or(self.initial_kl, |(_, v)| *v)
    }
}

/// Inverse-CDF sampler over the cells of a joint table.
#[derive(Debug, Clone)]
pub struct JointSampler {
    k: usize,
    cdf: Vec<f64>,
}

impl JointSampler {
    pub fn new(p: &JointDistribution) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = p
            .table()
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        // absorb rounding in the final cell
        if let Some(last) = cdf.last_mut() {
            *last = f64::INFINITY;
        }
        Self { k: p.k(), cdf }
    }

    pub fn sample(&self, rng: &mut RandomSource) -> Sample {
        let u = rng.uniform();
        let cell = self.cdf.partition_point(|c| *c <= u);
        let k = self.k;
        Sample {
            a: cell / (k * k),
            x: (cell / k) % k,
            y: cell % k,
        }
    }
}

fn check_batch<F: Factorization>(params: &F, batch: &[Sample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let k = params.k();
    if let Some(s) = batch.iter().find(|s| s.a >= k || s.x >= k || s.y >= k) {
        return Err(Error::invalid(format!("sample {s:?} out of range for k={k}")));
    }
    Ok(())
}

/// Mean negative log-likelihood of a batch, factor by factor via
/// log-sum-exp.
pub fn nll_loss<F: Factorization>(params: &F, batch: &[Sample]) -> Result<f64> {
    check_batch(params, batch)?;
    let chain = params.chain();
    let total: f64 = batch
        .iter()
        .map(|s| {
            let (m, l) = F::route(s.x, s.y);
            let root = chain.root();
            let mid = chain.mid(s.a);
            let leaf = chain.leaf(s.a, m);
            (log_sum_exp(root) - root[s.a]) + (log_sum_exp(mid) - mid[m]) + (log_sum_exp(leaf) - leaf[l])
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Gradient of [`nll_loss`]: `softmax(slice) - onehot(observed)` on each
/// slice a sample touches, averaged over the batch.
pub fn grad_nll<F: Factorization>(params: &F, batch: &[Sample]) -> Result<ChainScores> {
    check_batch(params, batch)?;
    let mut grad = ChainScores::zeros(params.k());
    let mut scratch = vec![0.0; params.k()];
    accumulate_gradient(params.chain(), F::route, batch, &mut grad, &mut scratch, None);
    Ok(grad)
}

/// Offsets of the slices a batch touched.
#[derive(Default)]
struct Touched {
    mid: Vec<usize>,
    leaf: Vec<usize>,
}

impl Touched {
    fn clear(&mut self) {
        self.mid.clear();
        self.leaf.clear();
    }
}

fn accumulate_gradient(
    chain: &ChainScores,
    route: fn(usize, usize) -> (usize, usize),
    batch: &[Sample],
    grad: &mut ChainScores,
    scratch: &mut [f64],
    mut touched: Option<&mut Touched>,
) {
    let k = chain.k();
    let w = 1.0 / batch.len() as f64;
    let add = |params: &[f64], target: &mut [f64], observed: usize, scratch: &mut [f64]| {
        softmax_into(params, scratch);
        for (g, p) in target.iter_mut().zip(scratch.iter()) {
            *g += w * p;
        }
        target[observed] -= w;
    };
    for s in batch {
        let (m, l) = route(s.x, s.y);
        add(&chain.root, &mut grad.root, s.a, scratch);
        let mid = s.a * k;
        add(&chain.mid[mid..mid + k], &mut grad.mid[mid..mid + k], m, scratch);
        let leaf = (s.a * k + m) * k;
        add(&chain.leaf[leaf..leaf + k], &mut grad.leaf[leaf..leaf + k], l, scratch);
        if let Some(t) = touched.as_deref_mut() {
            t.mid.push(mid);
            t.leaf.push(leaf);
        }
    }
}

/// `sum p*(a,x,y) * -ln p_theta(a,x,y)`: the population loss.
pub fn expected_nll<F: Factorization>(params: &F, p_star: &JointDistribution) -> Result<f64> {
    if params.k() != p_star.k() {
        return Err(Error::ShapeMismatch {
            expected: p_star.k(),
            actual: params.k(),
        });
    }
    let log_q = params.log_joint();
    Ok(neumaier_sum(
        p_star.table().iter().zip(&log_q).map(|(p, lq)| -p * lq),
    ))
}

/// Exact `KL(p* || p_theta)` evaluated in log space.
struct KlMeter<'a> {
    p_star: &'a JointDistribution,
    neg_entropy: f64,
}

impl<'a> KlMeter<'a> {
    fn new(p_star: &'a JointDistribution) -> Self {
        let neg_entropy = neumaier_sum(p_star.table().iter().map(|p| p * p.ln()));
        Self { p_star, neg_entropy }
    }

    fn kl<F: Factorization>(&self, params: &F) -> f64 {
        let log_q = params.log_joint();
        let cross = neumaier_sum(self.p_star.table().iter().zip(&log_q).map(|(p, lq)| p * lq));
        (self.neg_entropy - cross).max(0.0)
    }
}

/// Runs plain SGD from `initial` on i.i.d. batches drawn from `p_star`.
pub fn adapt<F: Factorization>(
    initial: &F,
    p_star: &JointDistribution,
    config: &AdaptationConfig,
    rng: &mut RandomSource,
) -> Result<Trajectory<F>> {
    config.validate()?;
    let k = initial.k();
    if p_star.k() != k {
        return Err(Error::ShapeMismatch {
            expected: k,
            actual: p_star.k(),
        });
    }
    let sampler = JointSampler::new(p_star);
    let meter = KlMeter::new(p_star);

    let mut params = initial.clone();
    let mut grad = ChainScores::zeros(k);
    let mut scratch = vec![0.0; k];
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut touched = Touched::default();
    let mut iterate_sum: Option<Vec<f64>> = config.track_average.then(|| params.chain().all().collect());
    let mut averaged = initial.clone();

    let n_records = config.steps / config.kl_every;
    let mut kl_current = Vec::with_capacity(n_records);
    let mut kl_averaged = config.track_average.then(|| Vec::with_capacity(n_records));
    let initial_kl = meter.kl(&params);

    for step in 1..=config.steps {
        batch.clear();
        batch.extend((0..config.batch_size).map(|_| sampler.sample(rng)));
        touched.clear();
        accumulate_gradient(params.chain(), F::route, &batch, &mut grad, &mut scratch, Some(&mut touched));

        let lr = config.learning_rate;
        let chain = params.chain_mut();
        for (p, g) in chain.root.iter_mut().zip(grad.root.iter_mut()) {
            *p -= lr * *g;
            *g = 0.0;
        }
        // a slice may appear several times; its gradient is cleared on first use
        for &start in &touched.mid {
            apply_slice(&mut chain.mid, &mut grad.mid, start, k, lr);
        }
        for &start in &touched.leaf {
            apply_slice(&mut chain.leaf, &mut grad.leaf, start, k, lr);
        }
        if chain.root.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step,
                reason: "non-finite score after update".into(),
            });
        }

        if let Some(sum) = iterate_sum.as_mut() {
            // average of theta_0 .. theta_{step-1}, then fold theta_step in
            let n = step as f64;
            for (dst, s) in averaged.chain_mut().all_mut().zip(sum.iter()) {
                *dst = s / n;
            }
            for (s, v) in sum.iter_mut().zip(params.chain().all()) {
                *s += v;
            }
        }

        if step % config.kl_every == 0 {
            let kl = meter.kl(&params);
            if !kl.is_finite() {
                return Err(Error::Diverged {
                    step,
                    reason: "non-finite KL".into(),
                });
            }
            kl_current.push((step, kl));
            if let Some(trace) = kl_averaged.as_mut() {
                trace.push((step, meter.kl(&averaged)));
            }
        }
    }

    let gauge_residual = params.chain().max_gauge_residual();
    if gauge_residual.is_nan() || gauge_residual >= GAUGE_DRIFT_TOL {
        return Err(Error::Diverged {
            step: config.steps,
            reason: format!("score slices drifted off the zero-sum gauge by {gauge_residual:e}"),
        });
    }
    Ok(Trajectory {
        initial_kl,
        kl_current,
        kl_averaged,
        final_params: params,
        gauge_residual,
    })
}

#[inline]
fn apply_slice(params: &mut [f64], grad: &mut [f64], start: usize, k: usize, lr: f64) {
    for (p, g) in params[start..start + k].iter_mut().zip(&mut grad[start..start + k]) {
        if *g != 0.0 {
            *p -= lr * *g;
            *g = 0.0;
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairTrajectory {
    pub causal: Trajectory<CausalParams>,
    pub anticausal: Trajectory<AntiCausalParams>,
    pub deltas: DeltaPair,
}

/// Adapts both models from their shared reference to the same `p*`, each
/// with its own sample stream (`rng.fork(2)` and `rng.fork(3)`).
pub fn adapt_pair(pair: &TransferPair, config: &AdaptationConfig, rng: &RandomSource) -> Result<PairTrajectory> {
    let mut causal_rng = rng.fork(2);
    let mut anticausal_rng = rng.fork(3);
    let (causal, anticausal) = rayon::join(
        || adapt(&pair.theta0_causal, &pair.p_star, config, &mut causal_rng),
        || adapt(&pair.theta0_anticausal, &pair.p_star, config, &mut anticausal_rng),
    );
    Ok(PairTrajectory {
        causal: causal?,
        anticausal: anticausal?,
        deltas: deltas(pair),
    })
}
