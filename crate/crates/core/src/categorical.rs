//! Categorical laws in probability and score (natural-parameter) form.
//!
//! Every variable in the model shares one class count `k`. Scores are kept in
//! the zero-mean gauge: adding a constant to a score vector leaves its softmax
//! unchanged, so the representative with `sum == 0` is used everywhere.

use std::ops::Deref;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(p) == 1` for a [`ProbVector`].
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Tolerance on `sum(s) == 0` for a [`ScoreVector`].
pub const GAUGE_TOL: f64 = 1e-9;
/// Tolerance on the total mass of a [`JointDistribution`].
pub const JOINT_SUM_TOL: f64 = 1e-10;

/// Name of the pseudo-random generator behind [`RandomSource`], echoed into
/// experiment metadata.
pub const GENERATOR_NAME: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64 + set_stream)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct ClassCount(usize);

impl ClassCount {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("class count must be at least 1"));
        }
        Ok(Self(k))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for ClassCount {
    type Error = Error;

    fn try_from(k: usize) -> Result<Self> {
        Self::new(k)
    }
}

impl From<ClassCount> for usize {
    fn from(k: ClassCount) -> usize {
        k.0
    }
}

/// A strictly positive probability vector summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("probability vector is empty"));
        }
        if let Some(i) = entries.iter().position(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::Domain(format!(
                "probability entry {i} = {} is not strictly positive",
                entries[i]
            )));
        }
        let total: f64 = entries.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self(entries))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ProbVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A gauge-fixed (zero-sum) score vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("score vector is empty"));
        }
        if entries.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("score vector has a non-finite entry"));
        }
        let total: f64 = entries.iter().sum();
        if total.abs() > GAUGE_TOL {
            return Err(Error::invalid(format!(
                "score vector sums to {total}, expected 0"
            )));
        }
        Ok(Self(entries))
    }

    /// Centers arbitrary finite scores into the zero-mean gauge.
    pub fn centered(mut entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("score vector is empty"));
        }
        if entries.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("score vector has a non-finite entry"));
        }
        center_in_place(&mut entries);
        Ok(Self(entries))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ScoreVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Exact joint table `p(a, x, y)` stored row-major with `y` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    k: usize,
    table: Vec<f64>,
}

impl JointDistribution {
    pub fn new(k: usize, table: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("class count must be at least 1"));
        }
        if table.len() != k * k * k {
            return Err(Error::invalid(format!(
                "joint table has {} entries, expected {}",
                table.len(),
                k * k * k
            )));
        }
        if let Some(i) = table.iter().position(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::Domain(format!(
                "joint entry {i} = {} is not strictly positive",
                table[i]
            )));
        }
        let total = neumaier_sum(table.iter().copied());
        if (total - 1.0).abs() > JOINT_SUM_TOL {
            return Err(Error::invalid(format!("joint sums to {total}, not 1")));
        }
        Ok(Self { k, table })
    }

    /// Wraps a table assembled from softmax factors. Such tables are positive
    /// and normalized up to rounding, so only a debug check is made.
    pub(crate) fn from_assembled(k: usize, table: Vec<f64>) -> Self {
        debug_assert_eq!(table.len(), k * k * k);
        Self { k, table }
    }

    pub fn uniform(k: usize) -> Self {
        let n = k * k * k;
        Self {
            k,
            table: vec![1.0 / n as f64; n],
        }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn index(&self, a: usize, x: usize, y: usize) -> usize {
        (a * self.k + x) * self.k + y
    }

    #[inline]
    pub fn get(&self, a: usize, x: usize, y: usize) -> f64 {
        self.table[self.index(a, x, y)]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn marginal_a(&self) -> Vec<f64> {
        let k = self.k;
        (0..k)
            .map(|a| self.table[a * k * k..(a + 1) * k * k].iter().sum())
            .collect()
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        let k = self.k;
        let mut out = vec![0.0; k];
        for a in 0..k {
            for (x, slot) in out.iter_mut().enumerate() {
                *slot += self.table[self.index(a, x, 0)..self.index(a, x, 0) + k]
                    .iter()
                    .sum::<f64>();
            }
        }
        out
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let k = self.k;
        let mut out = vec![0.0; k];
        for row in self.table.chunks_exact(k) {
            for (slot, p) in out.iter_mut().zip(row) {
                *slot += p;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &JointDistribution) -> f64 {
        self.table
            .iter()
            .zip(&other.table)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }
}

/// Seeded, platform-independent random stream.
///
/// Two sources built from the same `(seed, stream)` produce identical draws.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent sub-source for a named lane of work (prior draw,
    /// intervention draw, one model's sample stream, ...). The stream id is
    /// kept so per-trial sources stay distinct.
    pub fn fork(&self, lane: u64) -> RandomSource {
        let mixed = splitmix64(self.seed ^ splitmix64(lane.wrapping_add(0xA076_1D64_78BD_642F)));
        RandomSource::new(mixed, self.stream)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub(crate) fn center_in_place(s: &mut [f64]) {
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    for v in s.iter_mut() {
        *v -= mean;
    }
}

#[inline]
pub fn log_sum_exp(s: &[f64]) -> f64 {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax into a caller buffer; `out.len() == s.len()`.
#[inline]
pub(crate) fn softmax_into(s: &[f64], out: &mut [f64]) {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, v) in out.iter_mut().zip(s) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Maps scores to probabilities. Accepts scores in any gauge.
pub fn softmax(s: &[f64]) -> Result<ProbVector> {
    if s.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if let Some(i) = s.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("score entry {i} is not finite")));
    }
    let mut out = vec![0.0; s.len()];
    softmax_into(s, &mut out);
    if out.iter().any(|p| *p <= 0.0) {
        return Err(Error::Domain(
            "softmax underflowed to zero; score range too wide".into(),
        ));
    }
    Ok(ProbVector(out))
}

/// Inverse softmax in the zero-mean gauge.
pub fn scores_from_probs(p: &[f64]) -> Result<ScoreVector> {
    if p.is_empty() {
        return Err(Error::invalid("empty probability vector"));
    }
    if let Some(i) = p.iter().position(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Domain(format!(
            "probability entry {i} = {} is not strictly positive (smooth zero counts upstream)",
            p[i]
        )));
    }
    let mut s: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    center_in_place(&mut s);
    Ok(ScoreVector(s))
}

/// `sum p * ln(p / q)` over two probability vectors of equal length.
/// Fails when `q` puts zero mass where `p` does not.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    ProbVector::new(p.to_vec())?;
    ProbVector::new(q.to_vec())?;
    if p.iter().zip(q).any(|(&pi, &qi)| pi > 0.0 && qi == 0.0) {
        return Err(Error::Domain("q has zero mass where p does not".into()));
    }
    Ok(kl_terms(p, q))
}

fn kl_terms(p: &[f64], q: &[f64]) -> f64 {
    neumaier_sum(p.iter().zip(q).map(|(&pi, &qi)| {
        if pi == 0.0 {
            0.0
        } else {
            pi * (pi / qi).ln()
        }
    }))
    .max(0.0)
}

/// `D_KL(p_star || q)` over full joint tables, in nats.
pub fn kl_divergence(p_star: &JointDistribution, q: &JointDistribution) -> Result<f64> {
    if p_star.k != q.k {
        return Err(Error::ShapeMismatch {
            expected: p_star.k,
            actual: q.k,
        });
    }
    Ok(kl_terms(&p_star.table, &q.table))
}

/// Inverse-CDF draw of a class index.
pub fn sample_category(p: &ProbVector, rng: &mut RandomSource) -> usize {
    let u = rng.uniform();
    let mut cum = 0.0;
    for (i, pi) in p.iter().enumerate() {
        cum += pi;
        if u < cum {
            return i;
        }
    }
    p.len() - 1
}

/// Dirichlet draw by normalizing independent `Gamma(alpha_i, 1)` variates.
pub fn dirichlet_sample(concentration: &[f64], rng: &mut RandomSource) -> Result<ProbVector> {
    if concentration.is_empty() {
        return Err(Error::invalid("empty concentration vector"));
    }
    if let Some(i) = concentration
        .iter()
        .position(|c| !c.is_finite() || *c <= 0.0)
    {
        return Err(Error::invalid(format!(
            "concentration entry {i} = {} must be positive",
            concentration[i]
        )));
    }
    if concentration.len() == 1 {
        return Ok(ProbVector(vec![1.0]));
    }
    let gammas = concentration
        .iter()
        .map(|&c| Gamma::new(c, 1.0).map_err(|e| Error::invalid(e.to_string())))
        .collect::<Result<Vec<_>>>()?;

    // Very small concentrations can underflow a coordinate to zero; redraw.
    for _ in 0..64 {
        let draws: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() && draws.iter().all(|d| *d > 0.0) {
            let p: Vec<f64> = draws.iter().map(|d| d / total).collect();
            if p.iter().all(|v| *v > 0.0) {
                return Ok(ProbVector(p));
            }
        }
    }
    Err(Error::Domain(
        "dirichlet draw kept underflowing; concentration too small".into(),
    ))
}
