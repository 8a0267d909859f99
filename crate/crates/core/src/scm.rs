//! The two trainable factorizations of `p(a, x, y)` and the conversions
//! between them.
//!
//! Both models are three-factor chains rooted at the bias `A`:
//!
//! * causal:      `p(a) p(x | a) p(y | a, x)`
//! * anti-causal: `p(a) p(y | a) p(x | a, y)`
//!
//! [`ChainScores`] stores either chain as flat score arrays. The `mid` factor
//! is indexed `[a * k + m]` and the `leaf` factor `[(a * k + m) * k + l]`,
//! where `m` is the middle variable (x for causal, y for anti-causal) and `l`
//! is the last one.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::categorical::{PROB_SUM_TOL, 
    center_in_place, log_sum_exp, scores_from_probs, softmax_into, JointDistribution,
    ScoreVector, GAUGE_TOL,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Causal,
    #[serde(rename = "anticausal")]
    AntiCausal,
}

impl ModelTag {
    pub const ALL: [ModelTag; 2] = [ModelTag::Causal, ModelTag::AntiCausal];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Causal => "causal",
            ModelTag::AntiCausal => "anticausal",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainScores {
    k: usize,
    pub(crate) root: Vec<f64>,
    pub(crate) mid: Vec<f64>,
    pub(crate) leaf: Vec<f64>,
}

impl ChainScores {
    pub fn new(k: usize, root: Vec<f64>, mid: Vec<f64>, leaf: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("class count must be at least 1"));
        }
        if root.len() != k || mid.len() != k * k || leaf.len() != k * k * k {
            return Err(Error::invalid(format!(
                "parameter shapes ({}, {}, {}) do not match k={k}",
                root.len(),
                mid.len(),
                leaf.len()
            )));
        }
        let chain = Self { k, root, mid, leaf };
        if chain.all().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite score"));
        }
        let residual = chain.max_gauge_residual();
        if residual > GAUGE_TOL {
            return Err(Error::invalid(format!(
                "score slice sums to {residual}, expected 0"
            )));
        }
        Ok(chain)
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            root: vec![0.0; k],
            mid: vec![0.0; k * k],
            leaf: vec![0.0; k * k * k],
        }
    }

    /// Builds gauge-fixed scores from strictly positive probability slices
    /// laid out like the score arrays.
    pub fn from_probabilities(k: usize, root: &[f64], mid: &[f64], leaf: &[f64]) -> Result<Self> {
        if root.len() != k || mid.len() != k * k || leaf.len() != k * k * k {
            return Err(Error::invalid("probability slice shapes do not match k"));
        }
        let convert = |p: &[f64]| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(p.len());
            for slice in p.chunks_exact(k) {
                let sum: f64 = slice.iter().sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Error::invalid(format!("probability slice sums to {sum}")));
                }
                out.extend_from_slice(&scores_from_probs(slice)?);
            }
            Ok(out)
        };
        Ok(Self {
            k,
            root: convert(root)?,
            mid: convert(mid)?,
            leaf: convert(leaf)?,
        })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn root(&self) -> &[f64] {
        &self.root
    }

    #[inline]
    pub fn mid(&self, a: usize) -> &[f64] {
        &self.mid[a * self.k..(a + 1) * self.k]
    }

    #[inline]
    pub fn leaf(&self, a: usize, m: usize) -> &[f64] {
        let start = (a * self.k + m) * self.k;
        &self.leaf[start..start + self.k]
    }

    pub fn root_flat(&self) -> &[f64] {
        &self.root
    }

    pub fn mid_flat(&self) -> &[f64] {
        &self.mid
    }

    pub fn leaf_flat(&self) -> &[f64] {
        &self.leaf
    }

    /// Every score entry, root then mid then leaf.
    pub fn all(&self) -> impl Iterator<Item = f64> + '_ {
        self.root
            .iter()
            .chain(&self.mid)
            .chain(&self.leaf)
            .copied()
    }

    pub(crate) fn all_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.root
            .iter_mut()
            .chain(self.mid.iter_mut())
            .chain(self.leaf.iter_mut())
    }

    pub fn num_params(&self) -> usize {
        self.k + self.k * self.k + self.k * self.k * self.k
    }

    /// Largest `|sum(slice)|` over every score slice.
    pub fn max_gauge_residual(&self) -> f64 {
        let k = self.k;
        self.root
            .chunks_exact(k)
            .chain(self.mid.chunks_exact(k))
            .chain(self.leaf.chunks_exact(k))
            .map(|s| s.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Flat squared Euclidean distance over every parameter entry.
    pub fn squared_distance(&self, other: &ChainScores) -> Result<f64> {
        if self.k != other.k {
            return Err(Error::ShapeMismatch {
                expected: self.k,
                actual: other.k,
            });
        }
        Ok(self
            .all()
            .zip(other.all())
            .map(|(u, v)| (u - v) * (u - v))
            .sum())
    }

    /// Per-variable probabilities `(p_root, p_mid, p_leaf)` in the same layout.
    pub fn probabilities(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let k = self.k;
        let conv = |s: &[f64]| {
            let mut out = vec![0.0; s.len()];
            for (src, dst) in s.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
                softmax_into(src, dst);
            }
            out
        };
        (conv(&self.root), conv(&self.mid), conv(&self.leaf))
    }

    /// Log-normalizers of every slice, same layout as the slices' owners.
    pub(crate) fn log_partitions(&self) -> (f64, Vec<f64>, Vec<f64>) {
        let k = self.k;
        (
            log_sum_exp(&self.root),
            self.mid.chunks_exact(k).map(log_sum_exp).collect(),
            self.leaf.chunks_exact(k).map(log_sum_exp).collect(),
        )
    }
}

/// Common behaviour of the causal and anti-causal parameter sets.
pub trait Factorization: Clone + Send + Sync + fmt::Debug {
    const TAG: ModelTag;

    fn chain(&self) -> &ChainScores;
    fn chain_mut(&mut self) -> &mut ChainScores;
    fn from_chain(chain: ChainScores) -> Self;

    /// Maps an observed `(a, x, y)` to the chain's `(mid, leaf)` classes.
    fn route(x: usize, y: usize) -> (usize, usize);

    fn k(&self) -> usize {
        self.chain().k()
    }

    fn assemble(&self) -> JointDistribution {
        let chain = self.chain();
        let k = chain.k();
        let (pr, pm, pl) = chain.probabilities();
        let mut table = vec![0.0; k * k * k];
        for a in 0..k {
            for x in 0..k {
                for y in 0..k {
                    let (m, l) = Self::route(x, y);
                    table[(a * k + x) * k + y] =
                        pr[a] * pm[a * k + m] * pl[(a * k + m) * k + l];
                }
            }
        }
        JointDistribution::from_assembled(k, table)
    }

    /// `ln p_theta(a, x, y)` for every cell, in joint-table order.
    fn log_joint(&self) -> Vec<f64> {
        let chain = self.chain();
        let k = chain.k();
        let (lr, lm, ll) = chain.log_partitions();
        let mut out = vec![0.0; k * k * k];
        for a in 0..k {
            let root = chain.root[a] - lr;
            for x in 0..k {
                for y in 0..k {
                    let (m, l) = Self::route(x, y);
                    let mid = chain.mid[a * k + m] - lm[a];
                    let leaf = chain.leaf[(a * k + m) * k + l] - ll[a * k + m];
                    out[(a * k + x) * k + y] = root + mid + leaf;
                }
            }
        }
        out
    }
}

/// `theta_causal = (s_A, s_{X|A}, s_{Y|A,X})`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalParams(ChainScores);

/// `theta_anticausal = (s_A, s_{Y|A}, s_{X|A,Y})`.
#[derive(Debug, Clone, PartialEq)]
pub struct AntiCausalParams(ChainScores);

impl CausalParams {
    /// `s_a` (length k), `s_x_given_a` indexed `[a*k + x]`, `s_y_given_ax`
    /// indexed `[(a*k + x)*k + y]`.
    pub fn new(k: usize, s_a: Vec<f64>, s_x_given_a: Vec<f64>, s_y_given_ax: Vec<f64>) -> Result<Self> {
        ChainScores::new(k, s_a, s_x_given_a, s_y_given_ax).map(Self)
    }

    pub fn zeros(k: usize) -> Self {
        Self(ChainScores::zeros(k))
    }

    pub fn s_a(&self) -> &[f64] {
        self.0.root()
    }

    pub fn s_x_given_a(&self, a: usize) -> &[f64] {
        self.0.mid(a)
    }

    pub fn s_y_given_ax(&self, a: usize, x: usize) -> &[f64] {
        self.0.leaf(a, x)
    }

    pub fn into_chain(self) -> ChainScores {
        self.0
    }
}

impl AntiCausalParams {
    /// `s_a` (length k), `s_y_given_a` indexed `[a*k + y]`, `s_x_given_ay`
    /// indexed `[(a*k + y)*k + x]`.
    pub fn new(k: usize, s_a: Vec<f64>, s_y_given_a: Vec<f64>, s_x_given_ay: Vec<f64>) -> Result<Self> {
        ChainScores::new(k, s_a, s_y_given_a, s_x_given_ay).map(Self)
    }

    pub fn zeros(k: usize) -> Self {
        Self(ChainScores::zeros(k))
    }

    pub fn s_a(&self) -> &[f64] {
        self.0.root()
    }

    pub fn s_y_given_a(&self, a: usize) -> &[f64] {
        self.0.mid(a)
    }

    pub fn s_x_given_ay(&self, a: usize, y: usize) -> &[f64] {
        self.0.leaf(a, y)
    }

    pub fn into_chain(self) -> ChainScores {
        self.0
    }
}

impl Factorization for CausalParams {
    const TAG: ModelTag = ModelTag::Causal;

    fn chain(&self) -> &ChainScores {
        &self.0
    }

    fn chain_mut(&mut self) -> &mut ChainScores {
        &mut self.0
    }

    fn from_chain(chain: ChainScores) -> Self {
        Self(chain)
    }

    #[inline]
    fn route(x: usize, y: usize) -> (usize, usize) {
        (x, y)
    }
}

impl Factorization for AntiCausalParams {
    const TAG: ModelTag = ModelTag::AntiCausal;

    fn chain(&self) -> &ChainScores {
        &self.0
    }

    fn chain_mut(&mut self) -> &mut ChainScores {
        &mut self.0
    }

    fn from_chain(chain: ChainScores) -> Self {
        Self(chain)
    }

    #[inline]
    fn route(x: usize, y: usize) -> (usize, usize) {
        (y, x)
    }
}

pub fn assemble_causal(theta: &CausalParams) -> JointDistribution {
    theta.assemble()
}

pub fn assemble_anticausal(theta: &AntiCausalParams) -> JointDistribution {
    theta.assemble()
}

/// Bayes reversal in probability space:
/// `p(y|a) = sum_x p(x|a) p(y|a,x)` and `p(x|a,y) = p(x|a) p(y|a,x) / p(y|a)`.
///
/// `s_A` is copied bit-for-bit; it is shared by both models.
pub fn reverse_factorization(theta: &CausalParams) -> AntiCausalParams {
    let chain = theta.chain();
    let k = chain.k();
    let (_, px_a, py_ax) = chain.probabilities();

    let mut s_y_given_a = Vec::with_capacity(k * k);
    let mut s_x_given_ay = vec![0.0; k * k * k];
    let mut py_a = vec![0.0; k];
    let mut px_ay = vec![0.0; k];
    for a in 0..k {
        py_a.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..k {
            let px = px_a[a * k + x];
            for y in 0..k {
                py_a[y] += px * py_ax[(a * k + x) * k + y];
            }
        }
        s_y_given_a.extend_from_slice(&log_centered(&py_a));
        for y in 0..k {
            for x in 0..k {
                px_ay[x] = px_a[a * k + x] * py_ax[(a * k + x) * k + y] / py_a[y];
            }
            let start = (a * k + y) * k;
            s_x_given_ay[start..start + k].copy_from_slice(&log_centered(&px_ay));
        }
    }
    AntiCausalParams(ChainScores {
        k,
        root: chain.root.clone(),
        mid: s_y_given_a,
        leaf: s_x_given_ay,
    })
}

fn log_centered(p: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    center_in_place(&mut s);
    s
}

/// Part-average conditional scores, conditional log-partitions and the
/// per-`a` mean log-partition.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryQuantities {
    pub k: usize,
    /// `(1/K) sum_x s_{y|a,x}`, indexed `[a*k + y]`.
    pub theta1: Vec<f64>,
    /// `(1/K) sum_y s_{x|a,y}`, indexed `[a*k + x]`.
    pub theta2: Vec<f64>,
    /// `log sum_y exp s_{y|a,x}`, indexed `[a*k + x]`.
    pub a1: Vec<f64>,
    /// `log sum_x exp s_{x|a}`, indexed by `a`.
    pub a2: Vec<f64>,
    /// `(1/K) sum_x A1(a, x)`, indexed by `a`.
    pub alpha_bar: Vec<f64>,
}

impl TheoryQuantities {
    pub fn theta1(&self, a: usize) -> &[f64] {
        &self.theta1[a * self.k..(a + 1) * self.k]
    }

    pub fn theta2(&self, a: usize) -> &[f64] {
        &self.theta2[a * self.k..(a + 1) * self.k]
    }
}

pub fn theory_quantities(theta: &CausalParams, theta_ac: &AntiCausalParams) -> TheoryQuantities {
    let c = theta.chain();
    let ac = theta_ac.chain();
    let k = c.k();
    let kf = k as f64;

    let mut theta1 = vec![0.0; k * k];
    let mut theta2 = vec![0.0; k * k];
    for a in 0..k {
        for m in 0..k {
            for l in 0..k {
                // causal leaf: m = x, l = y; anti-causal leaf: m = y, l = x
                theta1[a * k + l] += c.leaf[(a * k + m) * k + l] / kf;
                theta2[a * k + l] += ac.leaf[(a * k + m) * k + l] / kf;
            }
        }
    }
    let a1: Vec<f64> = c.leaf.chunks_exact(k).map(log_sum_exp).collect();
    let a2: Vec<f64> = c.mid.chunks_exact(k).map(log_sum_exp).collect();
    let alpha_bar = a1.chunks_exact(k).map(|row| row.iter().sum::<f64>() / kf).collect();
    TheoryQuantities {
        k,
        theta1,
        theta2,
        a1,
        a2,
        alpha_bar,
    }
}

/// Anti-causal conditional scores computed purely in score space:
/// `s_{x|a,y} = s_{y|a,x} + s_{x|a} - A1(a,x) - theta1(a,y) + alpha_bar(a)`.
///
/// Returned slices are indexed `[a*k + y]`, each holding the `x` scores.
pub fn lemma_anticausal_scores(theta: &CausalParams) -> Vec<ScoreVector> {
    let c = theta.chain();
    let k = c.k();
    let kf = k as f64;
    let a1: Vec<f64> = c.leaf.chunks_exact(k).map(log_sum_exp).collect();

    let mut out = Vec::with_capacity(k * k);
    for a in 0..k {
        let alpha = a1[a * k..(a + 1) * k].iter().sum::<f64>() / kf;
        for y in 0..k {
            let theta1: f64 = (0..k).map(|x| c.leaf[(a * k + x) * k + y]).sum::<f64>() / kf;
            let s: Vec<f64> = (0..k)
                .map(|x| c.leaf[(a * k + x) * k + y] + c.mid[a * k + x] - a1[a * k + x] - theta1 + alpha)
                .collect();
            // zero-sum analytically; not re-centered so the check stays honest
            out.push(ScoreVector::from_raw(s));
        }
    }
    out
}
