//! Independent reference computations for the integration tests. Nothing
//! here calls into the library's numerics beyond reading parameters.

#![allow(dead_code)]

use causal_adapt::adaptation::Sample;
use causal_adapt::scm::ChainScores;
use causal_adapt::{AntiCausalParams, CausalParams, Factorization};

pub fn softmax(s: &[f64]) -> Vec<f64> {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// `p(a,x,y)` by multiplying the three causal conditionals directly.
pub fn causal_joint(theta: &CausalParams) -> Vec<f64> {
    let k = theta.k();
    let pa = softmax(theta.s_a());
    let mut out = vec![0.0; k * k * k];
    for a in 0..k {
        let px = softmax(theta.s_x_given_a(a));
        for x in 0..k {
            let py = softmax(theta.s_y_given_ax(a, x));
            for y in 0..k {
                out[(a * k + x) * k + y] = pa[a] * px[x] * py[y];
            }
        }
    }
    out
}

/// `p(a,x,y)` from the anti-causal conditionals `p(a) p(y|a) p(x|a,y)`.
pub fn anticausal_joint(theta: &AntiCausalParams) -> Vec<f64> {
    let k = theta.k();
    let pa = softmax(theta.s_a());
    let mut out = vec![0.0; k * k * k];
    for a in 0..k {
        let py = softmax(theta.s_y_given_a(a));
        for y in 0..k {
            let px = softmax(theta.s_x_given_ay(a, y));
            for x in 0..k {
                out[(a * k + x) * k + y] = pa[a] * py[y] * px[x];
            }
        }
    }
    out
}

/// Anti-causal conditionals of a joint table by brute-force marginalization:
/// `(p(a), p(y|a) at a*k+y, p(x|a,y) at (a*k+y)*k+x)`.
pub fn anticausal_conditionals(joint: &[f64], k: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let at = |a: usize, x: usize, y: usize| joint[(a * k + x) * k + y];
    let mut pa = vec![0.0; k];
    let mut pya = vec![0.0; k * k];
    let mut pxay = vec![0.0; k * k * k];
    for a in 0..k {
        for x in 0..k {
            for y in 0..k {
                pa[a] += at(a, x, y);
            }
        }
        for y in 0..k {
            let pay: f64 = (0..k).map(|x| at(a, x, y)).sum();
            pya[a * k + y] = pay / pa[a];
            for x in 0..k {
                pxay[(a * k + y) * k + x] = at(a, x, y) / pay;
            }
        }
    }
    (pa, pya, pxay)
}

/// Zero-mean log probabilities.
pub fn centered_log(p: &[f64]) -> Vec<f64> {
    let l: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let m = l.iter().sum::<f64>() / l.len() as f64;
    l.iter().map(|v| v - m).collect()
}

pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

/// Mean NLL of a batch under a joint table.
pub fn oracle_nll(joint: &[f64], k: usize, batch: &[Sample]) -> f64 {
    batch
        .iter()
        .map(|s| -joint[(s.a * k + s.x) * k + s.y].ln())
        .sum::<f64>()
        / batch.len() as f64
}

/// Result of a central finite-difference gradient check.
pub struct GradCheck {
    /// `||fd - g|| / max(||fd||, ||g||)`.
    pub relative_error: f64,
    pub max_abs_error: f64,
    /// Largest `|sum|` over the analytic gradient's slices.
    pub max_slice_sum: f64,
}

/// Differentiates `loss` along `e_i - 1/k` within each slice, which keeps
/// the scores gauge-fixed; for a zero-sum gradient this directional
/// derivative equals the `i`-th component.
pub fn finite_difference_check<F: Factorization>(
    params: &F,
    analytic: &ChainScores,
    h: f64,
    loss: impl Fn(&F) -> f64,
) -> GradCheck {
    let k = params.k();
    let chain = params.chain();
    let (root, mid, leaf) = (chain.root_flat().to_vec(), chain.mid_flat().to_vec(), chain.leaf_flat().to_vec());
    let g: Vec<f64> = analytic.all().collect();
    let mut fd = Vec::with_capacity(g.len());
    let blocks = [root.len(), mid.len(), leaf.len()];
    for (block, &len) in blocks.iter().enumerate() {
        for i in 0..len {
            let eval = |sign: f64| {
                let mut parts = [root.clone(), mid.clone(), leaf.clone()];
                let start = i / k * k;
                for v in &mut parts[block][start..start + k] {
                    *v -= sign * h / k as f64;
                }
                parts[block][i] += sign * h;
                let [r, m, l] = parts;
                loss(&F::from_chain(ChainScores::new(k, r, m, l).expect("perturbation keeps the gauge")))
            };
            fd.push((eval(1.0) - eval(-1.0)) / (2.0 * h));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = fd.iter().zip(&g).map(|(a, b)| a - b).collect();
    let denom = norm(&fd).max(norm(&g)).max(f64::MIN_POSITIVE);
    let max_slice_sum = g.chunks_exact(k).map(|s| s.iter().sum::<f64>().abs()).fold(0.0, f64::max);
    GradCheck {
        relative_error: norm(&diff) / denom,
        max_abs_error: diff.iter().map(|d| d.abs()).fold(0.0, f64::max),
        max_slice_sum,
    }
}

/// Draws a batch uniformly over cells with a tiny LCG so the oracle does not
/// share the library's generator.
pub fn lcg_batch(k: usize, n: usize, seed: u64) -> Vec<Sample> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) as usize) % k
    };
    (0..n).map(|_| Sample { a: next(), x: next(), y: next() }).collect()
}

/// Ordinary least squares by the textbook normal equations.
pub fn ols(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let syy: f64 = points.iter().map(|p| p.1 * p.1).sum();
    let a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let b = (sy - a * sx) / n;
    let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    (a, b, r * r)
}
