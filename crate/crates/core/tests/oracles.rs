mod common;

use causal_adapt::adaptation::expected_nll;
use causal_adapt::categorical::JointDistribution;
use causal_adapt::harness::{least_squares, percentiles};
use causal_adapt::intervention::{apply_marginals, transfer_joint, NewMarginals};
use causal_adapt::theory::{closed_form_deltas, deltas};
use causal_adapt::{
    effect_geometry, grad_nll, kl_divergence, lemma_anticausal_scores, nll_loss, reverse_factorization,
    synthetic_prior, AntiCausalParams, CausalParams, Factorization, InterventionKind, ProbVector, RandomSource,
};
use common::*;

fn random_theta(k: usize, seed: u64) -> CausalParams {
    synthetic_prior(k, &mut RandomSource::new(seed, 99)).unwrap()
}

fn random_marginals(kind: InterventionKind, k: usize, seed: u64) -> NewMarginals {
    NewMarginals::sample(kind, k, 1.0, &mut RandomSource::new(seed, 7)).unwrap()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Oracle scores of both models for a joint, flattened root/mid/leaf.
fn oracle_scores(joint: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |a: usize, x: usize, y: usize| joint[(a * k + x) * k + y];
    let mut causal = Vec::new();
    let pa: Vec<f64> = (0..k).map(|a| (0..k * k).map(|i| joint[a * k * k + i]).sum()).collect();
    causal.extend(centered_log(&pa));
    for a in 0..k {
        let px: Vec<f64> = (0..k).map(|x| (0..k).map(|y| at(a, x, y)).sum()).collect();
        causal.extend(centered_log(&px));
    }
    for a in 0..k {
        for x in 0..k {
            let py: Vec<f64> = (0..k).map(|y| at(a, x, y)).collect();
            causal.extend(centered_log(&py));
        }
    }
    let (pa, pya, pxay) = anticausal_conditionals(joint, k);
    let mut anti = centered_log(&pa);
    for row in pya.chunks_exact(k).chain(pxay.chunks_exact(k)) {
        anti.extend(centered_log(row));
    }
    (causal, anti)
}

#[test]
fn assembled_joint_matches_product_of_conditionals() {
    for (k, seed) in [(2, 1), (3, 2), (5, 3), (8, 4)] {
        let theta = random_theta(k, seed);
        let lib = theta.assemble();
        for (u, v) in lib.table().iter().zip(causal_joint(&theta)) {
            assert!((u - v).abs() < 1e-15);
        }
        let anti = reverse_factorization(&theta);
        for (u, v) in anti.assemble().table().iter().zip(anticausal_joint(&anti)) {
            assert!((u - v).abs() < 1e-15);
        }
    }
}

#[test]
fn reversal_matches_brute_force_marginalization() {
    for (k, seed) in [(2, 10), (4, 11), (7, 12)] {
        let theta = random_theta(k, seed);
        let anti = reverse_factorization(&theta);
        let (_, oracle) = oracle_scores(&causal_joint(&theta), k);
        let lib: Vec<f64> = anti.chain().all().collect();
        let diff = lib.iter().zip(&oracle).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "k={k}: {diff}");
    }
}

#[test]
fn lemma_scores_match_brute_force_reversal() {
    for (k, seed) in [(2, 20), (5, 21), (10, 22)] {
        let theta = random_theta(k, seed);
        let (_, _, pxay) = anticausal_conditionals(&causal_joint(&theta), k);
        let lemma = lemma_anticausal_scores(&theta);
        for (row, s) in pxay.chunks_exact(k).zip(&lemma) {
            for (u, v) in centered_log(row).iter().zip(s.iter()) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn loss_matches_oracle_likelihood() {
    for (k, seed) in [(2, 30), (3, 31), (6, 32)] {
        let theta = random_theta(k, seed);
        let anti = reverse_factorization(&theta);
        let batch = lcg_batch(k, 25, seed);
        let joint = causal_joint(&theta);
        assert!((nll_loss(&theta, &batch).unwrap() - oracle_nll(&joint, k, &batch)).abs() < 1e-12);
        assert!((nll_loss(&anti, &batch).unwrap() - oracle_nll(&joint, k, &batch)).abs() < 1e-12);
    }
}

#[test]
fn gradients_match_central_differences() {
    let h = 1e-5;
    for i in 0..20u64 {
        let k = 2 + (i as usize % 4);
        let theta = random_theta(k, 100 + i);
        let batch = lcg_batch(k, 10, i);
        let check = finite_difference_check(&theta, &grad_nll(&theta, &batch).unwrap(), h, |p: &CausalParams| {
            oracle_nll(&causal_joint(p), k, &batch)
        });
        assert!(check.relative_error < 1e-4, "causal {i}: {}", check.relative_error);
        assert!(check.max_slice_sum < 1e-12);

        let anti = reverse_factorization(&theta);
        let check = finite_difference_check(&anti, &grad_nll(&anti, &batch).unwrap(), h, |p: &AntiCausalParams| {
            oracle_nll(&anticausal_joint(p), k, &batch)
        });
        assert!(check.relative_error < 1e-4, "anticausal {i}: {}", check.relative_error);
        assert!(check.max_slice_sum < 1e-12);
    }
}

#[test]
fn population_loss_minus_entropy_is_kl() {
    for (k, seed) in [(2, 40), (4, 41), (6, 42)] {
        let p_star = causal_joint(&random_theta(k, seed));
        let theta = random_theta(k, seed + 1000);
        let q = causal_joint(&theta);
        let entropy: f64 = -p_star.iter().map(|p| p * p.ln()).sum::<f64>();
        let oracle = kl(&p_star, &q);
        let ps = JointDistribution::new(k, p_star.clone()).unwrap();
        let lib_kl = kl_divergence(&ps, &theta.assemble()).unwrap();
        assert!((lib_kl - oracle).abs() < 1e-12);
        let identity = expected_nll(&theta, &ps).unwrap() - entropy;
        assert!((identity - oracle).abs() < 1e-12);
        let anti = reverse_factorization(&theta);
        assert!((expected_nll(&anti, &ps).unwrap() - entropy - oracle).abs() < 1e-12);
    }
}

#[test]
fn transfer_joint_agrees_with_substituted_parameters() {
    for kind in InterventionKind::ALL {
        for (k, seed) in [(2, 50), (5, 51)] {
            let theta = random_theta(k, seed);
            let m = random_marginals(kind, k, seed);
            let pair = apply_marginals(kind, &theta, &m).unwrap();
            let table = transfer_joint(kind, &theta.assemble(), &m).unwrap();
            assert!(pair.p_star.max_abs_diff(&table) < 1e-15, "{kind}");
            assert!(pair.target_anticausal.assemble().max_abs_diff(&table) < 1e-12, "{kind}");
        }
    }
}

#[test]
fn distances_match_oracle_scores() {
    for kind in InterventionKind::ALL {
        for (k, seed) in [(2, 60), (3, 61), (6, 62)] {
            let theta = random_theta(k, seed);
            let m = random_marginals(kind, k, seed);
            let pair = apply_marginals(kind, &theta, &m).unwrap();
            let before = causal_joint(&theta);
            let after = pair.p_star.table().to_vec();
            let (c0, a0) = oracle_scores(&before, k);
            let (c1, a1) = oracle_scores(&after, k);
            let (dc, da) = (sq_dist(&c0, &c1), sq_dist(&a0, &a1));
            let d = deltas(&pair);
            let tol = 1e-9 * (1.0 + dc.max(da));
            assert!((d.delta_causal - dc).abs() < tol, "{kind} k={k}");
            assert!((d.delta_anticausal - da).abs() < tol, "{kind} k={k}");
            let cf = closed_form_deltas(&pair);
            assert!((cf.delta_causal - dc).abs() < tol && (cf.delta_anticausal - da).abs() < tol);
        }
    }
}

#[test]
fn cause_shift_of_independent_model_has_ratio_k() {
    // uniform reference, p*(x) = (1/4, 3/4): every x-slice moves by ln(3)/2
    // per coordinate, and the anti-causal model repeats it for every y.
    let k = 2;
    let theta = CausalParams::zeros(k);
    let m = NewMarginals { cause: Some(ProbVector::new(vec![0.25, 0.75]).unwrap()), ..Default::default() };
    let pair = apply_marginals(InterventionKind::Cause, &theta, &m).unwrap();
    let half_ln3 = 0.549_306_144_334_054_8_f64;
    let d = deltas(&pair);
    assert!((d.delta_causal - 4.0 * half_ln3 * half_ln3).abs() < 1e-14);
    assert!((d.delta_anticausal - 8.0 * half_ln3 * half_ln3).abs() < 1e-14);
}

#[test]
fn effect_gap_prediction_matches_oracle() {
    for (k, seed) in [(2, 70), (3, 71), (5, 72), (10, 73)] {
        let theta = random_theta(k, seed);
        let m = random_marginals(InterventionKind::Effect, k, seed);
        let pair = apply_marginals(InterventionKind::Effect, &theta, &m).unwrap();
        let (c0, a0) = oracle_scores(&causal_joint(&theta), k);
        let (c1, a1) = oracle_scores(pair.p_star.table(), k);
        let gap = sq_dist(&c0, &c1) - sq_dist(&a0, &a1);
        let s_star = centered_log(m.effect.as_ref().unwrap());
        let geo = effect_geometry(&theta, &s_star).unwrap();
        assert!((geo.predicted_gap - gap).abs() / (1.0 + gap.abs()) < 1e-9, "k={k}");
        assert_eq!(geo.causal_predicted_faster(), gap < 0.0);
    }
}

#[test]
fn regression_matches_normal_equations() {
    let points: Vec<(f64, f64)> = (0..40)
        .map(|i| {
            let x = i as f64 * 0.37;
            (x, 2.0 - 0.8 * x + ((i * 7919) % 13) as f64 * 0.1)
        })
        .collect();
    let s = least_squares(&points).unwrap();
    let (a, b, r2) = ols(&points);
    assert!((s.a - a).abs() < 1e-12 && (s.b - b).abs() < 1e-12 && (s.r2 - r2).abs() < 1e-12);
}

#[test]
fn percentiles_match_sorted_interpolation() {
    let data: Vec<f64> = (0..37).map(|i| ((i * 31) % 37) as f64 * 0.5 - 3.0).collect();
    let mut sorted = data.clone();
    sorted.sort_by(f64::total_cmp);
    for q in [0.0, 5.0, 12.5, 50.0, 95.0, 100.0] {
        let pos = q / 100.0 * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let oracle = sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64);
        let lib = percentiles(&data, &[q]).unwrap()[0];
        assert!((lib - oracle).abs() < 1e-12, "q={q}");
    }
}
