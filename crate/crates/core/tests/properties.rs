use causal_adapt::categorical::kl_categorical;
use causal_adapt::harness::{least_squares, percentiles};
use causal_adapt::intervention::{apply_marginals, NewMarginals};
use causal_adapt::priors::mix_marginal;
use causal_adapt::theory::deltas;
use causal_adapt::{
    reverse_factorization, scores_from_probs, softmax, CausalParams, Factorization, InterventionKind, ProbVector,
};
use proptest::prelude::*;

fn centered(mut v: Vec<f64>, k: usize) -> Vec<f64> {
    for s in v.chunks_exact_mut(k) {
        let m = s.iter().sum::<f64>() / k as f64;
        s.iter_mut().for_each(|x| *x -= m);
    }
    v
}

fn theta_strategy() -> impl Strategy<Value = CausalParams> {
    (2usize..=5).prop_flat_map(|k| {
        prop::collection::vec(-4.0f64..4.0, k + k * k + k * k * k).prop_map(move |raw| {
            let root = centered(raw[..k].to_vec(), k);
            let mid = centered(raw[k..k + k * k].to_vec(), k);
            let leaf = centered(raw[k + k * k..].to_vec(), k);
            CausalParams::new(k, root, mid, leaf).unwrap()
        })
    })
}

fn prob_strategy(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
        let z: f64 = v.iter().sum();
        v.into_iter().map(|x| x / z).collect()
    })
}

fn marginal_for(kind: InterventionKind, p: Vec<f64>) -> NewMarginals {
    let p = Some(ProbVector::new(p).unwrap());
    match kind {
        InterventionKind::Bias => NewMarginals { bias: p, ..Default::default() },
        InterventionKind::Cause => NewMarginals { cause: p, ..Default::default() },
        InterventionKind::BiasAndCause => NewMarginals { bias: p.clone(), cause: p, effect: None },
        InterventionKind::Effect => NewMarginals { effect: p, ..Default::default() },
    }
}

proptest! {
    #[test]
    fn scores_round_trip_through_softmax(raw in prop::collection::vec(-20.0f64..20.0, 2..12)) {
        let k = raw.len();
        let s = centered(raw, k);
        let back = scores_from_probs(&softmax(&s).unwrap()).unwrap();
        for (u, v) in s.iter().zip(back.iter()) {
            prop_assert!((u - v).abs() < 1e-9);
        }
        prop_assert!(back.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn softmax_ignores_constant_shifts(raw in prop::collection::vec(-20.0f64..20.0, 2..12), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = raw.iter().map(|v| v + c).collect();
        let (p, q) = (softmax(&raw).unwrap(), softmax(&shifted).unwrap());
        for (u, v) in p.iter().zip(q.iter()) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_the_diagonal((p, q) in (2usize..10).prop_flat_map(|k| (prob_strategy(k), prob_strategy(k)))) {
        prop_assert!(kl_categorical(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(kl_categorical(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn reversal_preserves_the_joint(theta in theta_strategy()) {
        let anti = reverse_factorization(&theta);
        prop_assert!(theta.assemble().max_abs_diff(&anti.assemble()) < 1e-12);
        prop_assert!(anti.chain().max_gauge_residual() < 1e-9);
        prop_assert_eq!(anti.s_a(), theta.s_a());
    }

    #[test]
    fn mixing_is_affine((p, q) in (2usize..8).prop_flat_map(|k| (prob_strategy(k), prob_strategy(k))), t in 0.0f64..=1.0) {
        let m = mix_marginal(&p, &q, t).unwrap();
        for i in 0..p.len() {
            prop_assert!((m[i] - ((1.0 - t) * p[i] + t * q[i])).abs() < 1e-15);
        }
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_relations_hold(theta in theta_strategy(), seed in 0u64..1000) {
        let k = theta.k();
        let p = {
            let raw: Vec<f64> = (0..k).map(|i| 0.05 + ((seed as usize * 31 + i * 17) % 23) as f64).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / z).collect::<Vec<_>>()
        };
        for kind in [InterventionKind::Bias, InterventionKind::Cause, InterventionKind::BiasAndCause] {
            let pair = apply_marginals(kind, &theta, &marginal_for(kind, p.clone())).unwrap();
            let d = deltas(&pair);
            let atol = d.atol();
            match kind {
                InterventionKind::Bias => prop_assert!((d.delta_causal - d.delta_anticausal).abs() <= atol),
                InterventionKind::Cause => prop_assert!(d.delta_anticausal >= k as f64 * d.delta_causal - atol),
                _ => prop_assert!(d.delta_anticausal >= d.delta_causal - atol),
            }
        }
    }

    #[test]
    fn regression_scales_with_the_response(
        points in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
        c in 0.1f64..10.0,
    ) {
        prop_assume!(points.iter().any(|p| (p.0 - points[0].0).abs() > 1e-3));
        let s = least_squares(&points).unwrap();
        let scaled: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x, c * y)).collect();
        let t = least_squares(&scaled).unwrap();
        prop_assert!((t.a - c * s.a).abs() <= 1e-9 * (1.0 + (c * s.a).abs()));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&s.r2));
        prop_assert!((t.r2 - s.r2).abs() < 1e-9);
    }

    #[test]
    fn percentiles_are_monotone(data in prop::collection::vec(-1e3f64..1e3, 1..60)) {
        let q = percentiles(&data, &[5.0, 50.0, 95.0]).unwrap();
        prop_assert!(q[0] <= q[1] && q[1] <= q[2]);
        let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= q[0] && q[2] <= hi);
    }
}
