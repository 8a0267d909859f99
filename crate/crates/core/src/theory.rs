//! Initial score-space distances of both models, the effect-shift geometry,
//! and Monte-Carlo checkers for the distance inequalities.
//!
//! The flat loop over every parameter entry ([`deltas`]) is authoritative.
//! The per-kind closed forms ([`closed_form_deltas`]) and the effect
//! geometry ([`effect_geometry`]) are checked against it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::categorical::RandomSource;
use crate::error::{Error, Result};
use crate::intervention::{apply_intervention, InterventionKind, TransferPair};
use crate::priors::synthetic_prior;
use crate::scm::{reverse_factorization, theory_quantities, CausalParams, Factorization};

/// Tolerance on the relative residual of the effect geometry identity.
pub const GEOMETRY_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaPair {
    pub delta_causal: f64,
    pub delta_anticausal: f64,
}

impl DeltaPair {
    /// `delta_causal - delta_anticausal`; positive means the anti-causal
    /// model starts closer to its target.
    pub fn gap(&self) -> f64 {
        self.delta_causal - self.delta_anticausal
    }

    /// `1e-9 * (1 + max(delta))`.
    pub fn atol(&self) -> f64 {
        1e-9 * (1.0 + self.delta_causal.max(self.delta_anticausal))
    }
}

pub fn delta_causal(pair: &TransferPair) -> f64 {
    sq_dist(pair.theta0_causal.chain().all(), pair.target_causal.chain().all())
}

pub fn delta_anticausal(pair: &TransferPair) -> f64 {
    sq_dist(
        pair.theta0_anticausal.chain().all(),
        pair.target_anticausal.chain().all(),
    )
}

pub fn deltas(pair: &TransferPair) -> DeltaPair {
    DeltaPair {
        delta_causal: delta_causal(pair),
        delta_anticausal: delta_anticausal(pair),
    }
}

fn sq_dist(u: impl Iterator<Item = f64>, v: impl Iterator<Item = f64>) -> f64 {
    u.zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn sq(u: &[f64], v: &[f64]) -> f64 {
    sq_dist(u.iter().copied(), v.iter().copied())
}

/// Distances from the per-kind formulas, summing only the factors each
/// intervention is supposed to move.
pub fn closed_form_deltas(pair: &TransferPair) -> DeltaPair {
    let k = pair.k();
    let c0 = &pair.theta0_causal;
    let ct = &pair.target_causal;
    let a0 = &pair.theta0_anticausal;
    let at = &pair.target_anticausal;
    let Some(kind) = pair.kind else {
        return DeltaPair {
            delta_causal: 0.0,
            delta_anticausal: 0.0,
        };
    };

    let bias = if kind.shifts_bias() { sq(c0.s_a(), ct.s_a()) } else { 0.0 };
    // sum_a ||s_{Y|a} - s*_{Y|a}||^2 + sum_{a,y} ||s_{X|a,y} - s*_{X|a,y}||^2
    let anticausal_conditionals = |s_star_y: Option<&[f64]>| -> f64 {
        (0..k)
            .map(|a| {
                let target_y = s_star_y.unwrap_or_else(|| at.s_y_given_a(a));
                let y_term = sq(a0.s_y_given_a(a), target_y);
                let x_term: f64 = (0..k)
                    .map(|y| {
                        // under an effect shift p*(x|a,y) = p(x|a)
                        let target_x = if s_star_y.is_some() {
                            c0.s_x_given_a(a)
                        } else {
                            at.s_x_given_ay(a, y)
                        };
                        sq(a0.s_x_given_ay(a, y), target_x)
                    })
                    .sum();
                y_term + x_term
            })
            .sum()
    };

    match kind {
        InterventionKind::Bias => DeltaPair {
            delta_causal: bias,
            delta_anticausal: bias,
        },
        InterventionKind::Cause | InterventionKind::BiasAndCause => {
            let s_star_x = ct.s_x_given_a(0);
            let cause: f64 = (0..k).map(|a| sq(c0.s_x_given_a(a), s_star_x)).sum();
            DeltaPair {
                delta_causal: bias + cause,
                delta_anticausal: bias + anticausal_conditionals(None),
            }
        }
        InterventionKind::Effect => {
            let s_star_y = ct.s_y_given_ax(0, 0);
            let effect: f64 = (0..k)
                .flat_map(|a| (0..k).map(move |x| (a, x)))
                .map(|(a, x)| sq(c0.s_y_given_ax(a, x), s_star_y))
                .sum();
            DeltaPair {
                delta_causal: effect,
                delta_anticausal: anticausal_conditionals(Some(s_star_y)),
            }
        }
    }
}

/// Center `c` and squared radius `R^2` of the region of effect marginals for
/// which the causal model starts closer to its target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectGeometry {
    pub k: usize,
    /// `(K theta1(a, .) - s_{Y|a}) / (K - 1)`, indexed `[a*k + y]`.
    pub c: Vec<f64>,
    pub r_squared: f64,
    /// `sum_a ||s*_Y - c(a, .)||^2`.
    pub distance_squared: f64,
    /// `(K - 1)(distance_squared - r_squared)`, the predicted
    /// `delta_causal - delta_anticausal`.
    pub predicted_gap: f64,
}

impl EffectGeometry {
    pub fn causal_predicted_faster(&self) -> bool {
        self.distance_squared < self.r_squared
    }
}

pub fn effect_geometry(reference: &CausalParams, s_star_y: &[f64]) -> Result<EffectGeometry> {
    let k = reference.k();
    if k < 2 {
        return Err(Error::UndefinedGeometry(
            "effect geometry needs at least two classes".into(),
        ));
    }
    if s_star_y.len() != k {
        return Err(Error::ShapeMismatch {
            expected: k,
            actual: s_star_y.len(),
        });
    }
    let kf = k as f64;
    let anticausal = reverse_factorization(reference);
    let tq = theory_quantities(reference, &anticausal);

    let mut c = vec![0.0; k * k];
    let (mut c_norm, mut theta1_norm, mut s_y_a_norm, mut theta2_gap, mut distance) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for a in 0..k {
        let s_y_a = anticausal.s_y_given_a(a);
        let s_x_a = reference.s_x_given_a(a);
        for y in 0..k {
            let t1 = tq.theta1[a * k + y];
            let cy = (kf * t1 - s_y_a[y]) / (kf - 1.0);
            c[a * k + y] = cy;
            c_norm += cy * cy;
            theta1_norm += t1 * t1;
            s_y_a_norm += s_y_a[y] * s_y_a[y];
            distance += (s_star_y[y] - cy) * (s_star_y[y] - cy);
        }
        for x in 0..k {
            let d = tq.theta2[a * k + x] - s_x_a[x];
            theta2_gap += d * d;
        }
    }
    let r_squared =
        ((kf - 1.0) * c_norm - kf * theta1_norm + s_y_a_norm + kf * theta2_gap) / (kf - 1.0);
    Ok(EffectGeometry {
        k,
        c,
        r_squared,
        distance_squared: distance,
        predicted_gap: (kf - 1.0) * (distance - r_squared),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub kind: InterventionKind,
    pub k: usize,
    pub trials: usize,
    pub violations: usize,
    pub max_violation: f64,
    /// Effect kind: largest `|predicted_gap - (dc - da)|`. Other kinds: 0.
    pub closed_form_max_residual: f64,
    /// Effect kind: largest `|predicted_gap - (dc - da)| / (1 + |dc - da|)`.
    pub closed_form_max_relative_residual: f64,
    /// Largest disagreement between the flat-loop and per-kind distances.
    pub per_kind_max_residual: f64,
    /// Trials with `dc - da > atol` (anti-causal starts closer).
    pub anticausal_closer: usize,
    /// Trials with `da - dc > atol` (causal starts closer).
    pub causal_closer: usize,
    /// Set when the effect geometry residual exceeds its tolerance.
    pub formula_discrepancy: bool,
}

impl PropositionReport {
    fn empty(kind: InterventionKind, k: usize) -> Self {
        Self {
            kind,
            k,
            trials: 0,
            violations: 0,
            max_violation: 0.0,
            closed_form_max_residual: 0.0,
            closed_form_max_relative_residual: 0.0,
            per_kind_max_residual: 0.0,
            anticausal_closer: 0,
            causal_closer: 0,
            formula_discrepancy: false,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.trials += other.trials;
        self.violations += other.violations;
        self.max_violation = self.max_violation.max(other.max_violation);
        self.closed_form_max_residual = self.closed_form_max_residual.max(other.closed_form_max_residual);
        self.closed_form_max_relative_residual = self
            .closed_form_max_relative_residual
            .max(other.closed_form_max_relative_residual);
        self.per_kind_max_residual = self.per_kind_max_residual.max(other.per_kind_max_residual);
        self.anticausal_closer += other.anticausal_closer;
        self.causal_closer += other.causal_closer;
        self.formula_discrepancy |= other.formula_discrepancy;
        self
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Outcome of one checked trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialCheck {
    pub deltas: DeltaPair,
    pub closed_form: DeltaPair,
    /// Amount by which the claimed relation fails beyond tolerance (0 if it holds).
    pub violation: f64,
    pub predicted_gap: Option<f64>,
}

/// Tests one transfer pair against the relation claimed for its kind.
pub fn check_pair(pair: &TransferPair) -> Result<TrialCheck> {
    let d = deltas(pair);
    let closed_form = closed_form_deltas(pair);
    let atol = d.atol();
    let k = pair.k() as f64;
    let mut predicted_gap = None;
    let violation = match pair.kind {
        None => (d.delta_causal.max(d.delta_anticausal) - atol).max(0.0),
        Some(InterventionKind::Bias) => ((d.delta_causal - d.delta_anticausal).abs() - atol).max(0.0),
        Some(InterventionKind::Cause) => (k * d.delta_causal - atol - d.delta_anticausal).max(0.0),
        Some(InterventionKind::BiasAndCause) => (d.delta_causal - atol - d.delta_anticausal).max(0.0),
        Some(InterventionKind::Effect) => {
            let geometry = effect_geometry(&pair.theta0_causal, pair.target_causal.s_y_given_ax(0, 0))?;
            predicted_gap = Some(geometry.predicted_gap);
            let gap = d.gap();
            if gap.abs() > atol && gap.signum() != geometry.predicted_gap.signum() {
                gap.abs()
            } else {
                0.0
            }
        }
    };
    Ok(TrialCheck {
        deltas: d,
        closed_form,
        violation,
        predicted_gap,
    })
}

/// Runs `trials` independent synthetic-prior trials of `kind` at class count
/// `k`. Trial `i` draws from `rng.fork(i)`, so results do not depend on
/// thread scheduling.
pub fn check_proposition(kind: InterventionKind, trials: usize, k: usize, rng: &RandomSource) -> Result<PropositionReport> {
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    if k == 0 {
        return Err(Error::invalid("class count must be at least 1"));
    }
    if kind == InterventionKind::Effect && k < 2 {
        return Err(Error::UndefinedGeometry("effect checks need k >= 2".into()));
    }
    (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<PropositionReport> {
            let base = rng.fork(trial as u64);
            let prior = synthetic_prior(k, &mut base.fork(0))?;
            let pair = apply_intervention(kind, &prior, &mut base.fork(1))?;
            let check = check_pair(&pair)?;
            let d = check.deltas;
            let mut report = PropositionReport::empty(kind, k);
            report.trials = 1;
            report.violations = usize::from(check.violation > 0.0);
            report.max_violation = check.violation;
            report.per_kind_max_residual = (check.closed_form.delta_causal - d.delta_causal)
                .abs()
                .max((check.closed_form.delta_anticausal - d.delta_anticausal).abs());
            let atol = d.atol();
            report.anticausal_closer = usize::from(d.gap() > atol);
            report.causal_closer = usize::from(-d.gap() > atol);
            if let Some(predicted) = check.predicted_gap {
                let residual = (predicted - d.gap()).abs();
                report.closed_form_max_residual = residual;
                report.closed_form_max_relative_residual = residual / (1.0 + d.gap().abs());
                report.formula_discrepancy = report.closed_form_max_relative_residual > GEOMETRY_REL_TOL;
            }
            Ok(report)
        })
        .try_reduce(|| PropositionReport::empty(kind, k), |a, b| Ok(a.merge(b)))
}
