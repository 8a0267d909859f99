//! Hard interventions on the bias, the cause, both, or the effect, and the
//! exact post-shift targets of both models.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::categorical::{dirichlet_sample, scores_from_probs, JointDistribution, ProbVector, RandomSource};
use crate::error::{Error, Result};
use crate::scm::{reverse_factorization, AntiCausalParams, CausalParams, Factorization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterventionKind {
    #[serde(rename = "bias")]
    Bias,
    #[serde(rename = "cause")]
    Cause,
    #[serde(rename = "bias-cause")]
    BiasAndCause,
    #[serde(rename = "effect")]
    Effect,
}

impl InterventionKind {
    pub const ALL: [InterventionKind; 4] = [
        InterventionKind::Bias,
        InterventionKind::Cause,
        InterventionKind::BiasAndCause,
        InterventionKind::Effect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InterventionKind::Bias => "bias",
            InterventionKind::Cause => "cause",
            InterventionKind::BiasAndCause => "bias-cause",
            InterventionKind::Effect => "effect",
        }
    }

    pub fn shifts_bias(self) -> bool {
        matches!(self, InterventionKind::Bias | InterventionKind::BiasAndCause)
    }

    pub fn shifts_cause(self) -> bool {
        matches!(self, InterventionKind::Cause | InterventionKind::BiasAndCause)
    }

    pub fn shifts_effect(self) -> bool {
        matches!(self, InterventionKind::Effect)
    }
}

impl fmt::Display for InterventionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterventionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bias" => Ok(Self::Bias),
            "cause" => Ok(Self::Cause),
            "bias-cause" | "bias_cause" | "biasandcause" => Ok(Self::BiasAndCause),
            "effect" => Ok(Self::Effect),
            other => Err(Error::invalid(format!("unknown intervention `{other}`"))),
        }
    }
}

/// Replacement marginals `p*(a)`, `p*(x)`, `p*(y)`; exactly the ones the
/// intervention kind needs must be present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewMarginals {
    pub bias: Option<ProbVector>,
    pub cause: Option<ProbVector>,
    pub effect: Option<ProbVector>,
}

impl NewMarginals {
    fn check(&self, kind: InterventionKind, k: usize) -> Result<()> {
        let slots = [
            ("bias", &self.bias, kind.shifts_bias()),
            ("cause", &self.cause, kind.shifts_cause()),
            ("effect", &self.effect, kind.shifts_effect()),
        ];
        for (name, slot, needed) in slots {
            match (slot, needed) {
                (Some(p), true) if p.k() != k => {
                    return Err(Error::ShapeMismatch {
                        expected: k,
                        actual: p.k(),
                    })
                }
                (None, true) => {
                    return Err(Error::invalid(format!(
                        "{kind} intervention needs a replacement {name} marginal"
                    )))
                }
                (Some(_), false) => {
                    return Err(Error::invalid(format!(
                        "{kind} intervention does not replace the {name} marginal"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Draws the marginals `kind` replaces from a symmetric Dirichlet.
    pub fn sample(kind: InterventionKind, k: usize, concentration: f64, rng: &mut RandomSource) -> Result<Self> {
        let alpha = vec![concentration; k];
        let mut out = NewMarginals::default();
        if kind.shifts_bias() {
            out.bias = Some(dirichlet_sample(&alpha, rng)?);
        }
        if kind.shifts_cause() {
            out.cause = Some(dirichlet_sample(&alpha, rng)?);
        }
        if kind.shifts_effect() {
            out.effect = Some(dirichlet_sample(&alpha, rng)?);
        }
        Ok(out)
    }
}

/// Matched reference/transfer instance shared by both models.
#[derive(Debug, Clone)]
pub struct TransferPair {
    /// `None` for the unshifted control.
    pub kind: Option<InterventionKind>,
    pub theta0_causal: CausalParams,
    pub theta0_anticausal: AntiCausalParams,
    pub p_star: JointDistribution,
    pub target_causal: CausalParams,
    pub target_anticausal: AntiCausalParams,
}

impl TransferPair {
    /// Control instance with `p* = p`; every target equals its start.
    pub fn unshifted(reference: &CausalParams) -> Self {
        let theta0_anticausal = reverse_factorization(reference);
        Self {
            kind: None,
            p_star: reference.assemble(),
            target_causal: reference.clone(),
            target_anticausal: theta0_anticausal.clone(),
            theta0_causal: reference.clone(),
            theta0_anticausal,
        }
    }

    pub fn k(&self) -> usize {
        self.theta0_causal.k()
    }
}

pub fn apply_intervention(kind: InterventionKind, reference: &CausalParams, rng: &mut RandomSource) -> Result<TransferPair> {
    apply_intervention_with_concentration(kind, reference, 1.0, rng)
}

pub fn apply_intervention_with_concentration(
    kind: InterventionKind,
    reference: &CausalParams,
    concentration: f64,
    rng: &mut RandomSource,
) -> Result<TransferPair> {
    let marginals = NewMarginals::sample(kind, reference.k(), concentration, rng)?;
    apply_marginals(kind, reference, &marginals)
}

/// Substitutes the given marginals into a copy of the reference causal
/// parameters; a shifted cause or effect law is shared by every slice.
pub fn apply_marginals(kind: InterventionKind, reference: &CausalParams, marginals: &NewMarginals) -> Result<TransferPair> {
    let k = reference.k();
    marginals.check(kind, k)?;
    let mut target = reference.clone();
    {
        let chain = target.chain_mut();
        if let Some(p) = &marginals.bias {
            chain.root.copy_from_slice(&scores_from_probs(p)?);
        }
        if let Some(p) = &marginals.cause {
            let s = scores_from_probs(p)?;
            for slice in chain.mid.chunks_exact_mut(k) {
                slice.copy_from_slice(&s);
            }
        }
        if let Some(p) = &marginals.effect {
            let s = scores_from_probs(p)?;
            for slice in chain.leaf.chunks_exact_mut(k) {
                slice.copy_from_slice(&s);
            }
        }
    }
    Ok(TransferPair {
        kind: Some(kind),
        theta0_causal: reference.clone(),
        theta0_anticausal: reverse_factorization(reference),
        p_star: target.assemble(),
        target_anticausal: reverse_factorization(&target),
        target_causal: target,
    })
}

/// Transfer joint straight from the intervention table, e.g. for a cause
/// shift `p*(a,x,y) = p(a) p*(x) p(y|a,x)`.
pub fn transfer_joint(kind: InterventionKind, p: &JointDistribution, marginals: &NewMarginals) -> Result<JointDistribution> {
    let k = p.k();
    marginals.check(kind, k)?;
    let t = p.table();
    let p_a = p.marginal_a();
    let mut table = vec![0.0; k * k * k];
    for a in 0..k {
        let pa = marginals.bias.as_ref().map_or(p_a[a], |m| m[a]);
        for x in 0..k {
            let row = &t[(a * k + x) * k..(a * k + x + 1) * k];
            let p_ax: f64 = row.iter().sum();
            let px = marginals.cause.as_ref().map_or(p_ax / p_a[a], |m| m[x]);
            for y in 0..k {
                let py = marginals.effect.as_ref().map_or(row[y] / p_ax, |m| m[y]);
                table[(a * k + x) * k + y] = pa * px * py;
            }
        }
    }
    JointDistribution::new(k, table)
}
