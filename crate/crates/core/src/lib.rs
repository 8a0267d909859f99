//! Adaptation-speed analysis of causal and anti-causal models of a
//! categorical bias/cause/effect system under interventions.
//!
//! The crate covers exact categorical arithmetic ([`categorical`]), the two
//! factorizations and their Bayes reversal ([`scm`]), the four intervention
//! kinds ([`intervention`]), closed-form distance analysis ([`theory`]), SGD
//! adaptation with exact KL tracking ([`adaptation`]), reference priors
//! ([`priors`]) and the experiment harness ([`harness`]).

pub mod adaptation;
pub mod categorical;
pub mod cli;
pub mod error;
pub mod harness;
pub mod intervention;
pub mod priors;
pub mod scm;
pub mod theory;

pub use adaptation::{adapt, adapt_pair, grad_nll, nll_loss, AdaptationConfig, PairTrajectory, Sample, Trajectory};
pub use categorical::{
    dirichlet_sample, kl_divergence, sample_category, scores_from_probs, softmax, ClassCount,
    JointDistribution, ProbVector, RandomSource, ScoreVector,
};
pub use error::{Error, Result};
pub use intervention::{apply_intervention, transfer_joint, InterventionKind, NewMarginals, TransferPair};
pub use priors::{load_counts, mix_marginal, params_from_joint, synthetic_prior, PriorConfig};
pub use scm::{
    assemble_anticausal, assemble_causal, lemma_anticausal_scores, reverse_factorization,
    theory_quantities, AntiCausalParams, CausalParams, Factorization, ModelTag, TheoryQuantities,
};
pub use theory::{check_proposition, delta_anticausal, delta_causal, effect_geometry, DeltaPair, EffectGeometry, PropositionReport};
pub use harness::{least_squares, percentiles, run_experiment, ExperimentConfig, ExperimentResult, RegressionStats};
