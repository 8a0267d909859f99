//! C ABI for `causal-adapt`.
//!
//! Objects are opaque handles created by `ca_*_new`-style functions and
//! released with the matching `ca_*_free`. Every fallible function returns a
//! [`CaStatus`]; on failure the message is available from
//! [`ca_last_error_message`] on the same thread. Panics are caught at the
//! boundary and reported as [`CaStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use causal_adapt::categorical::kl_categorical;
use causal_adapt::scm::ChainScores;
use causal_adapt::{
    adapt_pair, apply_intervention, check_proposition, kl_divergence, reverse_factorization, softmax, synthetic_prior,
    AdaptationConfig, AntiCausalParams, CausalParams, Error, Factorization, InterventionKind, JointDistribution,
    RandomSource, TransferPair,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Domain = 3,
    Diverged = 4,
    Io = 5,
    /// Output buffer too small; the required length was written back.
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaInterventionKind {
    Bias = 0,
    Cause = 1,
    BiasAndCause = 2,
    Effect = 3,
}

impl From<CaInterventionKind> for InterventionKind {
    fn from(k: CaInterventionKind) -> Self {
        match k {
            CaInterventionKind::Bias => InterventionKind::Bias,
            CaInterventionKind::Cause => InterventionKind::Cause,
            CaInterventionKind::BiasAndCause => InterventionKind::BiasAndCause,
            CaInterventionKind::Effect => InterventionKind::Effect,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaAdaptationConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub kl_every: usize,
}

impl From<CaAdaptationConfig> for AdaptationConfig {
    fn from(c: CaAdaptationConfig) -> Self {
        AdaptationConfig {
            steps: c.steps,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            track_average: false,
            kl_every: c.kl_every,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaPropositionReport {
    pub trials: usize,
    pub violations: usize,
    pub max_violation: f64,
    pub closed_form_max_residual: f64,
    pub anticausal_closer: usize,
    pub causal_closer: usize,
    pub formula_discrepancy: bool,
}

pub struct CaRandomSource(RandomSource);
pub struct CaCausalParams(CausalParams);
pub struct CaAntiCausalParams(AntiCausalParams);
pub struct CaTransferPair(TransferPair);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CaStatus {
    match e {
        Error::Domain(_) => CaStatus::Domain,
        Error::Diverged { .. } => CaStatus::Diverged,
        Error::Io { .. } | Error::Ingestion { .. } => CaStatus::Io,
        _ => CaStatus::InvalidInput,
    }
}

struct Fail(CaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CaStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> CaStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CaStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {message}"));
            CaStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_value<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value;
    Ok(())
}

fn copy_to(src: &[f64], dst: *mut f64, capacity: usize, required: *mut usize) -> Result<(), Fail> {
    if !required.is_null() {
        unsafe { *required = src.len() };
    }
    if capacity < src.len() {
        return Err(Fail(
            CaStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", src.len()),
        ));
    }
    unsafe { slice_mut(dst, src.len(), "buffer")? }.copy_from_slice(src);
    Ok(())
}

/// Copies the last error message of this thread, NUL-terminated and
/// truncated to `capacity`. Returns the full message length (without NUL),
/// or 0 when there is none.
///
/// # Safety
/// `buf` must be valid for `capacity` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn ca_last_error_message(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && capacity > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ca_random_source_new(seed: u64, stream: u64, out: *mut *mut CaRandomSource) -> CaStatus {
    guard(|| put(out, CaRandomSource(RandomSource::new(seed, stream))))
}

/// # Safety
/// `rng` must come from `ca_random_source_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn ca_random_source_free(rng: *mut CaRandomSource) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

/// Softmax of `k` scores into `out`.
///
/// # Safety
/// `scores` and `out` must hold `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn ca_softmax(scores: *const f64, k: usize, out: *mut f64) -> CaStatus {
    guard(|| {
        let p = softmax(slice(scores, k, "scores")?)?;
        slice_mut(out, k, "out")?.copy_from_slice(&p);
        Ok(())
    })
}

/// `KL(p || q)` of two categorical laws over `k` classes.
///
/// # Safety
/// `p` and `q` must hold `k` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ca_kl_categorical(p: *const f64, q: *const f64, k: usize, out: *mut f64) -> CaStatus {
    guard(|| {
        let v = kl_categorical(slice(p, k, "p")?, slice(q, k, "q")?)?;
        put_value(out, v)
    })
}

/// `KL(p* || q)` of two joint tables of `k^3` entries indexed `(a*k + x)*k + y`.
///
/// # Safety
/// `p_star` and `q` must hold `k^3` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ca_kl_joint(p_star: *const f64, q: *const f64, k: usize, out: *mut f64) -> CaStatus {
    guard(|| {
        let n = k.checked_pow(3).ok_or_else(|| Fail(CaStatus::InvalidInput, "k too large".into()))?;
        let p = JointDistribution::new(k, slice(p_star, n, "p_star")?.to_vec())?;
        let q = JointDistribution::new(k, slice(q, n, "q")?.to_vec())?;
        put_value(out, kl_divergence(&p, &q)?)
    })
}

/// Synthetic Dirichlet(1) causal prior.
///
/// # Safety
/// `rng` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ca_synthetic_prior(k: usize, rng: *mut CaRandomSource, out: *mut *mut CaCausalParams) -> CaStatus {
    guard(|| {
        let rng = handle_mut(rng, "rng")?;
        put(out, CaCausalParams(synthetic_prior(k, &mut rng.0)?))
    })
}

/// Causal parameters from conditional probability tables: `root` holds `k`,
/// `mid` holds `k*k` (`p(x|a)` at `a*k + x`), `leaf` holds `k^3`
/// (`p(y|a,x)` at `(a*k + x)*k + y`).
///
/// # Safety
/// Buffers must hold the stated number of doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ca_causal_params_from_probabilities(
    k: usize,
    root: *const f64,
    mid: *const f64,
    leaf: *const f64,
    out: *mut *mut CaCausalParams,
) -> CaStatus {
    guard(|| {
        let chain = ChainScores::from_probabilities(
            k,
            slice(root, k, "root")?,
            slice(mid, k * k, "mid")?,
            slice(leaf, k * k * k, "leaf")?,
        )?;
        put(out, CaCausalParams(CausalParams::from_chain(chain)))
    })
}

/// # Safety
/// `params` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ca_causal_params_k(params: *const CaCausalParams) -> usize {
    params.as_ref().map_or(0, |p| p.0.k())
}

/// # Safety
/// `params` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ca_causal_params_free(params: *mut CaCausalParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// # Safety
/// `params` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ca_anticausal_params_free(params: *mut CaAntiCausalParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Anti-causal parameters describing the same joint.
///
/// # Safety
/// `params` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ca_reverse_factorization(
    params: *const CaCausalParams,
    out: *mut *mut CaAntiCausalParams,
) -> CaStatus {
    guard(|| {
        let p = handle(params, "params")?;
        put(out, CaAntiCausalParams(reverse_factorization(&p.0)))
    })
}

/// Writes the `k^3` joint table into `out` and its length into `required`.
///
/// # Safety
/// `out` must hold `capacity` doubles; `required` may be null.
#[no_mangle]
pub unsafe extern "C" fn ca_causal_assemble(
    params: *const CaCausalParams,
    out: *mut f64,
    capacity: usize,
    required: *mut usize,
) -> CaStatus {
    guard(|| copy_to(handle(params, "params")?.0.assemble().table(), out, capacity, required))
}

/// # Safety
/// As for [`ca_causal_assemble`].
#[no_mangle]
pub unsafe extern "C" fn ca_anticausal_assemble(
    params: *const CaAntiCausalParams,
    out: *mut f64,
    capacity: usize,
    required: *mut usize,
) -> CaStatus {
    guard(|| copy_to(handle(params, "params")?.0.assemble().table(), out, capacity, required))
}

/// Draws replacement marginals from `rng` and builds the matched
/// reference/transfer pair.
///
/// # Safety
/// `reference` and `rng` must be live handles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ca_transfer_pair_new(
    kind: CaInterventionKind,
    reference: *const CaCausalParams,
    rng: *mut CaRandomSource,
    out: *mut *mut CaTransferPair,
) -> CaStatus {
    guard(|| {
        let reference = handle(reference, "reference")?;
        let rng = handle_mut(rng, "rng")?;
        put(out, CaTransferPair(apply_intervention(kind.into(), &reference.0, &mut rng.0)?))
    })
}

/// # Safety
/// `pair` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ca_transfer_pair_free(pair: *mut CaTransferPair) {
    if !pair.is_null() {
        drop(Box::from_raw(pair));
    }
}

/// Initial squared score distances of both models.
///
/// # Safety
/// `pair` must be a live handle; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn ca_transfer_pair_deltas(
    pair: *const CaTransferPair,
    delta_causal: *mut f64,
    delta_anticausal: *mut f64,
) -> CaStatus {
    guard(|| {
        let d = causal_adapt::theory::deltas(&handle(pair, "pair")?.0);
        put_value(delta_causal, d.delta_causal)?;
        put_value(delta_anticausal, d.delta_anticausal)
    })
}

/// Adapts both models of `pair`. KL at every recorded step is written to
/// `kl_causal` and `kl_anticausal`; `required` receives the step count.
///
/// # Safety
/// `pair` and `rng` must be live handles; buffers must hold `capacity`
/// doubles; `required` may be null.
#[no_mangle]
pub unsafe extern "C" fn ca_adapt_pair(
    pair: *const CaTransferPair,
    config: CaAdaptationConfig,
    rng: *const CaRandomSource,
    kl_causal: *mut f64,
    kl_anticausal: *mut f64,
    capacity: usize,
    required: *mut usize,
) -> CaStatus {
    guard(|| {
        let pair = handle(pair, "pair")?;
        let rng = handle(rng, "rng")?;
        let config = AdaptationConfig::from(config);
        config.validate()?;
        let n = config.recorded_steps().count();
        if !required.is_null() {
            *required = n;
        }
        if capacity < n {
            return Err(Fail(CaStatus::BufferTooSmall, format!("buffer holds {capacity} values, {n} needed")));
        }
        let run = adapt_pair(&pair.0, &config, &rng.0)?;
        let c: Vec<f64> = run.causal.kl_current.iter().map(|(_, v)| *v).collect();
        let a: Vec<f64> = run.anticausal.kl_current.iter().map(|(_, v)| *v).collect();
        copy_to(&c, kl_causal, capacity, ptr::null_mut())?;
        copy_to(&a, kl_anticausal, capacity, ptr::null_mut())
    })
}

/// Runs the distance-relation check for `kind` over `trials` synthetic trials.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ca_check_proposition(
    kind: CaInterventionKind,
    trials: usize,
    k: usize,
    seed: u64,
    out: *mut CaPropositionReport,
) -> CaStatus {
    guard(|| {
        let r = check_proposition(kind.into(), trials, k, &RandomSource::new(seed, 0))?;
        put_value(
            out,
            CaPropositionReport {
                trials: r.trials,
                violations: r.violations,
                max_violation: r.max_violation,
                closed_form_max_residual: r.closed_form_max_residual,
                anticausal_closer: r.anticausal_closer,
                causal_closer: r.causal_closer,
                formula_discrepancy: r.formula_discrepancy,
            },
        )
    })
}
