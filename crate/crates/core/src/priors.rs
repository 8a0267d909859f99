//! Reference distributions: symmetric-Dirichlet synthetic priors and
//! empirical priors read from category-count files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::categorical::{dirichlet_sample, ClassCount, JointDistribution, RandomSource};
use crate::error::{Error, Result};
use crate::scm::{ChainScores, CausalParams, Factorization};

pub const DEFAULT_SMOOTHING_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "path")]
pub enum PriorSource {
    Synthetic,
    Counts(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub k: ClassCount,
    /// Symmetric Dirichlet concentration for synthetic priors.
    pub concentration: f64,
    pub source: PriorSource,
    /// Added to every cell of a count table, but only when some cell is zero.
    pub smoothing_epsilon: f64,
    /// Weight of the uniform recoloring law mixed into every `p(x | a)`.
    pub p_change: f64,
}

impl PriorConfig {
    pub fn synthetic(k: ClassCount) -> Self {
        Self {
            k,
            concentration: 1.0,
            source: PriorSource::Synthetic,
            smoothing_epsilon: DEFAULT_SMOOTHING_EPSILON,
            p_change: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::invalid("prior concentration must be positive"));
        }
        if !(self.smoothing_epsilon >= 0.0 && self.smoothing_epsilon.is_finite()) {
            return Err(Error::invalid("smoothing epsilon must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.p_change) {
            return Err(Error::invalid("p_change must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A prior that can be drawn per trial. Count files are read once.
#[derive(Debug, Clone)]
pub enum PriorSampler {
    Synthetic { k: usize, concentration: f64, p_change: f64 },
    Fixed(CausalParams),
}

impl PriorSampler {
    pub fn from_config(config: &PriorConfig) -> Result<Self> {
        config.validate()?;
        match &config.source {
            PriorSource::Synthetic => Ok(Self::Synthetic {
                k: config.k.get(),
                concentration: config.concentration,
                p_change: config.p_change,
            }),
            PriorSource::Counts(path) => {
                let joint = load_counts(
                    path,
                    &CountsOptions {
                        k: Some(config.k.get()),
                        smoothing_epsilon: config.smoothing_epsilon,
                    },
                )?;
                let params = params_from_joint(&joint);
                Ok(Self::Fixed(recolor(&params, config.p_change)?))
            }
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Self::Synthetic { k, .. } => *k,
            Self::Fixed(p) => p.k(),
        }
    }

    pub fn draw(&self, rng: &mut RandomSource) -> Result<CausalParams> {
        match self {
            Self::Synthetic {
                k,
                concentration,
                p_change,
            } => {
                let prior = synthetic_prior_with(*k, *concentration, rng)?;
                recolor(&prior, *p_change)
            }
            Self::Fixed(p) => Ok(p.clone()),
        }
    }
}

/// `1 + k + k^2` independent `Dirichlet(1_k)` draws as causal scores.
pub fn synthetic_prior(k: usize, rng: &mut RandomSource) -> Result<CausalParams> {
    synthetic_prior_with(k, 1.0, rng)
}

pub fn synthetic_prior_with(k: usize, concentration: f64, rng: &mut RandomSource) -> Result<CausalParams> {
    ClassCount::new(k)?;
    let alpha = vec![concentration; k];
    let mut draw = |n: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n * k);
        for _ in 0..n {
            out.extend_from_slice(&dirichlet_sample(&alpha, rng)?);
        }
        Ok(out)
    };
    let root = draw(1)?;
    let mid = draw(k)?;
    let leaf = draw(k * k)?;
    Ok(CausalParams::from_chain(ChainScores::from_probabilities(
        k, &root, &mid, &leaf,
    )?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountsOptions {
    /// Overrides `1 + max index`.
    pub k: Option<usize>,
    pub smoothing_epsilon: f64,
}

impl Default for CountsOptions {
    fn default() -> Self {
        Self {
            k: None,
            smoothing_epsilon: DEFAULT_SMOOTHING_EPSILON,
        }
    }
}

/// Reads an `a,x,y,count` file into a strictly positive joint.
pub fn load_counts(path: impl AsRef<Path>, options: &CountsOptions) -> Result<JointDistribution> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_counts(&text, path, options)
}

pub fn parse_counts(text: &str, path: &Path, options: &CountsOptions) -> Result<JointDistribution> {
    let err = |row: usize, message: String| Error::Ingestion {
        path: path.to_path_buf(),
        row,
        message,
    };

    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    if header != ["a", "x", "y", "count"] {
        return Err(err(1, format!("expected header `a,x,y,count`, found `{}`", header.join(","))));
    }

    let mut cells: Vec<([usize; 3], u64)> = Vec::new();
    let mut last_row = 1;
    for (i, line) in lines {
        let row = i + 1;
        last_row = row;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(row, format!("expected 4 fields, found {}", fields.len())));
        }
        let mut idx = [0usize; 3];
        for (slot, (name, field)) in idx.iter_mut().zip(["a", "x", "y"].iter().zip(&fields)) {
            *slot = field
                .parse()
                .map_err(|_| err(row, format!("`{field}` is not a valid index for {name}")))?;
        }
        let count: u64 = fields[3]
            .parse()
            .map_err(|_| err(row, format!("`{}` is not a nonnegative integer count", fields[3])))?;
        if let Some(k) = options.k {
            if let Some(bad) = idx.iter().find(|v| **v >= k) {
                return Err(err(row, format!("index {bad} out of range for k={k}")));
            }
        }
        cells.push((idx, count));
    }

    let k = match options.k {
        Some(k) => k,
        None => cells
            .iter()
            .flat_map(|(idx, _)| idx.iter().copied())
            .max()
            .map(|m| m + 1)
            .ok_or_else(|| err(last_row, "no data rows and no k given".into()))?,
    };
    if k == 0 {
        return Err(err(1, "class count must be at least 1".into()));
    }

    let mut table = vec![0.0f64; k * k * k];
    for ([a, x, y], count) in &cells {
        table[(a * k + x) * k + y] += *count as f64;
    }
    let total: f64 = table.iter().sum();
    let eps = options.smoothing_epsilon;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid("smoothing epsilon must be >= 0"));
    }
    if let Some(zero) = table.iter().position(|c| *c == 0.0) {
        if eps == 0.0 {
            let message = if total == 0.0 {
                "all counts are zero and smoothing epsilon is 0".to_string()
            } else {
                let (a, x, y) = (zero / (k * k), (zero / k) % k, zero % k);
                format!("cell ({a},{x},{y}) has zero count and smoothing epsilon is 0")
            };
            return Err(err(last_row, message));
        }
        table.iter_mut().for_each(|c| *c += eps);
    }
    let norm: f64 = table.iter().sum();
    table.iter_mut().for_each(|c| *c /= norm);
    JointDistribution::new(k, table)
}

/// Extracts `p(a)`, `p(x|a)`, `p(y|a,x)` from a joint and converts them to
/// gauge-fixed causal scores.
pub fn params_from_joint(p: &JointDistribution) -> CausalParams {
    let k = p.k();
    let table = p.table();
    let mut root = vec![0.0; k];
    let mut mid = vec![0.0; k * k];
    let mut leaf = vec![0.0; k * k * k];
    for a in 0..k {
        for x in 0..k {
            let row = &table[(a * k + x) * k..(a * k + x + 1) * k];
            let p_ax: f64 = row.iter().sum();
            mid[a * k + x] = p_ax;
            for (dst, v) in leaf[(a * k + x) * k..].iter_mut().zip(row) {
                *dst = v / p_ax;
            }
        }
        let p_a: f64 = mid[a * k..(a + 1) * k].iter().sum();
        root[a] = p_a;
        mid[a * k..(a + 1) * k].iter_mut().for_each(|v| *v /= p_a);
    }
    let chain = ChainScores::from_probabilities(k, &root, &mid, &leaf)
        .expect("strictly positive joint yields positive conditionals");
    CausalParams::from_chain(chain)
}

/// `(1 - p_change) * base + p_change * replacement` on the simplex.
pub fn mix_marginal(base: &[f64], replacement: &[f64], p_change: f64) -> Result<Vec<f64>> {
    if base.len() != replacement.len() {
        return Err(Error::ShapeMismatch {
            expected: base.len(),
            actual: replacement.len(),
        });
    }
    if !(0.0..=1.0).contains(&p_change) {
        return Err(Error::invalid("p_change must lie in [0, 1]"));
    }
    for v in [base, replacement] {
        if v.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("mix_marginal inputs must lie on the simplex"));
        }
    }
    Ok(base
        .iter()
        .zip(replacement)
        .map(|(b, r)| (1.0 - p_change) * b + p_change * r)
        .collect())
}

/// Mixes every `p(x | a)` with the uniform law: with probability `p_change`
/// the cause is redrawn uniformly instead of following the bias.
pub fn recolor(params: &CausalParams, p_change: f64) -> Result<CausalParams> {
    if p_change == 0.0 {
        return Ok(params.clone());
    }
    let k = params.k();
    let (root, mid, leaf) = params.chain().probabilities();
    let uniform = vec![1.0 / k as f64; k];
    let mut mixed = Vec::with_capacity(k * k);
    for slice in mid.chunks_exact(k) {
        mixed.extend(mix_marginal(slice, &uniform, p_change)?);
    }
    let mut chain = ChainScores::from_probabilities(k, &root, &mixed, &leaf)?;
    // untouched factors stay bit-identical
    chain.root = params.chain().root.clone();
    chain.leaf = params.chain().leaf.clone();
    Ok(CausalParams::from_chain(chain))
}
