//! Seeded synthetic forecast-error generators with unimodal marginals.
//!
//! Each column is drawn through an equicorrelated Gaussian copula and mapped
//! through the inverse CDF of the chosen marginal, so every marginal keeps
//! its single peak regardless of the correlation.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Beta, ContinuousCDF};

use super::{SampleSet, StatsError};
use crate::linalg::{normal_cdf, normal_quantile};

/// Marginal law of every uncertainty dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    Triangular {
        lo: f64,
        mode: f64,
        hi: f64,
    },
    TruncatedNormal {
        mean: f64,
        sd: f64,
        lo: f64,
        hi: f64,
    },
    /// `Beta(a, b)` on `[lo, hi]`; `a, b ≥ 1` keeps it single-peaked.
    ScaledBeta {
        lo: f64,
        hi: f64,
        a: f64,
        b: f64,
    },
}

impl Marginal {
    fn validate(&self) -> Result<(), StatsError> {
        let bad = |msg: &str| Err(StatsError::InvalidGenerator(msg.to_string()));
        match *self {
            Marginal::Triangular { lo, mode, hi } => {
                if !(lo <= mode && mode <= hi && lo < hi) {
                    return bad("triangular needs lo <= mode <= hi with lo < hi");
                }
            }
            Marginal::TruncatedNormal { sd, lo, hi, .. } => {
                if !(sd > 0.0 && lo < hi) {
                    return bad("truncated-normal needs sd > 0 and lo < hi");
                }
            }
            Marginal::ScaledBeta { lo, hi, a, b } => {
                if !(lo < hi && a >= 1.0 && b >= 1.0) {
                    return bad("scaled-beta needs lo < hi and shape parameters >= 1");
                }
            }
        }
        Ok(())
    }

    /// Inverse CDF at `u ∈ (0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Marginal::Triangular { lo, mode, hi } => {
                let split = (mode - lo) / (hi - lo);
                if u < split {
                    lo + (u * (hi - lo) * (mode - lo)).sqrt()
                } else {
                    hi - ((1.0 - u) * (hi - lo) * (hi - mode)).sqrt()
                }
            }
            Marginal::TruncatedNormal { mean, sd, lo, hi } => {
                let fa = normal_cdf((lo - mean) / sd);
                let fb = normal_cdf((hi - mean) / sd);
                let z = normal_quantile(fa + u * (fb - fa));
                (mean + sd * z).clamp(lo, hi)
            }
            Marginal::ScaledBeta { lo, hi, a, b } => {
                // Shape parameters were validated, so construction cannot fail.
                let beta = Beta::new(a, b).expect("validated beta shape");
                lo + (hi - lo) * beta.inverse_cdf(u)
            }
        }
    }

    /// Distribution mean; for the truncated normal, the untruncated `mean`.
    pub fn nominal_mean(&self) -> f64 {
        match *self {
            Marginal::Triangular { lo, mode, hi } => (lo + mode + hi) / 3.0,
            Marginal::TruncatedNormal { mean, .. } => mean,
            Marginal::ScaledBeta { lo, hi, a, b } => lo + (hi - lo) * a / (a + b),
        }
    }
}

impl FromStr for Marginal {
    type Err = StatsError;

    /// Parses `family:p1,p2,...`, for example `triangular:-1,0,1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (family, params) = s.split_once(':').unwrap_or((s, ""));
        let values = params
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| StatsError::InvalidGenerator(format!("bad number `{p}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let arity = |n: usize| {
            if values.len() == n {
                Ok(())
            } else {
                Err(StatsError::InvalidGenerator(format!(
                    "{family} takes {n} parameters, got {}",
                    values.len()
                )))
            }
        };
        let m = match family.trim() {
            "triangular" => {
                arity(3)?;
                Marginal::Triangular {
                    lo: values[0],
                    mode: values[1],
                    hi: values[2],
                }
            }
            "truncated-normal" => {
                arity(4)?;
                Marginal::TruncatedNormal {
                    mean: values[0],
                    sd: values[1],
                    lo: values[2],
                    hi: values[3],
                }
            }
            "scaled-beta" => {
                arity(4)?;
                Marginal::ScaledBeta {
                    lo: values[0],
                    hi: values[1],
                    a: values[2],
                    b: values[3],
                }
            }
            other => return Err(StatsError::UnsupportedFamily(other.to_string())),
        };
        m.validate()?;
        Ok(m)
    }
}

impl fmt::Display for Marginal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Marginal::Triangular { lo, mode, hi } => write!(f, "triangular:{lo},{mode},{hi}"),
            Marginal::TruncatedNormal { mean, sd, lo, hi } => {
                write!(f, "truncated-normal:{mean},{sd},{lo},{hi}")
            }
            Marginal::ScaledBeta { lo, hi, a, b } => write!(f, "scaled-beta:{lo},{hi},{a},{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub marginal: Marginal,
    pub dim: usize,
    pub count: usize,
    /// Pairwise correlation of the Gaussian copula, in `[0, 1)`.
    pub correlation: f64,
}

/// Draws `cfg.count` scenarios; identical seeds give identical matrices.
pub fn synth_unimodal_samples(cfg: &GeneratorConfig, seed: u64) -> Result<SampleSet, StatsError> {
    cfg.marginal.validate()?;
    if cfg.dim == 0 {
        return Err(StatsError::NoColumns);
    }
    if !(0.0..1.0).contains(&cfg.correlation) {
        return Err(StatsError::InvalidGenerator(format!(
            "correlation must lie in [0, 1), got {}",
            cfg.correlation
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared = cfg.correlation.sqrt();
    let own = (1.0 - cfg.correlation).sqrt();
    let mut data = DMatrix::zeros(cfg.count, cfg.dim);
    for i in 0..cfg.count {
        let common: f64 = StandardNormal.sample(&mut rng);
        for j in 0..cfg.dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            let u = normal_cdf(shared * common + own * z).clamp(1e-15, 1.0 - 1e-15);
            data[(i, j)] = cfg.marginal.quantile(u);
        }
    }
    SampleSet::new(data)
}
