//! Forecast-error samples, moment and mode estimation, and the uncertainty
//! model shared by every chance-constraint method.

mod synth;

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, PsdCheck};

pub use synth::{GeneratorConfig, Marginal, synth_unimodal_samples};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("sample set needs at least 2 scenarios, got {0}")]
    TooFewSamples(usize),
    #[error("sample set needs at least one column")]
    NoColumns,
    #[error("non-finite sample value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("row {row} has {found} entries, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("epsilon must lie in (0, 0.5), got {0}")]
    InvalidEpsilon(f64),
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("second-moment matrix is not symmetric (relative asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("covariance Σ − μμᵀ is indefinite (minimum eigenvalue {min_eigenvalue:e})")]
    IndefiniteCovariance { min_eigenvalue: f64 },
    #[error(
        "unimodal ambiguity set unusable: ((α+2)/α)(Σ−μμᵀ) − (μ−m)(μ−m)ᵀ/α² has eigenvalue {min_eigenvalue:e}"
    )]
    IndefiniteUnimodal { min_eigenvalue: f64 },
    #[error("unsupported generator family `{0}`")]
    UnsupportedFamily(String),
    #[error("invalid generator configuration: {0}")]
    InvalidGenerator(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv header must be w1,...,wl; got `{0}`")]
    BadHeader(String),
}

/// Scenarios of the uncertain vector ξ, one row per scenario (MW).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: DMatrix<f64>,
}

impl SampleSet {
    pub fn new(data: DMatrix<f64>) -> Result<Self, StatsError> {
        if data.nrows() < 2 {
            return Err(StatsError::TooFewSamples(data.nrows()));
        }
        if data.ncols() == 0 {
            return Err(StatsError::NoColumns);
        }
        for row in 0..data.nrows() {
            for col in 0..data.ncols() {
                if !data[(row, col)].is_finite() {
                    return Err(StatsError::NonFinite { row, col });
                }
            }
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, StatsError> {
        let expected = rows.first().map_or(0, Vec::len);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != expected {
                return Err(StatsError::RaggedRow {
                    row,
                    found: r.len(),
                    expected,
                });
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), expected, &flat))
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Uncertainty dimension `l`.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Scenario count `N`.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn scenario(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self, StatsError> {
        let mut m = DMatrix::zeros(rows.len(), self.dim());
        for (dst, &src) in rows.iter().enumerate() {
            m.set_row(dst, &self.data.row(src));
        }
        Self::new(m)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, StatsError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let ok = !header.is_empty()
            && header
                .iter()
                .enumerate()
                .all(|(i, h)| h.trim() == format!("w{}", i + 1));
        if !ok {
            return Err(StatsError::BadHeader(
                header.iter().collect::<Vec<_>>().join(","),
            ));
        }
        let mut rows = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let mut values = Vec::with_capacity(record.len());
            for (col, field) in record.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| StatsError::NonFinite { row, col })?;
                values.push(v);
            }
            rows.push(values);
        }
        Self::from_rows(&rows)
    }

    pub fn load_csv(path: &Path) -> crate::Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| crate::Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::read_csv(file)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), StatsError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record((1..=self.dim()).map(|i| format!("w{i}")))?;
        for row in self.data.row_iter() {
            wtr.write_record(row.iter().map(|v| format!("{v}")))?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// First and second moments, mode, unimodality order and risk level of ξ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModel {
    pub mu: DVector<f64>,
    /// Raw second moment `E[ξξᵀ]`, not the covariance.
    pub sigma: DMatrix<f64>,
    pub mode: DVector<f64>,
    pub alpha: f64,
    pub epsilon: f64,
}

impl UncertaintyModel {
    pub fn new(
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        mode: DVector<f64>,
        alpha: f64,
        epsilon: f64,
    ) -> Result<Self, StatsError> {
        let l = mu.len();
        if sigma.nrows() != l || sigma.ncols() != l || mode.len() != l {
            return Err(StatsError::Dimension(format!(
                "mu has length {l}, sigma is {}x{}, mode has length {}",
                sigma.nrows(),
                sigma.ncols(),
                mode.len()
            )));
        }
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(StatsError::InvalidEpsilon(epsilon));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(StatsError::InvalidAlpha(alpha));
        }
        let scale = sigma.abs().max();
        let asym = (&sigma - sigma.transpose()).abs().max();
        if scale > 0.0 && asym > 1e-10 * scale {
            return Err(StatsError::Asymmetric(asym / scale));
        }
        let model = Self {
            mu,
            sigma: linalg::symmetrize(&sigma),
            mode,
            alpha,
            epsilon,
        };
        let check = linalg::psd_check(&model.covariance());
        if !check.is_psd() {
            return Err(StatsError::IndefiniteCovariance {
                min_eigenvalue: check.min_eigenvalue,
            });
        }
        Ok(model)
    }

    /// Moments from [`estimate_moments`] and mode from a `bins`-bin histogram.
    pub fn from_samples(
        samples: &SampleSet,
        bins: usize,
        alpha: f64,
        epsilon: f64,
    ) -> Result<Self, StatsError> {
        let (mu, sigma) = estimate_moments(samples);
        let mode = estimate_mode(samples, bins)?;
        Self::new(mu, sigma, mode, alpha, epsilon)
    }

    /// Zero-dimensional model for cases without uncertainty.
    pub fn empty(alpha: f64, epsilon: f64) -> Result<Self, StatsError> {
        Self::new(
            DVector::zeros(0),
            DMatrix::zeros(0, 0),
            DVector::zeros(0),
            alpha,
            epsilon,
        )
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `(1/(1−ε))^{1/α}`, the smallest admissible τ.
    pub fn tau0(&self) -> f64 {
        (1.0 / (1.0 - self.epsilon)).powf(1.0 / self.alpha)
    }

    /// `Σ − μμᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.sigma - &self.mu * self.mu.transpose()
    }

    /// `((α+2)/α)(Σ−μμᵀ) − (1/α²)(μ−m)(μ−m)ᵀ`, whose square root is Λ.
    pub fn lambda_inner(&self) -> DMatrix<f64> {
        let a = self.alpha;
        let shift = &self.mu - &self.mode;
        self.covariance() * ((a + 2.0) / a) - &shift * shift.transpose() / (a * a)
    }

    /// Same moments with a different risk level or unimodality order.
    pub fn with_params(&self, alpha: f64, epsilon: f64) -> Result<Self, StatsError> {
        Self::new(
            self.mu.clone(),
            self.sigma.clone(),
            self.mode.clone(),
            alpha,
            epsilon,
        )
    }
}

/// Column means and the `1/N` second moment `E[ξξᵀ]`.
pub fn estimate_moments(samples: &SampleSet) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples.len() as f64;
    let data = samples.data();
    let mu = DVector::from_iterator(data.ncols(), data.column_iter().map(|c| c.sum() / n));
    let sigma = linalg::symmetrize(&(data.transpose() * data / n));
    (mu, sigma)
}

/// Per-dimension histogram mode over `[min, max]` with `bins` equal bins.
///
/// Returns the center of the most populated bin. Ties go to the bin whose
/// center is nearest the column median, then to the lower bin.
pub fn estimate_mode(samples: &SampleSet, bins: usize) -> Result<DVector<f64>, StatsError> {
    if bins == 0 {
        return Err(StatsError::NoBins);
    }
    let modes = samples
        .data()
        .column_iter()
        .map(|col| column_mode(col.as_slice(), bins))
        .collect::<Vec<_>>();
    Ok(DVector::from_vec(modes))
}

fn column_mode(values: &[f64], bins: usize) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return lo;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let median = median(values);
    let center = |i: usize| lo + (i as f64 + 0.5) * width;
    let top = *counts.iter().max().unwrap_or(&0);
    let mut best: Option<usize> = None;
    for (i, &c) in counts.iter().enumerate() {
        if c != top {
            continue;
        }
        best = match best {
            Some(b) if (center(b) - median).abs() <= (center(i) - median).abs() => Some(b),
            _ => Some(i),
        };
    }
    center(best.unwrap_or(0))
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// PSD status of the matrix under Λ's square root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnimodalDiagnostic {
    pub psd: bool,
    pub min_eigenvalue: f64,
    pub tolerance: f64,
}

pub fn unimodal_diagnostic(model: &UncertaintyModel) -> UnimodalDiagnostic {
    let PsdCheck {
        min_eigenvalue,
        tolerance,
    } = linalg::psd_check(&model.lambda_inner());
    UnimodalDiagnostic {
        psd: min_eigenvalue >= -tolerance,
        min_eigenvalue,
        tolerance,
    }
}

/// Fails when the unimodal reformulation is unusable for `model`.
pub fn validate_unimodal_model(model: &UncertaintyModel) -> Result<UnimodalDiagnostic, StatsError> {
    let diag = unimodal_diagnostic(model);
    if diag.psd {
        Ok(diag)
    } else {
        Err(StatsError::IndefiniteUnimodal {
            min_eigenvalue: diag.min_eigenvalue,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> SampleSet {
        SampleSet::from_rows(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn moments_of_point_mass_and_symmetric_pair() {
        let (mu, sigma) = estimate_moments(&column(&[0.0, 0.0]));
        assert_eq!(mu[0], 0.0);
        assert_eq!(sigma[(0, 0)], 0.0);
        let (mu, sigma) = estimate_moments(&column(&[1.0, -1.0]));
        assert_eq!(mu[0], 0.0);
        assert_eq!(sigma[(0, 0)], 1.0);
    }

    #[test]
    fn moments_of_cross_pattern() {
        let s = SampleSet::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let (mu, sigma) = estimate_moments(&s);
        assert_eq!(mu, DVector::from_vec(vec![0.0, 0.0]));
        assert_eq!(sigma, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
    }

    #[test]
    fn rejects_bad_sample_sets() {
        assert!(matches!(
            SampleSet::from_rows(&[vec![1.0]]),
            Err(StatsError::TooFewSamples(1))
        ));
        assert!(matches!(
            SampleSet::from_rows(&[vec![1.0], vec![f64::NAN]]),
            Err(StatsError::NonFinite { row: 1, col: 0 })
        ));
        assert!(matches!(
            SampleSet::from_rows(&[vec![1.0, 2.0], vec![3.0]]),
            Err(StatsError::RaggedRow { row: 1, .. })
        ));
    }

    #[test]
    fn mode_examples() {
        let m = estimate_mode(&column(&[1.0, 1.0, 1.0, 2.0, 3.0]), 3).unwrap();
        assert!((m[0] - 4.0 / 3.0).abs() < 1e-15);
        let m = estimate_mode(&column(&[-1.0, 0.0, 0.0, 1.0]), 1).unwrap();
        assert_eq!(m[0], 0.0);
        let m = estimate_mode(&column(&[5.0, 5.0, 5.0]), 7).unwrap();
        assert_eq!(m[0], 5.0);
        assert!(matches!(
            estimate_mode(&column(&[1.0, 2.0]), 0),
            Err(StatsError::NoBins)
        ));
    }

    #[test]
    fn mode_tie_prefers_bin_nearest_median() {
        // Bins over [0, 4] with width 1: counts 2, 0, 1, 2, a tie between bins 0 and 3.
        // The median is 2.5, so bin 3 (center 3.5) wins.
        let m = estimate_mode(&column(&[0.0, 0.2, 2.5, 3.5, 4.0]), 4).unwrap();
        assert!((m[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn unimodal_validation_examples() {
        let one = |v: f64| DVector::from_element(1, v);
        let sq = |v: f64| DMatrix::from_element(1, 1, v);
        let ok = UncertaintyModel::new(one(0.0), sq(1.0), one(0.0), 1.0, 0.05).unwrap();
        let d = validate_unimodal_model(&ok).unwrap();
        assert!((d.min_eigenvalue - 3.0).abs() < 1e-12);

        // Σ = 1 with μ = 1 is a point mass at 1; mode 0 contradicts it.
        let bad = UncertaintyModel::new(one(1.0), sq(1.0), one(0.0), 1.0, 0.05).unwrap();
        match validate_unimodal_model(&bad) {
            Err(StatsError::IndefiniteUnimodal { min_eigenvalue }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("expected indefinite, got {other:?}"),
        }

        let mu = DVector::from_vec(vec![0.3, -0.2]);
        let sigma = DMatrix::identity(2, 2) + &mu * mu.transpose();
        let m2 = UncertaintyModel::new(mu.clone(), sigma, mu, 1.0, 0.05).unwrap();
        assert!(
            (m2.lambda_inner() - DMatrix::identity(2, 2) * 3.0)
                .abs()
                .max()
                < 1e-12
        );
        assert!(validate_unimodal_model(&m2).is_ok());
    }

    #[test]
    fn model_rejects_invalid_parameters() {
        let one = |v: f64| DVector::from_element(1, v);
        let sq = |v: f64| DMatrix::from_element(1, 1, v);
        assert!(matches!(
            UncertaintyModel::new(one(0.0), sq(1.0), one(0.0), 1.0, 0.5),
            Err(StatsError::InvalidEpsilon(_))
        ));
        assert!(matches!(
            UncertaintyModel::new(one(0.0), sq(1.0), one(0.0), 0.0, 0.05),
            Err(StatsError::InvalidAlpha(_))
        ));
        assert!(matches!(
            UncertaintyModel::new(one(2.0), sq(1.0), one(0.0), 1.0, 0.05),
            Err(StatsError::IndefiniteCovariance { .. })
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            UncertaintyModel::new(DVector::zeros(2), asym, DVector::zeros(2), 1.0, 0.05),
            Err(StatsError::Asymmetric(_))
        ));
    }

    #[test]
    fn tau0_matches_closed_form() {
        let m = UncertaintyModel::new(
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            2.0,
            0.05,
        )
        .unwrap();
        assert!((m.tau0() - (1.0f64 / 0.95).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let s = SampleSet::from_rows(&[vec![1.5, -2.0], vec![0.25, 3.0]]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "w1,w2\n1.5,-2\n0.25,3\n"
        );
        assert_eq!(SampleSet::read_csv(buf.as_slice()).unwrap(), s);
        assert!(matches!(
            SampleSet::read_csv("a,b\n1,2\n3,4\n".as_bytes()),
            Err(StatsError::BadHeader(_))
        ));
    }
}
