//! Time-series container, lag embedding and sample moment matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix_kit::{svd_desc, sym_power, Exponent, SymmetricMatrix, EIGEN_FLOOR};

/// A `T × q` multivariate series, oldest row first.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesData {
    values: DMatrix<f64>,
    names: Option<Vec<String>>,
}

impl TimeSeriesData {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let rows = values.nrows();
            return Err(Error::InvalidArgument(format!(
                "non-finite value at row {}, column {}",
                pos % rows,
                pos / rows
            )));
        }
        Ok(Self { values, names: None })
    }

    pub fn with_names(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.ncols(),
                got: names.len(),
            });
        }
        let mut out = Self::new(values)?;
        out.names = Some(names);
        Ok(out)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// First `rows` observations.
    pub fn head(&self, rows: usize) -> TimeSeriesData {
        TimeSeriesData {
            values: self.values.rows(0, rows).into_owned(),
            names: self.names.clone(),
        }
    }
}

/// Targets `y_t` and stacked lags `x_t = (y'_{t-1}, …, y'_{t-p})'`, both
/// mean-centered.
#[derive(Debug, Clone)]
pub struct LagDesign {
    pub p: usize,
    pub q: usize,
    /// `n × q`, centered.
    pub targets: DMatrix<f64>,
    /// `n × qp`, centered.
    pub lagged: DMatrix<f64>,
    /// `ȳ`.
    pub mean_y: DVector<f64>,
    /// Column means of the raw lagged block.
    pub mean_x: DVector<f64>,
}

impl LagDesign {
    /// Uses the first `p` rows of `data` as presample, leaving `T - p` rows.
    pub fn new(data: &TimeSeriesData, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("lag order must be at least 1".into()));
        }
        let (t, q) = data.values.shape();
        let required = q * p + 2 + p;
        if t < required {
            return Err(Error::TooShort { rows: t, required });
        }
        Ok(Self::embed(&data.values, p, p))
    }

    /// Takes `p` explicit presample rows (oldest first) so all `T` rows of
    /// `data` are usable targets.
    pub fn with_presample(data: &TimeSeriesData, presample: &DMatrix<f64>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("lag order must be at least 1".into()));
        }
        let (t, q) = data.values.shape();
        if presample.nrows() != p || presample.ncols() != q {
            return Err(Error::DimensionMismatch {
                expected: p * q,
                got: presample.nrows() * presample.ncols(),
            });
        }
        let required = q * p + 2;
        if t < required {
            return Err(Error::TooShort { rows: t, required });
        }
        let mut full = DMatrix::zeros(t + p, q);
        full.rows_mut(0, p).copy_from(presample);
        full.rows_mut(p, t).copy_from(&data.values);
        Ok(Self::embed(&full, p, p))
    }

    /// Rows `start..` of `values` become targets; lags reach back `p` rows.
    /// `start >= p` lets several lag orders share one sample.
    pub(crate) fn embed(values: &DMatrix<f64>, p: usize, start: usize) -> Self {
        let (t, q) = values.shape();
        let n = t - start;
        let mut targets = values.rows(start, n).into_owned();
        let mut lagged = DMatrix::zeros(n, q * p);
        for r in 0..n {
            let time = start + r;
            for k in 1..=p {
                for j in 0..q {
                    lagged[(r, (k - 1) * q + j)] = values[(time - k, j)];
                }
            }
        }
        let mean_y = column_means(&targets);
        let mean_x = column_means(&lagged);
        center(&mut targets, &mean_y);
        center(&mut lagged, &mean_x);
        Self {
            p,
            q,
            targets,
            lagged,
            mean_y,
            mean_x,
        }
    }

    pub fn n(&self) -> usize {
        self.targets.nrows()
    }

    pub fn raw_targets(&self) -> DMatrix<f64> {
        uncenter(&self.targets, &self.mean_y)
    }

    pub fn raw_lagged(&self) -> DMatrix<f64> {
        uncenter(&self.lagged, &self.mean_x)
    }
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows().max(1) as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

fn center(m: &mut DMatrix<f64>, mean: &DVector<f64>) {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
}

fn uncenter(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(mean[j]);
    }
    out
}

/// Sample moments of one lag design, all with divisor `n`.
#[derive(Debug, Clone)]
pub struct AutocovarianceSet {
    pub q: usize,
    pub p: usize,
    /// Effective sample size used as divisor.
    pub n: usize,
    /// `Γ̂₀`, q × q.
    pub gamma0: SymmetricMatrix,
    /// `Γ̂_*`, qp × q.
    pub gamma_star: DMatrix<f64>,
    /// `Γ̂₍ₚ₎`, qp × qp.
    pub gamma_p: SymmetricMatrix,
    /// `Γ̂_{y|x} = Γ̂₀ - Γ̂_*'Γ̂₍ₚ₎⁻¹Γ̂_*`.
    pub gamma_y_given_x: SymmetricMatrix,
    /// `Γ̂_{y∘x} = Γ̂_*'Γ̂₍ₚ₎⁻¹Γ̂_*`.
    pub gamma_y_fitted: SymmetricMatrix,
    pub mean_y: DVector<f64>,
    pub mean_x: DVector<f64>,
}

impl AutocovarianceSet {
    pub fn from_design(design: &LagDesign) -> Result<Self> {
        let n = design.n();
        let scale = 1.0 / n as f64;
        let gamma0 = SymmetricMatrix::new(design.targets.transpose() * &design.targets * scale);
        let gamma_star = design.lagged.transpose() * &design.targets * scale;
        let gamma_p = SymmetricMatrix::new(design.lagged.transpose() * &design.lagged * scale);
        Self::from_moments(
            design.q,
            design.p,
            n,
            gamma0,
            gamma_star,
            gamma_p,
            design.mean_y.clone(),
            design.mean_x.clone(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_moments(
        q: usize,
        p: usize,
        n: usize,
        gamma0: SymmetricMatrix,
        gamma_star: DMatrix<f64>,
        gamma_p: SymmetricMatrix,
        mean_y: DVector<f64>,
        mean_x: DVector<f64>,
    ) -> Result<Self> {
        let norm = gamma_p.spectral_norm();
        if norm == 0.0 || gamma_p.min_eigenvalue() < EIGEN_FLOOR * norm {
            return Err(Error::SingularGram);
        }
        let inv = gamma_p.inverse().map_err(|_| Error::SingularGram)?;
        let fitted = SymmetricMatrix::new(gamma_star.transpose() * inv.as_matrix() * &gamma_star);
        let resid = SymmetricMatrix::new(gamma0.as_matrix() - fitted.as_matrix());
        Ok(Self {
            q,
            p,
            n,
            gamma0,
            gamma_star,
            gamma_p,
            gamma_y_given_x: resid,
            gamma_y_fitted: fitted,
            mean_y,
            mean_x,
        })
    }

    pub fn from_data(data: &TimeSeriesData, p: usize) -> Result<Self> {
        Self::from_design(&LagDesign::new(data, p)?)
    }
}

/// `C_{y,x}` with its SVD, singular values descending.
#[derive(Debug, Clone)]
pub struct CanonicalDecomposition {
    /// q × qp.
    pub matrix: DMatrix<f64>,
    pub left: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub right_t: DMatrix<f64>,
    /// Rank-d truncation built from the top-d singular triplets.
    pub truncated: Option<DMatrix<f64>>,
}

impl CanonicalDecomposition {
    /// Rebuilds `C^{(d)}` from the top `d` singular triplets.
    pub fn truncate(&self, d: usize) -> DMatrix<f64> {
        let d = d.min(self.singular_values.len());
        let u = self.left.columns(0, d);
        let vt = self.right_t.rows(0, d);
        let s = DMatrix::from_diagonal(&self.singular_values.rows(0, d).into_owned());
        u * s * vt
    }
}

/// Canonical correlation matrix between a response block with covariance
/// `gamma_yy` and cross-covariance `gamma_xy` (qp × m) with the lags.
pub(crate) fn canonical_matrix(
    gamma_yy: &SymmetricMatrix,
    gamma_xy: &DMatrix<f64>,
    gamma_p_inv_sqrt: &SymmetricMatrix,
) -> Result<DMatrix<f64>> {
    let yy = sym_power(gamma_yy, Exponent::NegHalf)?;
    Ok(yy.as_matrix() * gamma_xy.transpose() * gamma_p_inv_sqrt.as_matrix())
}

pub(crate) fn decompose(matrix: DMatrix<f64>, d: Option<usize>) -> CanonicalDecomposition {
    let (left, singular_values, right_t) = svd_desc(&matrix);
    let mut out = CanonicalDecomposition {
        matrix,
        left,
        singular_values,
        right_t,
        truncated: None,
    };
    if let Some(d) = d {
        out.truncated = Some(out.truncate(d));
    }
    out
}

/// `C_{y,x} = Γ̂₀^{-1/2} Γ̂_*' Γ̂₍ₚ₎^{-1/2}` and, when `d` is given, its rank-d
/// truncation.
pub fn canonical_correlations(acov: &AutocovarianceSet, d: Option<usize>) -> Result<CanonicalDecomposition> {
    let gp = sym_power(&acov.gamma_p, Exponent::NegHalf)?;
    let c = canonical_matrix(&acov.gamma0, &acov.gamma_star, &gp)?;
    Ok(decompose(c, d))
}
