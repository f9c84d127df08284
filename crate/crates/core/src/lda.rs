//! Plaintext linear discriminant analysis.
//!
//! Scatter matrices are built from per-user sample matrices, and the
//! projection solves the symmetric-definite generalized eigenproblem
//! `S_b w = lambda (S_w + ridge I) w` through a Cholesky reduction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Residual bound per eigenpair, relative to `1 + |lambda|`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Rows are samples, columns are features.
#[derive(Clone, Debug, PartialEq)]
pub struct UserSamples {
    rows: DMatrix<f64>,
}

impl UserSamples {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::Validation("user needs at least one sample".into()));
        }
        Ok(Self { rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension { expected: n, got: bad.len() });
        }
        Self::new(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn count(&self) -> usize {
        self.rows.nrows()
    }

    pub fn features(&self) -> usize {
        self.rows.ncols()
    }

    pub fn mean(&self) -> DVector<f64> {
        let m = self.count() as f64;
        DVector::from_fn(self.features(), |j, _| self.rows.column(j).sum() / m)
    }

    /// Population variance of each feature.
    pub fn variance(&self) -> DVector<f64> {
        let mu = self.mean();
        let m = self.count() as f64;
        DVector::from_fn(self.features(), |j, _| {
            self.rows.column(j).iter().map(|x| (x - mu[j]).powi(2)).sum::<f64>() / m
        })
    }

    /// `X^T C_m X`, the centered Gram matrix.
    pub fn scatter(&self) -> DMatrix<f64> {
        let mu = self.mean();
        let mut centered = self.rows.clone();
        for mut row in centered.row_iter_mut() {
            row -= mu.transpose();
        }
        centered.transpose() * centered
    }
}

pub fn scatter_within(users: &[UserSamples]) -> Result<DMatrix<f64>> {
    let first = users.first().ok_or_else(|| Error::Validation("no users".into()))?;
    let n = first.features();
    let mut sw = DMatrix::zeros(n, n);
    for u in users {
        if u.features() != n {
            return Err(Error::Dimension { expected: n, got: u.features() });
        }
        sw += u.scatter();
    }
    Ok(sw)
}

/// `sum_t (mu_t - mu)^T (mu_t - mu)` around the mean of the user means.
pub fn scatter_between(means: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    if means.len() < 2 {
        return Err(Error::Validation(format!("need at least 2 users, got {}", means.len())));
    }
    let n = means[0].len();
    if let Some(bad) = means.iter().find(|m| m.len() != n) {
        return Err(Error::Dimension { expected: n, got: bad.len() });
    }
    let mut mu = DVector::zeros(n);
    for m in means {
        mu += m;
    }
    mu /= means.len() as f64;
    let mut sb = DMatrix::zeros(n, n);
    for m in means {
        let diff = m - &mu;
        sb += &diff * diff.transpose();
    }
    Ok(sb)
}

/// Default ridge: `1e-6 * trace(S_w) / n`.
pub fn default_ridge(sw: &DMatrix<f64>) -> f64 {
    if sw.nrows() == 0 {
        return 0.0;
    }
    1e-6 * sw.trace() / sw.nrows() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    /// `n x (n-1)` projection, one unit-norm column per eigenvector.
    #[serde(rename = "W", with = "row_major")]
    pub w: DMatrix<f64>,
    /// Eigenvalues, descending.
    #[serde(rename = "Lambda")]
    pub lambda: Vec<f64>,
    /// Population variance in the projected space.
    pub v: Vec<f64>,
    pub generation: u64,
}

impl LdaModel {
    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    /// Largest residual `||S_b w - lambda A w|| / (1 + |lambda|)` over all
    /// columns, with `A = S_w + ridge I`.
    pub fn max_relative_residual(&self, sw: &DMatrix<f64>, sb: &DMatrix<f64>, ridge: f64) -> f64 {
        let a = regularized(sw, ridge);
        (0..self.output_dim())
            .map(|k| {
                let w = self.w.column(k);
                let r = sb * w - (&a * w) * self.lambda[k];
                r.norm() / (1.0 + self.lambda[k].abs())
            })
            .fold(0.0, f64::max)
    }
}

fn regularized(sw: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let n = sw.nrows();
    sw + DMatrix::identity(n, n) * ridge
}

/// Solves `S_b w = lambda (S_w + ridge I) w` and keeps the top `n - 1`
/// eigenpairs. Each eigenvector is scaled to unit norm with its
/// largest-magnitude entry positive.
pub fn solve_lda(sw: &DMatrix<f64>, sb: &DMatrix<f64>, ridge: f64) -> Result<LdaModel> {
    let n = sw.nrows();
    if sw.ncols() != n || sb.nrows() != n || sb.ncols() != n {
        return Err(Error::Dimension { expected: n, got: sb.nrows() });
    }
    if !(ridge >= 0.0) {
        return Err(Error::Param(format!("ridge must be non-negative, got {ridge}")));
    }
    if n == 0 {
        return Ok(LdaModel { w: DMatrix::zeros(0, 0), lambda: vec![], v: vec![], generation: 0 });
    }
    let sym = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
    let a = regularized(&sym(sw), ridge);
    let sb = sym(sb);

    let chol = a.clone().cholesky().ok_or_else(|| Error::Numeric {
        msg: "within-class scatter is not positive definite".into(),
        residual: f64::NAN,
    })?;
    let l = chol.l();
    let diag_min = l.diagonal().iter().fold(f64::INFINITY, |m, &x| m.min(x * x));
    let diag_max = a.diagonal().iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if diag_min <= diag_max * 1e-13 {
        return Err(Error::Numeric {
            msg: "within-class scatter is numerically singular; add a ridge".into(),
            residual: diag_min / diag_max.max(f64::MIN_POSITIVE),
        });
    }

    // C = L^{-1} S_b L^{-T}
    let linv_sb = l.solve_lower_triangular(&sb).expect("non-singular triangle");
    let c = l.solve_lower_triangular(&linv_sb.transpose()).expect("non-singular triangle");
    let eig = sym(&c).symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let lt = l.transpose();
    let keep = n - 1;
    let mut w = DMatrix::zeros(n, keep);
    let mut lambda = Vec::with_capacity(keep);
    for (col, &k) in order.iter().take(keep).enumerate() {
        let y = eig.eigenvectors.column(k).into_owned();
        let mut v = lt.solve_upper_triangular(&y).expect("non-singular triangle");
        v /= v.norm();
        let (imax, _) = v.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, &x)| {
            if x.abs() > bv {
                (i, x.abs())
            } else {
                (bi, bv)
            }
        });
        if v[imax] < 0.0 {
            v = -v;
        }
        // Rayleigh quotient on the original pencil
        let lam = v.dot(&(&sb * &v)) / v.dot(&(&a * &v));
        w.set_column(col, &v);
        lambda.push(lam.max(0.0));
    }
    let model = LdaModel { w, lambda, v: vec![], generation: 0 };
    let res = model.max_relative_residual(&a.clone(), &sb, 0.0);
    if !(res <= RESIDUAL_TOLERANCE) {
        return Err(Error::Numeric { msg: "generalized eigenproblem did not converge".into(), residual: res });
    }
    Ok(model)
}

/// Solves with [`default_ridge`], raising the ridge tenfold while `S_w`
/// stays numerically singular, up to `trace(S_w) / n`. Returns the model and
/// the ridge that worked.
pub fn solve_lda_auto(sw: &DMatrix<f64>, sb: &DMatrix<f64>) -> Result<(LdaModel, f64)> {
    let n = sw.nrows().max(1) as f64;
    let ceiling = (sw.trace() / n).max(1e-6);
    let mut ridge = match default_ridge(sw) {
        r if r > 0.0 => r,
        _ => 1e-6,
    };
    loop {
        match solve_lda(sw, sb, ridge) {
            Ok(m) => return Ok((m, ridge)),
            Err(Error::Numeric { .. }) if ridge < ceiling => ridge = (ridge * 10.0).min(ceiling),
            Err(e) => return Err(e),
        }
    }
}

/// Row vector times `W`.
pub fn transform(x: &[f64], model: &LdaModel) -> Result<Vec<f64>> {
    if x.len() != model.input_dim() {
        return Err(Error::Dimension { expected: model.input_dim(), got: x.len() });
    }
    let row = DVector::from_column_slice(x).transpose();
    Ok((row * &model.w).iter().copied().collect())
}

/// Propagates independent per-feature variances: `v_k = sum_i W_ik^2 v'_i`.
pub fn transform_variance(var: &[f64], model: &LdaModel) -> Result<Vec<f64>> {
    if var.len() != model.input_dim() {
        return Err(Error::Dimension { expected: model.input_dim(), got: var.len() });
    }
    Ok((0..model.output_dim())
        .map(|k| (0..var.len()).map(|i| model.w[(i, k)].powi(2) * var[i]).sum())
        .collect())
}

mod row_major {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        Repr { rows: m.nrows(), cols: m.ncols(), data }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.data.len() != r.rows * r.cols {
            return Err(serde::de::Error::custom("matrix data length mismatch"));
        }
        Ok(DMatrix::from_row_slice(r.rows, r.cols, &r.data))
    }
}
