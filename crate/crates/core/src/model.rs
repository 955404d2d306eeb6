//! Mean models `m(x; beta)` for the study variable and the quasi-score fit
//! on the non-probability sample.
//!
//! The estimating function is
//!
//! ```text
//! U(beta) = n_B^-1 * sum_{i in B} (y_i - m(x_i; beta)) h(x_i; beta)
//! ```
//!
//! with the canonical choice `h(x; beta) = x`, which makes `U` the GLM score
//! for each family and its Jacobian `-n_B^-1 * sum v_i x_i x_i'` symmetric
//! negative definite (`v_i = dm/d eta` evaluated at `x_i`).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrix, SurveySample};
use crate::error::{Error, Result};

/// Linear predictors beyond this magnitude are clamped before `exp`.
pub const EXP_GUARD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Linear,
    Logistic,
    LogLinear,
}

impl ModelFamily {
    /// Mean at linear predictor `eta`, plus whether `eta` was clamped.
    pub fn mean_at(self, eta: f64) -> (f64, bool) {
        match self {
            ModelFamily::Linear => (eta, false),
            ModelFamily::Logistic => {
                let saturated = eta.abs() > EXP_GUARD;
                let e = eta.clamp(-EXP_GUARD, EXP_GUARD);
                (1.0 / (1.0 + (-e).exp()), saturated)
            }
            ModelFamily::LogLinear => {
                let saturated = eta > EXP_GUARD;
                (eta.min(EXP_GUARD).exp(), saturated)
            }
        }
    }

    /// `dm / d eta` expressed through the mean.
    pub fn mean_derivative(self, mean: f64) -> f64 {
        match self {
            ModelFamily::Linear => 1.0,
            ModelFamily::Logistic => mean * (1.0 - mean),
            ModelFamily::LogLinear => mean,
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Logistic => "logistic",
            ModelFamily::LogLinear => "loglinear",
        })
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ModelFamily::Linear),
            "logistic" => Ok(ModelFamily::Logistic),
            "loglinear" | "log-linear" | "poisson" => Ok(ModelFamily::LogLinear),
            other => Err(Error::InvalidArgument(format!("unknown model family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanValue {
    pub value: f64,
    /// Set when the linear predictor hit [`EXP_GUARD`].
    pub saturated: bool,
}

fn dot(x: &[f64], beta: &[f64]) -> Result<f64> {
    if x.len() != beta.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.len(),
            found: x.len(),
        });
    }
    Ok(x.iter().zip(beta).map(|(a, b)| a * b).sum())
}

pub fn mean_value(family: ModelFamily, x: &[f64], beta: &[f64]) -> Result<MeanValue> {
    let (value, saturated) = family.mean_at(dot(x, beta)?);
    Ok(MeanValue { value, saturated })
}

/// `dm(x; beta) / d beta`.
pub fn mean_gradient(family: ModelFamily, x: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    let (m, _) = family.mean_at(dot(x, beta)?);
    let v = family.mean_derivative(m);
    Ok(x.iter().map(|xi| v * xi).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Convergence when `max |U_j| <= tolerance`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Logistic fits with `|beta|_2` above this are reported as separated.
    pub divergence_bound: f64,
    /// Logistic fits whose fitted probabilities all lie this close to 0 or 1
    /// are reported as separated.
    pub separation_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-10,
            max_iterations: 100,
            max_halvings: 20,
            divergence_bound: 1e4,
            separation_tolerance: 1e-6,
        }
    }
}

/// Outcome of fitting the mean model on sample B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub family: ModelFamily,
    pub beta_hat: Vec<f64>,
    pub iterations: usize,
    pub final_score_norm: f64,
    /// Design column names, intercept included.
    pub covariate_names: Vec<String>,
    pub intercept: bool,
    /// Which `h(x; beta)` the estimating equations used.
    pub h_choice: String,
    pub n_train: usize,
}

impl FittedModel {
    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta_hat)
    }

    fn check_columns(&self, design: &DesignMatrix) -> Result<()> {
        if design.column_names() != self.covariate_names.as_slice() {
            return Err(Error::ColumnMismatch {
                expected: self.covariate_names.clone(),
                found: design.column_names().to_vec(),
            });
        }
        Ok(())
    }

    /// Fitted means for every row of `design`.
    pub fn means(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        self.check_columns(design)?;
        Ok(means_at(self.family, design.values(), &self.beta()))
    }

    /// Rows of `dm/dbeta` for every row of `design`, as an `n x p` matrix.
    pub fn mean_gradients(&self, design: &DesignMatrix) -> Result<DMatrix<f64>> {
        self.check_columns(design)?;
        let m = means_at(self.family, design.values(), &self.beta());
        let mut g = design.values().clone();
        for (i, mi) in m.iter().enumerate() {
            let v = self.family.mean_derivative(*mi);
            g.row_mut(i).scale_mut(v);
        }
        Ok(g)
    }
}

pub(crate) fn means_at(family: ModelFamily, x: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    let eta = x * beta;
    eta.iter().map(|e| family.mean_at(*e).0).collect()
}

fn score_at(x: &DMatrix<f64>, y: &[f64], m: &[f64]) -> DVector<f64> {
    weighted_score(x, y, m, None)
}

/// Score with optional frequency weights, normalized by their total.
fn weighted_score(x: &DMatrix<f64>, y: &[f64], m: &[f64], freq: Option<&[f64]>) -> DVector<f64> {
    let (resid, total) = match freq {
        None => (
            DVector::from_iterator(y.len(), y.iter().zip(m).map(|(a, b)| a - b)),
            y.len() as f64,
        ),
        Some(f) => (
            DVector::from_iterator(y.len(), y.iter().zip(m).zip(f).map(|((a, b), w)| w * (a - b))),
            f.iter().sum(),
        ),
    };
    x.tr_mul(&resid) / total
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn check_response(y: &[f64], design: &DesignMatrix) -> Result<()> {
    if y.len() != design.nrows() {
        return Err(Error::DimensionMismatch {
            expected: design.nrows(),
            found: y.len(),
        });
    }
    Ok(())
}

/// Estimating function `U(beta)` on sample B with `h(x; beta) = x`.
pub fn quasi_score(
    family: ModelFamily,
    sample_b: &SurveySample,
    design: &DesignMatrix,
    beta: &[f64],
) -> Result<Vec<f64>> {
    let y = sample_b.require_response()?;
    check_response(y, design)?;
    if beta.len() != design.ncols() {
        return Err(Error::DimensionMismatch {
            expected: design.ncols(),
            found: beta.len(),
        });
    }
    let m = means_at(family, design.values(), &DVector::from_column_slice(beta));
    Ok(score_at(design.values(), y, &m).iter().copied().collect())
}

/// Column rank of `x` from the diagonal of its QR factor.
pub(crate) fn check_full_rank(x: &DMatrix<f64>) -> Result<()> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::RankDeficient { rank: n, columns: p });
    }
    let r = x.clone().qr().r();
    let diag: Vec<f64> = (0..p).map(|j| r[(j, j)].abs()).collect();
    let scale = diag.iter().cloned().fold(0.0, f64::max);
    let rank = diag
        .iter()
        .filter(|d| **d > 1e-10 * scale.max(f64::MIN_POSITIVE))
        .count();
    if rank < p || scale == 0.0 {
        return Err(Error::RankDeficient { rank, columns: p });
    }
    Ok(())
}

/// Solve the estimating equations on sample B.
pub fn fit_model(
    family: ModelFamily,
    sample_b: &SurveySample,
    design: &DesignMatrix,
    config: &SolverConfig,
) -> Result<FittedModel> {
    let y = sample_b.require_response()?;
    fit_response(family, y, design, config)
}

/// [`fit_model`] on a bare response vector.
pub fn fit_response(
    family: ModelFamily,
    y: &[f64],
    design: &DesignMatrix,
    config: &SolverConfig,
) -> Result<FittedModel> {
    check_response(y, design)?;
    let x = design.values();
    check_full_rank(x)?;
    let (beta, iterations, score_norm) = match family {
        ModelFamily::Linear => fit_linear(x, y)?,
        _ => fit_newton(family, x, y, None, config)?,
    };
    Ok(FittedModel {
        family,
        beta_hat: beta.iter().copied().collect(),
        iterations,
        final_score_norm: score_norm,
        covariate_names: design.column_names().to_vec(),
        intercept: design.intercept_included(),
        h_choice: "canonical (h = x)".into(),
        n_train: y.len(),
    })
}

fn fit_linear(x: &DMatrix<f64>, y: &[f64]) -> Result<(DVector<f64>, usize, f64)> {
    let qr = x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let rhs = q.tr_mul(&DVector::from_column_slice(y));
    let beta = r.solve_upper_triangular(&rhs).ok_or(Error::SingularSystem)?;
    let m = means_at(ModelFamily::Linear, x, &beta);
    let norm = inf_norm(&score_at(x, y, &m));
    Ok((beta, 1, norm))
}

fn separated(family: ModelFamily, beta: &DVector<f64>, m: &[f64], config: &SolverConfig) -> Option<Error> {
    if family != ModelFamily::Logistic {
        return None;
    }
    let beta_norm = beta.norm();
    let pinned = m.iter().all(|p| p.min(1.0 - p) <= config.separation_tolerance);
    (beta_norm > config.divergence_bound || pinned).then_some(Error::Separation { beta_norm })
}

fn fit_newton(
    family: ModelFamily,
    x: &DMatrix<f64>,
    y: &[f64],
    freq: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<(DVector<f64>, usize, f64)> {
    let (n, p) = x.shape();
    let total = freq.map_or(n as f64, |f| f.iter().sum());
    let mut beta = DVector::<f64>::zeros(p);
    let mut m = means_at(family, x, &beta);
    let mut u = weighted_score(x, y, &m, freq);

    for iter in 0..config.max_iterations {
        let norm = inf_norm(&u);
        if norm <= config.tolerance {
            if let Some(e) = separated(family, &beta, &m, config) {
                return Err(e);
            }
            return Ok((beta, iter, norm));
        }

        // Negative Jacobian: n^-1 sum v_i x_i x_i'.
        let mut info = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let v = family.mean_derivative(m[i]) * freq.map_or(1.0, |f| f[i]);
            for a in 0..p {
                let xa = v * x[(i, a)];
                for b in 0..=a {
                    info[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        info /= total;

        let step = match info.cholesky() {
            Some(c) => c.solve(&u),
            None => {
                return Err(separated(family, &beta, &m, config).unwrap_or(Error::SingularSystem));
            }
        };

        let current = u.norm();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let cand = &beta + &step * t;
            let cm = means_at(family, x, &cand);
            let cu = weighted_score(x, y, &cm, freq);
            if cu.norm() < current && cu.iter().all(|v| v.is_finite()) {
                accepted = Some((cand, cm, cu));
                break;
            }
            t *= 0.5;
        }
        let Some((nb, nm, nu)) = accepted else {
            if let Some(e) = separated(family, &beta, &m, config) {
                return Err(e);
            }
            return Err(Error::NoConvergence {
                iterations: iter + 1,
                score_norm: norm,
            });
        };
        beta = nb;
        m = nm;
        u = nu;
        if let Some(e) = separated(family, &beta, &m, config) {
            return Err(e);
        }
    }

    let norm = inf_norm(&u);
    if norm <= config.tolerance {
        return Ok((beta, config.max_iterations, norm));
    }
    Err(Error::NoConvergence {
        iterations: config.max_iterations,
        score_norm: norm,
    })
}

/// Fit on a with-replacement resample described by per-row selection
/// counts, without materializing the resampled rows. Returns `beta` only.
///
/// The linear family goes through the normal equations here; rank loss of
/// the resample surfaces as [`Error::RankDeficient`].
pub(crate) fn fit_counts(
    family: ModelFamily,
    y: &[f64],
    design: &DesignMatrix,
    counts: &[u32],
    config: &SolverConfig,
) -> Result<DVector<f64>> {
    let x = design.values();
    let p = x.ncols();
    let rows: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
    if rows.len() < p {
        return Err(Error::RankDeficient {
            rank: rows.len(),
            columns: p,
        });
    }
    if family == ModelFamily::Linear {
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        for &i in &rows {
            let f = f64::from(counts[i]);
            for a in 0..p {
                let xa = f * x[(i, a)];
                rhs[a] += xa * y[i];
                for b in 0..=a {
                    gram[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[(b, a)] = gram[(a, b)];
            }
        }
        let max_diag = (0..p).map(|j| gram[(j, j)]).fold(0.0, f64::max);
        let chol = gram.cholesky().ok_or(Error::RankDeficient {
            rank: p - 1,
            columns: p,
        })?;
        let l = chol.l_dirty();
        let min_pivot = (0..p).map(|j| l[(j, j)] * l[(j, j)]).fold(f64::INFINITY, f64::min);
        if min_pivot.is_nan() || min_pivot <= 1e-12 * max_diag {
            return Err(Error::RankDeficient {
                rank: p - 1,
                columns: p,
            });
        }
        return Ok(chol.solve(&rhs));
    }
    let xs = x.select_rows(&rows);
    check_full_rank(&xs)?;
    let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let fs: Vec<f64> = rows.iter().map(|&i| f64::from(counts[i])).collect();
    let (beta, _, _) = fit_newton(family, &xs, &ys, Some(&fs), config)?;
    Ok(beta)
}

/// Mass imputation: `yhat_i = m(x_i; beta_hat)` for every row of sample A.
pub fn predict_all(model: &FittedModel, design_a: &DesignMatrix) -> Result<Vec<f64>> {
    model.means(design_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::INTERCEPT;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(rows: &[&[f64]]) -> DesignMatrix {
        let p = rows[0].len();
        let values = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        let mut names = vec![INTERCEPT.to_string()];
        names.extend((1..p).map(|k| format!("x{k}")));
        DesignMatrix::new(values, names, true).unwrap()
    }

    fn sample_b(x: &DesignMatrix, y: Vec<f64>) -> SurveySample {
        let cov = x.values().columns(1, x.ncols() - 1).into_owned();
        SurveySample::nonprobability(x.column_names()[1..].to_vec(), cov, "y", y).unwrap()
    }

    #[test]
    fn mean_value_examples() {
        let m = mean_value(ModelFamily::Logistic, &[3.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(m.value, 0.5);
        assert_eq!(
            mean_value(ModelFamily::Linear, &[1.0, 2.0], &[1.0, 2.0]).unwrap().value,
            5.0
        );
        assert_eq!(mean_value(ModelFamily::LogLinear, &[4.0], &[0.0]).unwrap().value, 1.0);
        assert!(matches!(
            mean_value(ModelFamily::Linear, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn overflow_guard_saturates() {
        let m = mean_value(ModelFamily::LogLinear, &[1.0], &[800.0]).unwrap();
        assert!(m.saturated);
        assert!(m.value.is_finite());
        let m = mean_value(ModelFamily::Logistic, &[1.0], &[-800.0]).unwrap();
        assert!(m.saturated);
        assert!(m.value >= 0.0 && m.value < 1e-300);
        assert!(!mean_value(ModelFamily::Logistic, &[1.0], &[3.0]).unwrap().saturated);
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(
            mean_gradient(ModelFamily::Linear, &[1.0, 3.0], &[0.4, 0.2]).unwrap(),
            vec![1.0, 3.0]
        );
        assert_eq!(
            mean_gradient(ModelFamily::Logistic, &[1.0, 0.0], &[0.0, 0.0]).unwrap(),
            vec![0.25, 0.0]
        );
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for family in [ModelFamily::Linear, ModelFamily::Logistic, ModelFamily::LogLinear] {
            for _ in 0..100 {
                let p = rng.random_range(1..5);
                let x: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
                let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g = mean_gradient(family, &x, &beta).unwrap();
                let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
                for j in 0..p {
                    let h = 1e-5;
                    let mut up = beta.clone();
                    let mut dn = beta.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (mean_value(family, &x, &up).unwrap().value - mean_value(family, &x, &dn).unwrap().value)
                        / (2.0 * h);
                    assert!((fd - g[j]).abs() <= 1e-6 * scale, "{family} {fd} vs {}", g[j]);
                }
            }
        }
    }

    #[test]
    fn score_examples() {
        let d = design(&[&[1.0, 2.0], &[1.0, 5.0], &[1.0, 1.0]]);
        let b = sample_b(&d, vec![5.0, 11.0, 3.0]);
        let u = quasi_score(ModelFamily::Linear, &b, &d, &[1.0, 2.0]).unwrap();
        assert_eq!(u, vec![0.0, 0.0]);

        // One row, y = 3, x = (1, 2), beta = 0.
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let d1 = DesignMatrix::new(x, vec![INTERCEPT.into(), "x1".into()], true).unwrap();
        let y = [3.0];
        let m = means_at(ModelFamily::Linear, d1.values(), &DVector::zeros(2));
        let u = score_at(d1.values(), &y, &m);
        assert_eq!(u.as_slice(), &[3.0, 6.0]);
    }

    #[test]
    fn linear_noiseless_interpolation() {
        let d = design(&[&[1.0, 0.0], &[1.0, 1.0], &[1.0, 3.0], &[1.0, -2.0]]);
        let b = sample_b(&d, vec![1.0, 3.0, 7.0, -3.0]);
        let fit = fit_model(ModelFamily::Linear, &b, &d, &SolverConfig::default()).unwrap();
        assert!((fit.beta_hat[0] - 1.0).abs() < 1e-10);
        assert!((fit.beta_hat[1] - 2.0).abs() < 1e-10);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn duplicate_column_is_rank_deficient() {
        let d = design(&[&[1.0, 2.0, 2.0], &[1.0, 3.0, 3.0], &[1.0, 5.0, 5.0], &[1.0, 1.0, 1.0]]);
        let b = sample_b(&d, vec![1.0, 2.0, 3.0, 4.0]);
        let err = fit_model(ModelFamily::Linear, &b, &d, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { rank: 2, columns: 3 }), "{err:?}");
    }

    #[test]
    fn logistic_separation_detected() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0, i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let d = design(&refs);
        let y = (0..8).map(|i| if i < 4 { 0.0 } else { 1.0 }).collect();
        let b = sample_b(&d, y);
        let err = fit_model(ModelFamily::Logistic, &b, &d, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "{err:?}");
    }

    #[test]
    fn logistic_and_loglinear_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 400;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![1.0, *x]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let d = design(&refs);
        let yb: Vec<f64> = xs
            .iter()
            .map(|x| f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-(0.3 + 0.8 * x)).exp())))
            .collect();
        let yc: Vec<f64> = xs
            .iter()
            .map(|x| ((0.2 + 0.5 * x).exp() * rng.random_range(0.5..1.5)).round())
            .collect();
        for (family, y) in [(ModelFamily::Logistic, yb), (ModelFamily::LogLinear, yc)] {
            let b = sample_b(&d, y);
            let fit = fit_model(family, &b, &d, &SolverConfig::default()).unwrap();
            assert!(fit.final_score_norm <= 1e-10, "{family}: {}", fit.final_score_norm);
            let u = quasi_score(family, &b, &d, &fit.beta_hat).unwrap();
            assert!(u.iter().all(|v| v.abs() <= 1e-10));
            let again = fit_model(family, &b, &d, &SolverConfig::default()).unwrap();
            assert_eq!(again.beta_hat, fit.beta_hat);
        }
    }

    #[test]
    fn intercept_only_logistic_predicts_sample_mean() {
        let y = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let n = y.len();
        let b = SurveySample::nonprobability(vec![], DMatrix::zeros(n, 0), "y", y.clone()).unwrap();
        let d = DesignMatrix::new(DMatrix::from_element(n, 1, 1.0), vec![INTERCEPT.into()], true).unwrap();
        let fit = fit_model(ModelFamily::Logistic, &b, &d, &SolverConfig::default()).unwrap();
        let da = DesignMatrix::new(DMatrix::from_element(3, 1, 1.0), vec![INTERCEPT.into()], true).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        for v in predict_all(&fit, &da).unwrap() {
            assert!((v - mean).abs() < 1e-10);
        }
    }

    #[test]
    fn predict_identity_model_and_column_check() {
        let model = FittedModel {
            family: ModelFamily::Linear,
            beta_hat: vec![0.0, 1.0],
            iterations: 1,
            final_score_norm: 0.0,
            covariate_names: vec![INTERCEPT.into(), "x1".into()],
            intercept: true,
            h_choice: "canonical (h = x)".into(),
            n_train: 2,
        };
        let da = design(&[&[1.0, 1.0], &[1.0, 3.0]]);
        assert_eq!(predict_all(&model, &da).unwrap(), vec![1.0, 3.0]);
        let other = DesignMatrix::new(da.values().clone(), vec![INTERCEPT.into(), "z".into()], true).unwrap();
        assert!(matches!(predict_all(&model, &other), Err(Error::ColumnMismatch { .. })));
    }
}
