//! Point estimators of the finite-population mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{estimate_population_size, DesignMatrix, SampleKind, SurveySample, INTERCEPT};
use crate::error::{Error, Result};
use crate::model::{predict_all, FittedModel, SolverConfig};
use crate::variance::VarianceBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Horvitz-Thompson mean of an observed variable on sample A.
    Ht,
    MassImputation,
    /// Unweighted mean of sample B.
    NaiveB,
    /// Inverse propensity weighting over sample B.
    Ipw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator_kind: EstimatorKind,
    pub theta_hat: f64,
    pub n_a: Option<usize>,
    pub n_b: Option<usize>,
    pub population_size_used: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<VarianceBlock>,
}

impl EstimateReport {
    pub fn with_variance(mut self, variance: VarianceBlock) -> Self {
        self.variance = Some(variance);
        self
    }
}

fn check_population_size(n: f64) -> Result<f64> {
    if n.is_finite() && n > 0.0 {
        Ok(n)
    } else {
        Err(Error::InvalidArgument(format!(
            "population size must be positive, got {n}"
        )))
    }
}

/// `N^-1 * sum w_i v_i`.
pub fn ht_mean(values: &[f64], weights: &[f64], population_size: f64) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: values.len(),
        });
    }
    let n = check_population_size(population_size)?;
    if let Some(i) = weights.iter().position(|w| w.is_nan() || *w <= 0.0) {
        return Err(Error::NonPositiveWeight {
            column: "weight".into(),
            row: i + 1,
            value: weights[i],
        });
    }
    Ok(values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / n)
}

/// Resolve the population size: the supplied value, else the weight total.
pub fn resolve_population_size(sample_a: &SurveySample, population_size: Option<f64>) -> Result<f64> {
    match population_size {
        Some(n) => check_population_size(n),
        None => estimate_population_size(sample_a),
    }
}

/// `theta_I = N^-1 * sum_{i in A} w_i m(x_i; beta_hat)`.
pub fn mass_imputation_estimate(
    model: &FittedModel,
    sample_a: &SurveySample,
    design_a: &DesignMatrix,
    population_size: Option<f64>,
) -> Result<EstimateReport> {
    if sample_a.kind() != SampleKind::ProbabilityA {
        return Err(Error::InvalidArgument(
            "mass imputation needs a probability sample".into(),
        ));
    }
    let n = resolve_population_size(sample_a, population_size)?;
    let yhat = predict_all(model, design_a)?;
    let theta_hat = ht_mean(&yhat, sample_a.require_weights()?, n)?;
    Ok(EstimateReport {
        estimator_kind: EstimatorKind::MassImputation,
        theta_hat,
        n_a: Some(sample_a.len()),
        n_b: Some(model.n_train),
        population_size_used: Some(n),
        variance: None,
    })
}

pub fn naive_mean(sample_b: &SurveySample) -> Result<EstimateReport> {
    let y = sample_b.require_response()?;
    Ok(EstimateReport {
        estimator_kind: EstimatorKind::NaiveB,
        theta_hat: y.iter().sum::<f64>() / y.len() as f64,
        n_a: None,
        n_b: Some(y.len()),
        population_size_used: None,
        variance: None,
    })
}

/// Logistic propensity model for membership in sample B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub phi_hat: Vec<f64>,
    pub score_norm: f64,
    pub iterations: usize,
    pub covariate_names: Vec<String>,
}

fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

impl PropensityModel {
    /// Fitted propensities for the rows of `design`.
    pub fn propensities(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        if design.column_names() != self.covariate_names.as_slice() {
            return Err(Error::ColumnMismatch {
                expected: self.covariate_names.clone(),
                found: design.column_names().to_vec(),
            });
        }
        let eta = design.values() * DVector::from_column_slice(&self.phi_hat);
        Ok(eta.iter().map(|e| logistic(*e)).collect())
    }
}

/// Default solver settings for the propensity score equations, whose score
/// is an unnormalized sum.
pub fn propensity_solver() -> SolverConfig {
    SolverConfig {
        tolerance: 1e-8,
        ..SolverConfig::default()
    }
}

/// Solve `sum_{i in B} x_i - sum_{i in A} w_i pi(x_i; phi) x_i = 0` for a
/// logistic `pi` by Newton's method with step halving.
pub fn fit_propensity(
    sample_a: &SurveySample,
    design_a: &DesignMatrix,
    design_b: &DesignMatrix,
    config: &SolverConfig,
) -> Result<PropensityModel> {
    if design_a.column_names() != design_b.column_names() {
        return Err(Error::ColumnMismatch {
            expected: design_b.column_names().to_vec(),
            found: design_a.column_names().to_vec(),
        });
    }
    let w = sample_a.require_weights()?;
    if w.len() != design_a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: design_a.nrows(),
            found: w.len(),
        });
    }
    crate::model::check_full_rank(design_a.values())?;
    let xa = design_a.values();
    let p = xa.ncols();
    let total_b: DVector<f64> = design_b.values().row_sum().transpose();

    let score = |phi: &DVector<f64>| -> (DVector<f64>, Vec<f64>) {
        let pi: Vec<f64> = (xa * phi).iter().map(|e| logistic(*e)).collect();
        let wp = DVector::from_iterator(w.len(), w.iter().zip(&pi).map(|(a, b)| a * b));
        (&total_b - xa.tr_mul(&wp), pi)
    };
    let inf = |v: &DVector<f64>| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));

    let mut phi = DVector::<f64>::zeros(p);
    if let Some(j) = design_a.column_names().iter().position(|c| c == INTERCEPT) {
        let n_hat: f64 = w.iter().sum();
        let rate = design_b.nrows() as f64 / n_hat;
        if rate > 0.0 && rate < 1.0 {
            phi[j] = (rate / (1.0 - rate)).ln();
        }
    }
    let (mut u, mut pi) = score(&phi);

    for iter in 0..config.max_iterations {
        let norm = inf(&u);
        if norm <= config.tolerance {
            return Ok(PropensityModel {
                phi_hat: phi.iter().copied().collect(),
                score_norm: norm,
                iterations: iter,
                covariate_names: design_a.column_names().to_vec(),
            });
        }
        let mut info = DMatrix::<f64>::zeros(p, p);
        for i in 0..xa.nrows() {
            let v = w[i] * pi[i] * (1.0 - pi[i]);
            for a in 0..p {
                let xv = v * xa[(i, a)];
                for b in 0..=a {
                    info[(a, b)] += xv * xa[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        let step = info.cholesky().ok_or(Error::SingularSystem)?.solve(&u);
        let current = u.norm();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let cand = &phi + &step * t;
            let (cu, cpi) = score(&cand);
            if cu.norm() < current {
                accepted = Some((cand, cu, cpi));
                break;
            }
            t *= 0.5;
        }
        let Some((np, nu, npi)) = accepted else {
            return Err(Error::NoConvergence {
                iterations: iter + 1,
                score_norm: norm,
            });
        };
        phi = np;
        u = nu;
        pi = npi;
    }
    let norm = inf(&u);
    if norm <= config.tolerance {
        return Ok(PropensityModel {
            phi_hat: phi.iter().copied().collect(),
            score_norm: norm,
            iterations: config.max_iterations,
            covariate_names: design_a.column_names().to_vec(),
        });
    }
    Err(Error::NoConvergence {
        iterations: config.max_iterations,
        score_norm: norm,
    })
}

/// `theta_IPW = N^-1 * sum_{i in B} y_i / pi_hat_i`.
pub fn ipw_estimate(
    propensity: &PropensityModel,
    sample_b: &SurveySample,
    design_b: &DesignMatrix,
    population_size: f64,
) -> Result<EstimateReport> {
    let n = check_population_size(population_size)?;
    let y = sample_b.require_response()?;
    let pi = propensity.propensities(design_b)?;
    if pi.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: pi.len(),
        });
    }
    let mut total = 0.0;
    for (i, (yi, p)) in y.iter().zip(&pi).enumerate() {
        let inv = 1.0 / p;
        if p.is_nan() || *p <= 0.0 || !inv.is_finite() {
            return Err(Error::ZeroPropensity { row: i + 1 });
        }
        total += yi * inv;
    }
    Ok(EstimateReport {
        estimator_kind: EstimatorKind::Ipw,
        theta_hat: total / n,
        n_a: None,
        n_b: Some(y.len()),
        population_size_used: Some(n),
        variance: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_design_matrix;
    use crate::model::{fit_model, ModelFamily};
    use itertools_free::combinations;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    mod itertools_free {
        /// All `k`-subsets of `0..n` in lexicographic order.
        pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
            fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
                if cur.len() == k {
                    out.push(cur.clone());
                    return;
                }
                for i in start..n {
                    cur.push(i);
                    rec(i + 1, n, k, cur, out);
                    cur.pop();
                }
            }
            let mut out = Vec::new();
            rec(0, n, k, &mut Vec::new(), &mut out);
            out
        }
    }

    fn a_sample(x: &[f64], w: &[f64]) -> SurveySample {
        SurveySample::probability(
            vec!["x".into()],
            DMatrix::from_column_slice(x.len(), 1, x),
            "w",
            w.to_vec(),
        )
        .unwrap()
    }

    fn b_sample(x: &[f64], y: &[f64]) -> SurveySample {
        SurveySample::nonprobability(
            vec!["x".into()],
            DMatrix::from_column_slice(x.len(), 1, x),
            "y",
            y.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn ht_mean_examples() {
        assert_eq!(ht_mean(&[1.0, 3.0], &[2.0, 2.0], 4.0).unwrap(), 2.0);
        let v = [1.5, 2.5, 7.0, -1.0];
        let mean = v.iter().sum::<f64>() / 4.0;
        assert!((ht_mean(&v, &[25.0; 4], 100.0).unwrap() - mean).abs() < 1e-12);
        assert!(matches!(
            ht_mean(&[1.0], &[1.0, 2.0], 3.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ht_mean_unbiased_over_all_srs_samples() {
        let pop = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let samples = combinations(6, 2);
        assert_eq!(samples.len(), 15);
        let avg: f64 = samples
            .iter()
            .map(|s| ht_mean(&[pop[s[0]], pop[s[1]]], &[3.0, 3.0], 6.0).unwrap())
            .sum::<f64>()
            / 15.0;
        assert!((avg - 3.5).abs() < 1e-12);
    }

    #[test]
    fn mass_imputation_hand_example() {
        let a = a_sample(&[1.0, 3.0], &[2.0, 2.0]);
        let da = build_design_matrix(&a, &["x"], true).unwrap();
        let model = FittedModel {
            family: ModelFamily::Linear,
            beta_hat: vec![0.0, 1.0],
            iterations: 1,
            final_score_norm: 0.0,
            covariate_names: da.column_names().to_vec(),
            intercept: true,
            h_choice: String::new(),
            n_train: 2,
        };
        let r = mass_imputation_estimate(&model, &a, &da, Some(4.0)).unwrap();
        assert_eq!(r.theta_hat, 2.0);
        assert_eq!(r.population_size_used, Some(4.0));
        // Without N the weight total (4) is used.
        let r = mass_imputation_estimate(&model, &a, &da, None).unwrap();
        assert_eq!(r.population_size_used, Some(4.0));
    }

    #[test]
    fn census_with_exact_model_recovers_population_mean() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let b = b_sample(&x[..10], &y[..10]);
        let db = build_design_matrix(&b, &["x"], true).unwrap();
        let fit = fit_model(ModelFamily::Linear, &b, &db, &SolverConfig::default()).unwrap();
        let a = a_sample(&x, &[1.0; 20]);
        let da = build_design_matrix(&a, &["x"], true).unwrap();
        let r = mass_imputation_estimate(&fit, &a, &da, Some(20.0)).unwrap();
        let theta_n = y.iter().sum::<f64>() / 20.0;
        assert!((r.theta_hat - theta_n).abs() < 1e-12);
    }

    #[test]
    fn logistic_mass_imputation_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xb: Vec<f64> = (0..200).map(|_| rng.random_range(-3.0..3.0)).collect();
        let yb: Vec<f64> = xb
            .iter()
            .map(|x| f64::from(rng.random::<f64>() < logistic(1.5 * x)))
            .collect();
        let b = b_sample(&xb, &yb);
        let db = build_design_matrix(&b, &["x"], true).unwrap();
        let fit = fit_model(ModelFamily::Logistic, &b, &db, &SolverConfig::default()).unwrap();
        let xa: Vec<f64> = (0..50).map(|_| rng.random_range(-10.0..10.0)).collect();
        let a = a_sample(&xa, &[3.0; 50]);
        let da = build_design_matrix(&a, &["x"], true).unwrap();
        let r = mass_imputation_estimate(&fit, &a, &da, None).unwrap();
        assert!((0.0..=1.0).contains(&r.theta_hat));
    }

    #[test]
    fn naive_mean_example() {
        let b = b_sample(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        assert_eq!(naive_mean(&b).unwrap().theta_hat, 2.0);
    }

    fn intercept_only(n: usize) -> DesignMatrix {
        DesignMatrix::new(DMatrix::from_element(n, 1, 1.0), vec![INTERCEPT.into()], true).unwrap()
    }

    #[test]
    fn intercept_only_propensity_is_sampling_rate() {
        let a = a_sample(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 15.0]);
        let b = b_sample(&[0.0, 1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 2.0, 8.0, 5.0]);
        let model = fit_propensity(&a, &intercept_only(4), &intercept_only(5), &propensity_solver()).unwrap();
        let n_hat = 75.0;
        for p in model.propensities(&intercept_only(5)).unwrap() {
            assert!((p - 5.0 / n_hat).abs() < 1e-12, "{p}");
        }
        let r = ipw_estimate(&model, &b, &intercept_only(5), 100.0).unwrap();
        let expected = (n_hat / 5.0) * b.response().unwrap().iter().sum::<f64>() / 100.0;
        assert!((r.theta_hat - expected).abs() < 1e-10);
    }

    fn propensity_fixture(seed: u64, n_a: usize, n_b: usize) -> (SurveySample, DesignMatrix, DesignMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xa: Vec<f64> = (0..n_a).map(|_| rng.random_range(0.0..4.0)).collect();
        let xb: Vec<f64> = (0..n_b).map(|_| rng.random_range(0.0..3.0)).collect();
        let yb: Vec<f64> = xb.iter().map(|x| 1.0 + x).collect();
        let a = a_sample(&xa, &vec![40.0; n_a]);
        let b = b_sample(&xb, &yb);
        let da = build_design_matrix(&a, &["x"], true).unwrap();
        let db = build_design_matrix(&b, &["x"], true).unwrap();
        (a, da, db)
    }

    #[test]
    fn propensity_score_solved_on_simulated_data() {
        let (a, da, db) = propensity_fixture(9, 300, 150);
        let model = fit_propensity(&a, &da, &db, &propensity_solver()).unwrap();
        assert!(model.score_norm <= 1e-8);
        assert!(model.propensities(&da).unwrap().iter().all(|p| *p > 0.0 && *p < 1.0));
    }

    // Newton solution against a brute-force grid minimizing |U(phi)|.
    #[test]
    fn propensity_matches_grid_search() {
        let (a, da, db) = propensity_fixture(21, 40, 12);
        let model = fit_propensity(&a, &da, &db, &propensity_solver()).unwrap();
        let w = a.weights().unwrap();
        let xa: Vec<f64> = da.values().column(1).iter().copied().collect();
        let sum_b = [db.nrows() as f64, db.values().column(1).sum()];
        let u_norm = |p0: f64, p1: f64| {
            let mut u = sum_b;
            for (x, wi) in xa.iter().zip(w) {
                let pi = 1.0 / (1.0 + (-(p0 + p1 * x)).exp());
                u[0] -= wi * pi;
                u[1] -= wi * pi * x;
            }
            u[0].hypot(u[1])
        };
        let step = 0.005;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=1200 {
            let p0 = -6.0 + i as f64 * step;
            for j in 0..=800 {
                let p1 = -2.0 + j as f64 * step;
                let v = u_norm(p0, p1);
                if v < best.0 {
                    best = (v, p0, p1);
                }
            }
        }
        assert!(
            (model.phi_hat[0] - best.1).abs() <= step,
            "{:?} vs {:?}",
            model.phi_hat,
            best
        );
        assert!(
            (model.phi_hat[1] - best.2).abs() <= step,
            "{:?} vs {:?}",
            model.phi_hat,
            best
        );
    }

    #[test]
    fn ipw_rejects_zero_propensity() {
        let b = b_sample(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        let db = build_design_matrix(&b, &["x"], true).unwrap();
        let model = PropensityModel {
            phi_hat: vec![-800.0, 0.0],
            score_norm: 0.0,
            iterations: 0,
            covariate_names: db.column_names().to_vec(),
        };
        assert!(matches!(
            ipw_estimate(&model, &b, &db, 10.0),
            Err(Error::ZeroPropensity { row: 1 })
        ));
    }
}
