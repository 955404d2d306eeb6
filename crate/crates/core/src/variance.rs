//! Linearization variance of the mass imputation estimator.
//!
//! The variance splits into a design component for sample A,
//!
//! ```text
//! V_A = N^-2 sum_{i,j in A} (pi_ij - pi_i pi_j) / pi_ij * w_i m_i * w_j m_j
//! ```
//!
//! and a model component for sample B,
//!
//! ```text
//! V_B = N^-2 sum_{i in B} e_i^2 (c' h_i)^2,
//! (sum_{i in B} mdot_i h_i') c = sum_{i in A} w_i mdot_i.
//! ```
//!
//! The unobservable population total of `mdot` in the `c` system is replaced
//! by its Horvitz-Thompson estimate from A. No finite-population correction
//! is applied on the B side, and the extra variance that arises under a
//! misspecified mean model is not estimable and is left out.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Design, DesignMatrix, DesignSpec, SurveySample};
use crate::error::{Error, Result};
use crate::estimators::resolve_population_size;
use crate::model::{predict_all, FittedModel};

/// Critical value for the normal 95% interval.
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceStrategy {
    /// Horvitz-Thompson variance with the design's joint inclusion probabilities.
    ExactJoint,
    /// With-replacement approximation that needs only the weights.
    PpswrApprox,
}

impl VarianceStrategy {
    /// `ExactJoint` when the design carries joint probabilities, else the
    /// with-replacement approximation.
    pub fn default_for(design: &DesignSpec) -> Self {
        if design.supplies_joint_probabilities() {
            VarianceStrategy::ExactJoint
        } else {
            VarianceStrategy::PpswrApprox
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationComponents {
    pub c_hat: Vec<f64>,
    /// `y_i - m(x_i; beta_hat)` over sample B.
    pub residuals: Vec<f64>,
    pub v_a: f64,
    pub v_b: f64,
    pub v_total: f64,
    pub strategy_a: VarianceStrategy,
    /// Set when the exact-joint design component came out negative.
    pub v_a_negative: bool,
}

/// Solve `(sum_B mdot_i x_i') c = sum_A w_i mdot_i`.
pub fn compute_c_hat(
    model: &FittedModel,
    weights_a: &[f64],
    design_a: &DesignMatrix,
    design_b: &DesignMatrix,
) -> Result<Vec<f64>> {
    if weights_a.len() != design_a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: design_a.nrows(),
            found: weights_a.len(),
        });
    }
    let grad_b = model.mean_gradients(design_b)?;
    let grad_a = model.mean_gradients(design_a)?;
    let system: DMatrix<f64> = grad_b.tr_mul(design_b.values());
    let rhs: DVector<f64> = grad_a.tr_mul(&DVector::from_column_slice(weights_a));
    let c = system.clone().lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let resid = (&system * &c - &rhs).amax();
    let scale = rhs.amax().max(f64::MIN_POSITIVE);
    if resid > 1e-8 * scale {
        return Err(Error::SingularSystem);
    }
    Ok(c.iter().copied().collect())
}

/// `N^-2 sum_{i in B} e_i^2 (c' x_i)^2`.
pub fn variance_component_b(
    model: &FittedModel,
    response_b: &[f64],
    design_b: &DesignMatrix,
    c_hat: &[f64],
    population_size: f64,
) -> Result<f64> {
    let (_, v) = component_b(model, response_b, design_b, c_hat, population_size)?;
    Ok(v)
}

fn component_b(
    model: &FittedModel,
    response_b: &[f64],
    design_b: &DesignMatrix,
    c_hat: &[f64],
    population_size: f64,
) -> Result<(Vec<f64>, f64)> {
    if c_hat.len() != design_b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: design_b.ncols(),
            found: c_hat.len(),
        });
    }
    if response_b.len() != design_b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: design_b.nrows(),
            found: response_b.len(),
        });
    }
    let fitted = predict_all(model, design_b)?;
    let residuals: Vec<f64> = response_b.iter().zip(&fitted).map(|(y, m)| y - m).collect();
    let g = design_b.values() * DVector::from_column_slice(c_hat);
    let sum: f64 = residuals.iter().zip(g.iter()).map(|(e, gi)| (e * gi).powi(2)).sum();
    Ok((residuals, sum / (population_size * population_size)))
}

/// Design variance of the Horvitz-Thompson mean of the predictions.
pub fn variance_component_a(
    predictions: &[f64],
    weights: &[f64],
    design: &DesignSpec,
    strategy: VarianceStrategy,
    population_size: f64,
) -> Result<f64> {
    let n = predictions.len();
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.len(),
        });
    }
    design.validate(n)?;
    let t: Vec<f64> = predictions.iter().zip(weights).map(|(m, w)| m * w).collect();
    let n2 = population_size * population_size;
    match strategy {
        VarianceStrategy::PpswrApprox => {
            if n < 2 {
                return Err(Error::UnsupportedDesign(
                    "with-replacement variance needs at least two units".into(),
                ));
            }
            let nf = n as f64;
            let mean = t.iter().sum::<f64>() / nf;
            let ss: f64 = t.iter().map(|v| (v - mean).powi(2)).sum();
            Ok(nf / (nf - 1.0) * ss / n2)
        }
        VarianceStrategy::ExactJoint => match &design.design {
            Design::PpsWithReplacement => Err(Error::MissingJointProbabilities),
            Design::SrsWithoutReplacement { population_size: big_n } => {
                // pi_ij is the same for every pair, so the double sum
                // collapses to sums and sums of squares.
                let (nf, bn) = (n as f64, *big_n as f64);
                let pi = nf / bn;
                let diag = 1.0 - pi;
                let off = if n > 1 {
                    let pij = nf * (nf - 1.0) / (bn * (bn - 1.0));
                    (pij - pi * pi) / pij
                } else {
                    0.0
                };
                let sum: f64 = t.iter().sum();
                let sq: f64 = t.iter().map(|v| v * v).sum();
                Ok((diag * sq + off * (sum * sum - sq)) / n2)
            }
            Design::JointProbabilities(table) => {
                let mut total = 0.0;
                for i in 0..n {
                    let pi_i = table.get(i, i);
                    for j in 0..n {
                        let pij = table.get(i, j);
                        let pi_j = table.get(j, j);
                        total += (pij - pi_i * pi_j) / pij * t[i] * t[j];
                    }
                }
                Ok(total / n2)
            }
        },
    }
}

/// Both components, assembled. `strategy` defaults per
/// [`VarianceStrategy::default_for`]; `population_size` defaults to the
/// weight total of sample A.
#[allow(clippy::too_many_arguments)]
pub fn linearized_variance(
    model: &FittedModel,
    sample_a: &SurveySample,
    design_a: &DesignMatrix,
    sample_b: &SurveySample,
    design_b: &DesignMatrix,
    design: &DesignSpec,
    strategy: Option<VarianceStrategy>,
    population_size: Option<f64>,
) -> Result<LinearizationComponents> {
    let big_n = resolve_population_size(sample_a, population_size.or(design.population_size))?;
    let weights = sample_a.require_weights()?;
    let strategy = strategy.unwrap_or_else(|| VarianceStrategy::default_for(design));
    let c_hat = compute_c_hat(model, weights, design_a, design_b)?;
    let (residuals, v_b) = component_b(model, sample_b.require_response()?, design_b, &c_hat, big_n)?;
    let yhat = predict_all(model, design_a)?;
    let v_a = variance_component_a(&yhat, weights, design, strategy, big_n)?;
    Ok(LinearizationComponents {
        c_hat,
        residuals,
        v_a,
        v_b,
        v_total: v_a + v_b,
        strategy_a: strategy,
        v_a_negative: v_a < 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    Linearized,
    Bootstrap,
}

/// Variance record attached to an estimate report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceBlock {
    pub method: VarianceMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_b: Option<f64>,
    pub v_total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy_a: Option<VarianceStrategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    pub standard_error: f64,
    pub ci95_lower: f64,
    pub ci95_upper: f64,
    /// How the interval was formed.
    pub ci_method: String,
}

impl VarianceBlock {
    fn interval(method: VarianceMethod, theta_hat: f64, v_total: f64) -> Self {
        let se = v_total.max(0.0).sqrt();
        VarianceBlock {
            method,
            v_a: None,
            v_b: None,
            v_total,
            strategy_a: None,
            replicates: None,
            standard_error: se,
            ci95_lower: theta_hat - Z_975 * se,
            ci95_upper: theta_hat + Z_975 * se,
            ci_method: "normal approximation: theta_hat +/- 1.96 * standard_error".into(),
        }
    }

    pub fn linearized(theta_hat: f64, c: &LinearizationComponents) -> Self {
        VarianceBlock {
            v_a: Some(c.v_a),
            v_b: Some(c.v_b),
            strategy_a: Some(c.strategy_a),
            ..Self::interval(VarianceMethod::Linearized, theta_hat, c.v_total)
        }
    }

    pub fn bootstrap(theta_hat: f64, v_boot: f64, replicates: usize) -> Self {
        VarianceBlock {
            replicates: Some(replicates),
            ..Self::interval(VarianceMethod::Bootstrap, theta_hat, v_boot)
        }
    }
}
