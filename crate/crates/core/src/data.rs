//! Sample containers, CSV ingestion, sampling designs and design matrices.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name given to the column of ones when a design includes an intercept.
pub const INTERCEPT: &str = "(intercept)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleKind {
    /// Probability sample with known design weights.
    ProbabilityA,
    /// Non-probability sample observing the study variable.
    NonProbabilityB,
}

/// How one declared covariate is read from a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CovariateSpec {
    Numeric {
        name: String,
    },
    /// Expanded into 0/1 indicators for every level except `reference`.
    /// When `levels` is `None` they are taken from the file in sorted order.
    Categorical {
        name: String,
        reference: String,
        levels: Option<Vec<String>>,
    },
}

impl CovariateSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        CovariateSpec::Numeric { name: name.into() }
    }

    pub fn categorical(name: impl Into<String>, reference: impl Into<String>) -> Self {
        CovariateSpec::Categorical {
            name: name.into(),
            reference: reference.into(),
            levels: None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            CovariateSpec::Numeric { name } | CovariateSpec::Categorical { name, .. } => name,
        }
    }
}

/// Column declarations for a sample file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub covariates: Vec<CovariateSpec>,
    pub response: Option<String>,
    pub weight: Option<String>,
}

impl Schema {
    pub fn numeric(covariates: &[&str]) -> Self {
        Schema {
            covariates: covariates.iter().map(|c| CovariateSpec::numeric(*c)).collect(),
            response: None,
            weight: None,
        }
    }

    pub fn with_response(mut self, name: impl Into<String>) -> Self {
        self.response = Some(name.into());
        self
    }

    pub fn with_weight(mut self, name: impl Into<String>) -> Self {
        self.weight = Some(name.into());
        self
    }

    /// Replace discovered categorical levels with the ones seen in `sample`,
    /// so that a second file is expanded into the same indicator columns.
    pub fn pin_levels(&mut self, sample: &SurveySample) {
        for spec in &mut self.covariates {
            if let CovariateSpec::Categorical {
                name,
                reference,
                levels,
            } = spec
            {
                let prefix = format!("{name}=");
                let mut seen: Vec<String> = vec![reference.clone()];
                seen.extend(
                    sample
                        .covariate_names()
                        .iter()
                        .filter_map(|c| c.strip_prefix(&prefix).map(str::to_owned)),
                );
                *levels = Some(seen);
            }
        }
    }
}

/// One of the two samples being combined.
///
/// Covariates are stored after categorical expansion. Membership in a
/// [`SampleKind::NonProbabilityB`] sample stands for the selection indicator;
/// it is never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveySample {
    kind: SampleKind,
    covariate_names: Vec<String>,
    covariates: DMatrix<f64>,
    response_name: Option<String>,
    response: Option<Vec<f64>>,
    weight_name: Option<String>,
    weights: Option<Vec<f64>>,
}

impl SurveySample {
    /// Probability sample with design weights `w_i = 1 / pi_i`.
    pub fn probability(
        covariate_names: Vec<String>,
        covariates: DMatrix<f64>,
        weight_name: impl Into<String>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let s = SurveySample {
            kind: SampleKind::ProbabilityA,
            covariate_names,
            covariates,
            response_name: None,
            response: None,
            weight_name: Some(weight_name.into()),
            weights: Some(weights),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn nonprobability(
        covariate_names: Vec<String>,
        covariates: DMatrix<f64>,
        response_name: impl Into<String>,
        response: Vec<f64>,
    ) -> Result<Self> {
        let s = SurveySample {
            kind: SampleKind::NonProbabilityB,
            covariate_names,
            covariates,
            response_name: Some(response_name.into()),
            response: Some(response),
            weight_name: None,
            weights: None,
        };
        s.validate()?;
        Ok(s)
    }

    /// Attach an observed response. Probability samples only carry one in
    /// simulations, where it feeds the gold-standard estimator.
    pub fn with_response(mut self, name: impl Into<String>, response: Vec<f64>) -> Result<Self> {
        self.response_name = Some(name.into());
        self.response = Some(response);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let n = self.covariates.nrows();
        if self.covariates.ncols() != self.covariate_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.covariate_names.len(),
                found: self.covariates.ncols(),
            });
        }
        let unique: BTreeSet<&String> = self.covariate_names.iter().collect();
        if unique.len() != self.covariate_names.len() {
            return Err(Error::InvalidSample("duplicate covariate names".into()));
        }
        let required = self.covariate_names.len() + 1;
        if n < required {
            return Err(Error::TooFewRows { rows: n, required });
        }
        for (j, name) in self.covariate_names.iter().enumerate() {
            if let Some(i) = self.covariates.column(j).iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumericValue {
                    column: name.clone(),
                    row: i + 1,
                    value: self.covariates[(i, j)].to_string(),
                });
            }
        }
        match self.kind {
            SampleKind::ProbabilityA => {
                let name = self.weight_name.clone().unwrap_or_default();
                let w = self
                    .weights
                    .as_ref()
                    .ok_or_else(|| Error::MissingColumn(name.clone()))?;
                check_len(w.len(), n)?;
                if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::NonPositiveWeight {
                        column: name,
                        row: i + 1,
                        value: w[i],
                    });
                }
            }
            SampleKind::NonProbabilityB => {
                if self.response.is_none() {
                    return Err(Error::MissingColumn(self.response_name.clone().unwrap_or_default()));
                }
            }
        }
        if let Some(y) = &self.response {
            check_len(y.len(), n)?;
            if let Some(i) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumericValue {
                    column: self.response_name.clone().unwrap_or_default(),
                    row: i + 1,
                    value: y[i].to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> SampleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.covariate_names.iter().position(|c| c == name)?;
        Some(self.covariates.column(j).iter().copied().collect())
    }

    pub fn response_name(&self) -> Option<&str> {
        self.response_name.as_deref()
    }

    pub fn response(&self) -> Option<&[f64]> {
        self.response.as_deref()
    }

    pub fn weight_name(&self) -> Option<&str> {
        self.weight_name.as_deref()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Response values, or an error naming the missing column.
    pub fn require_response(&self) -> Result<&[f64]> {
        self.response()
            .ok_or_else(|| Error::MissingColumn(self.response_name.clone().unwrap_or_else(|| "y".into())))
    }

    pub fn require_weights(&self) -> Result<&[f64]> {
        self.weights()
            .ok_or_else(|| Error::MissingColumn(self.weight_name.clone().unwrap_or_else(|| "w".into())))
    }

    /// Column headers in the order [`write_sample`] emits them.
    pub fn column_names(&self) -> Vec<String> {
        let mut cols = self.covariate_names.clone();
        cols.extend(self.response_name.iter().filter(|_| self.response.is_some()).cloned());
        cols.extend(self.weight_name.iter().filter(|_| self.weights.is_some()).cloned());
        cols
    }

    /// Row `i` rendered in [`column_names`](Self::column_names) order.
    pub fn row_values(&self, i: usize) -> Vec<f64> {
        let mut row: Vec<f64> = self.covariates.row(i).iter().copied().collect();
        if let Some(y) = &self.response {
            row.push(y[i]);
        }
        if let Some(w) = &self.weights {
            row.push(w[i]);
        }
        row
    }
}

fn check_len(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn parse_number(raw: &str, column: &str, row: usize) -> Result<f64> {
    let t = raw.trim();
    if t.is_empty() {
        return Err(Error::MissingValue {
            column: column.to_owned(),
            row,
        });
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumericValue {
            column: column.to_owned(),
            row,
            value: raw.to_owned(),
        }),
    }
}

/// Load and validate a sample from a CSV file.
pub fn load_sample(path: impl AsRef<Path>, schema: &Schema, kind: SampleKind) -> Result<SurveySample> {
    read_sample(File::open(path)?, schema, kind)
}

/// Parse a sample from any CSV source. Row numbers in errors are 1-based
/// data rows (the header is not counted).
pub fn read_sample<R: Read>(reader: R, schema: &Schema, kind: SampleKind) -> Result<SurveySample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyFile);
    }
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };

    let covariate_idx = schema
        .covariates
        .iter()
        .map(|c| find(c.name()))
        .collect::<Result<Vec<_>>>()?;
    let weight_col = match kind {
        SampleKind::ProbabilityA => {
            let name = schema
                .weight
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("probability sample needs a weight column".into()))?;
            Some((name, find(name)?))
        }
        SampleKind::NonProbabilityB => None,
    };
    let response_col = match (&schema.response, kind) {
        (Some(name), _) => Some((name.as_str(), find(name)?)),
        (None, SampleKind::NonProbabilityB) => {
            return Err(Error::InvalidArgument(
                "non-probability sample needs a response column".into(),
            ))
        }
        (None, SampleKind::ProbabilityA) => None,
    };

    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(Error::EmptyFile);
    }

    // Resolve categorical levels before expanding.
    let mut expanded_names = Vec::new();
    let mut level_sets: Vec<Option<(String, Vec<String>)>> = Vec::new();
    for (spec, &col) in schema.covariates.iter().zip(&covariate_idx) {
        match spec {
            CovariateSpec::Numeric { name } => {
                expanded_names.push(name.clone());
                level_sets.push(None);
            }
            CovariateSpec::Categorical {
                name,
                reference,
                levels,
            } => {
                let all: Vec<String> = match levels {
                    Some(l) => l.clone(),
                    None => {
                        let mut seen: BTreeSet<String> = records
                            .iter()
                            .map(|r| r.get(col).unwrap_or("").trim().to_owned())
                            .filter(|v| !v.is_empty())
                            .collect();
                        seen.insert(reference.clone());
                        seen.into_iter().collect()
                    }
                };
                if !all.contains(reference) {
                    return Err(Error::InvalidArgument(format!(
                        "reference level {reference:?} is not a level of `{name}`"
                    )));
                }
                let kept: Vec<String> = all.into_iter().filter(|l| l != reference).collect();
                expanded_names.extend(kept.iter().map(|l| format!("{name}={l}")));
                level_sets.push(Some((reference.clone(), kept)));
            }
        }
    }

    let n = records.len();
    let mut covariates = DMatrix::<f64>::zeros(n, expanded_names.len());
    let mut response = response_col.map(|_| Vec::with_capacity(n));
    let mut weights = weight_col.map(|_| Vec::with_capacity(n));

    for (i, rec) in records.iter().enumerate() {
        let row = i + 1;
        let mut j = 0;
        for ((spec, &col), levels) in schema.covariates.iter().zip(&covariate_idx).zip(&level_sets) {
            let raw = rec.get(col).unwrap_or("");
            match levels {
                None => {
                    covariates[(i, j)] = parse_number(raw, spec.name(), row)?;
                    j += 1;
                }
                Some((reference, kept)) => {
                    let v = raw.trim();
                    if v.is_empty() {
                        return Err(Error::MissingValue {
                            column: spec.name().to_owned(),
                            row,
                        });
                    }
                    if v != reference {
                        let k = kept.iter().position(|l| l == v).ok_or_else(|| Error::UnknownLevel {
                            column: spec.name().to_owned(),
                            row,
                            level: v.to_owned(),
                        })?;
                        covariates[(i, j + k)] = 1.0;
                    }
                    j += kept.len();
                }
            }
        }
        if let (Some(ys), Some((name, col))) = (response.as_mut(), response_col) {
            ys.push(parse_number(rec.get(col).unwrap_or(""), name, row)?);
        }
        if let (Some(ws), Some((name, col))) = (weights.as_mut(), weight_col) {
            let w = parse_number(rec.get(col).unwrap_or(""), name, row)?;
            if w <= 0.0 {
                return Err(Error::NonPositiveWeight {
                    column: name.to_owned(),
                    row,
                    value: w,
                });
            }
            ws.push(w);
        }
    }

    let s = SurveySample {
        kind,
        covariate_names: expanded_names,
        covariates,
        response_name: response_col.map(|(n, _)| n.to_owned()),
        response,
        weight_name: weight_col.map(|(n, _)| n.to_owned()),
        weights,
    };
    s.validate()?;
    Ok(s)
}

/// Write the numeric content of a sample (expanded covariates, response,
/// weight) with shortest round-trip float formatting.
pub fn write_sample(sample: &SurveySample, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_sample_to(sample, file)
}

pub fn write_sample_to<W: Write>(sample: &SurveySample, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(sample.column_names())?;
    for i in 0..sample.len() {
        wtr.write_record(sample.row_values(i).iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Sum of design weights, the estimate of `N` used when it is not supplied.
pub fn estimate_population_size(sample_a: &SurveySample) -> Result<f64> {
    if sample_a.kind() != SampleKind::ProbabilityA {
        return Err(Error::InvalidArgument(
            "population size can only be estimated from a probability sample".into(),
        ));
    }
    Ok(sample_a.require_weights()?.iter().sum())
}

/// Symmetric table of joint inclusion probabilities for the units of a
/// probability sample, with `pi_ii = pi_i` on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    values: DMatrix<f64>,
}

impl JointTable {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::InvalidDesign("joint probability table must be square".into()));
        }
        let n = values.nrows();
        for i in 0..n {
            for j in 0..n {
                let v = values[(i, j)];
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::InvalidDesign(format!("pi[{i},{j}] = {v} is outside (0, 1]")));
                }
                if (v - values[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidDesign(format!("table is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(JointTable { values })
    }

    /// Read a headerless, comma-separated square table.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .enumerate()
                .map(|(j, raw)| {
                    raw.trim().parse::<f64>().map_err(|_| Error::NonNumericValue {
                        column: format!("{}", j + 1),
                        row: i + 1,
                        value: raw.to_owned(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::EmptyFile);
        }
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        JointTable::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    SrsWithoutReplacement { population_size: usize },
    PpsWithReplacement,
    JointProbabilities(JointTable),
}

/// Sampling design of the probability sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub design: Design,
    pub population_size: Option<f64>,
}

impl DesignSpec {
    pub fn srs(population_size: usize) -> Self {
        DesignSpec {
            design: Design::SrsWithoutReplacement { population_size },
            population_size: Some(population_size as f64),
        }
    }

    pub fn ppswr() -> Self {
        DesignSpec {
            design: Design::PpsWithReplacement,
            population_size: None,
        }
    }

    pub fn joint(table: JointTable, population_size: Option<f64>) -> Self {
        DesignSpec {
            design: Design::JointProbabilities(table),
            population_size,
        }
    }

    pub fn supplies_joint_probabilities(&self) -> bool {
        !matches!(self.design, Design::PpsWithReplacement)
    }

    /// Check the design against a probability sample of size `n_a`.
    pub fn validate(&self, n_a: usize) -> Result<()> {
        match &self.design {
            Design::SrsWithoutReplacement { population_size } => {
                if *population_size < n_a || n_a == 0 {
                    return Err(Error::InvalidDesign(format!(
                        "SRS of size {n_a} from a population of {population_size}"
                    )));
                }
            }
            Design::PpsWithReplacement => {}
            Design::JointProbabilities(t) => {
                if t.len() != n_a {
                    return Err(Error::DimensionMismatch {
                        expected: n_a,
                        found: t.len(),
                    });
                }
            }
        }
        if let Some(n) = self.population_size {
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::InvalidDesign(format!("population size {n}")));
            }
        }
        Ok(())
    }
}

/// Dense model matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    intercept_included: bool,
    column_names: Vec<String>,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>, column_names: Vec<String>, intercept_included: bool) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::EmptyDesign);
        }
        if values.ncols() != column_names.len() {
            return Err(Error::DimensionMismatch {
                expected: column_names.len(),
                found: values.ncols(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design matrix has non-finite entries".into()));
        }
        Ok(DesignMatrix {
            values,
            intercept_included,
            column_names,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn intercept_included(&self) -> bool {
        self.intercept_included
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    /// New design with the given rows, in order; rows may repeat.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            values: self.values.select_rows(rows),
            intercept_included: self.intercept_included,
            column_names: self.column_names.clone(),
        }
    }

    /// Right-multiply by `transform`, renaming columns `t1..tp`.
    pub fn transformed(&self, transform: &DMatrix<f64>) -> Result<DesignMatrix> {
        if transform.nrows() != self.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.ncols(),
                found: transform.nrows(),
            });
        }
        let names = (1..=transform.ncols()).map(|k| format!("t{k}")).collect();
        DesignMatrix::new(&self.values * transform, names, false)
    }
}

/// Assemble the model matrix from named covariates, intercept column first.
pub fn build_design_matrix(sample: &SurveySample, covariates: &[&str], intercept: bool) -> Result<DesignMatrix> {
    let idx = covariates
        .iter()
        .map(|c| {
            sample
                .covariate_names()
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::UnknownCovariate((*c).to_owned()))
        })
        .collect::<Result<Vec<_>>>()?;
    let p = idx.len() + usize::from(intercept);
    if p == 0 {
        return Err(Error::EmptyDesign);
    }
    let n = sample.len();
    let offset = usize::from(intercept);
    let mut values = DMatrix::<f64>::zeros(n, p);
    if intercept {
        values.column_mut(0).fill(1.0);
    }
    for (k, &j) in idx.iter().enumerate() {
        values.set_column(k + offset, &sample.covariates().column(j));
    }
    let mut names = Vec::with_capacity(p);
    if intercept {
        names.push(INTERCEPT.to_owned());
    }
    names.extend(covariates.iter().map(|c| (*c).to_owned()));
    DesignMatrix::new(values, names, intercept)
}

/// Design over every covariate of the sample, in stored order.
pub fn full_design_matrix(sample: &SurveySample, intercept: bool) -> Result<DesignMatrix> {
    let names: Vec<&str> = sample.covariate_names().iter().map(String::as_str).collect();
    build_design_matrix(sample, &names, intercept)
}
