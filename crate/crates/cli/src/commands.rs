use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use massimp::bootstrap::{manifest_path, read_manifest, write_json, AugmentedManifest, ReplicateSet};
use massimp::data::full_design_matrix;
use massimp::estimators::{EstimateReport, EstimatorKind};
use massimp::model::fit_model;
use massimp::simulation::{run_monte_carlo_detailed, write_rep_records, SimConfig, SimReport};
use massimp::{
    build_replicates, estimate_population_size, linearized_variance, load_sample, mass_imputation_estimate,
    predict_all, read_augmented_dataset, write_augmented_dataset, CovariateSpec, DesignMatrix, DesignSpec, Error,
    FittedModel, JointTable, Result, SampleKind, Schema, SolverConfig, SurveySample, VarianceBlock, VarianceStrategy,
};
use serde::{Deserialize, Serialize};

use crate::args::{
    BootstrapArgs, DesignChoice, EstimateArgs, FitArgs, ImputeArgs, ModelSpecArgs, SimulateArgs, StrategyChoice,
    VarianceChoice,
};
use crate::provenance::Provenance;

/// Written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub provenance: Provenance,
    /// Schema of sample B with categorical levels fixed.
    pub schema: Schema,
    pub model: FittedModel,
}

/// Sidecar of files written by `impute` and `bootstrap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseManifest {
    pub provenance: Provenance,
    pub weight_column: String,
    /// Covariate columns of the file, after categorical expansion.
    pub covariate_columns: Vec<String>,
    pub train_schema: Schema,
    pub model: FittedModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<AugmentedManifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub provenance: Provenance,
    pub estimate: EstimateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateFile {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub report: SimReport,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

fn schema_from_args(spec: &ModelSpecArgs) -> Result<Schema> {
    let response = spec.response.clone().ok_or_else(|| usage("--response is required"))?;
    let mut covariates: Vec<CovariateSpec> = spec
        .covariates
        .as_deref()
        .map(split_list)
        .unwrap_or_default()
        .into_iter()
        .map(CovariateSpec::numeric)
        .collect();
    for item in spec.categorical.as_deref().map(split_list).unwrap_or_default() {
        let (name, reference) = item
            .split_once(':')
            .ok_or_else(|| usage(format!("--categorical expects name:reference, got `{item}`")))?;
        covariates.push(CovariateSpec::categorical(name.trim(), reference.trim()));
    }
    if covariates.is_empty() && spec.no_intercept {
        return Err(usage("the model needs covariates or an intercept"));
    }
    Ok(Schema {
        covariates,
        response: Some(response),
        weight: None,
    })
}

fn parse_pop_size(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("estimate") {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(n) if n.is_finite() && n > 0.0 => Ok(Some(n)),
        _ => Err(usage(format!(
            "--pop-size must be a positive number or `estimate`, got `{s}`"
        ))),
    }
}

struct Training {
    schema: Schema,
    sample: SurveySample,
    design: DesignMatrix,
    model: FittedModel,
}

fn train(path: &Path, mut schema: Schema, family: massimp::ModelFamily, intercept: bool) -> Result<Training> {
    let sample = load_sample(path, &schema, SampleKind::NonProbabilityB)?;
    schema.pin_levels(&sample);
    let design = full_design_matrix(&sample, intercept)?;
    let model = fit_model(family, &sample, &design, &SolverConfig::default())?;
    Ok(Training {
        schema,
        sample,
        design,
        model,
    })
}

fn load_a(path: &Path, train_schema: &Schema, weight: &str) -> Result<SurveySample> {
    let schema = Schema {
        covariates: train_schema.covariates.clone(),
        response: None,
        weight: Some(weight.to_owned()),
    };
    load_sample(path, &schema, SampleKind::ProbabilityA)
}

fn emit<T: Serialize>(value: &T, path: Option<&PathBuf>) -> Result<()> {
    match path {
        Some(p) => write_json(value, p),
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, value)?;
            out.write_all(b"\n")?;
            Ok(())
        }
    }
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let schema = schema_from_args(&args.spec)?;
    let t = train(&args.train, schema, args.spec.family, !args.spec.no_intercept)?;
    let file = ModelFile {
        provenance: Provenance::new("fit", None).input("train", &args.train)?,
        schema: t.schema,
        model: t.model,
    };
    write_json(&file, &args.out)
}

fn read_model_file(path: &Path) -> Result<ModelFile> {
    Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(
        path,
    )?))?)
}

pub fn impute(args: &ImputeArgs) -> Result<()> {
    let model_file = read_model_file(&args.model)?;
    let sample_a = load_a(&args.sample_a, &model_file.schema, &args.weight)?;
    let design_a = full_design_matrix(&sample_a, model_file.model.intercept)?;
    let yhat = predict_all(&model_file.model, &design_a)?;
    let set = ReplicateSet::without_replicates(yhat);
    let manifest = ReleaseManifest {
        provenance: Provenance::new("impute", None)
            .input("model", &args.model)?
            .input("sample_a", &args.sample_a)?,
        weight_column: args.weight.clone(),
        covariate_columns: sample_a.covariate_names().to_vec(),
        train_schema: model_file.schema,
        model: model_file.model,
        replicates: None,
    };
    write_augmented_dataset(&sample_a, &set, &manifest, &args.out)
}

fn design_spec(
    choice: DesignChoice,
    weights_total: f64,
    pop: Option<f64>,
    joint: Option<&PathBuf>,
) -> Result<DesignSpec> {
    let n = pop.unwrap_or(weights_total);
    Ok(match choice {
        DesignChoice::Srs => DesignSpec::srs(n.round() as usize),
        DesignChoice::Ppswr => DesignSpec::ppswr(),
        DesignChoice::Joint => {
            let path = joint.ok_or_else(|| usage("--design joint requires --joint-probs"))?;
            DesignSpec::joint(JointTable::read_csv(path)?, Some(n))
        }
    })
}

pub fn estimate(args: &EstimateArgs) -> Result<()> {
    let manifest: ReleaseManifest = read_manifest(&args.imputed)?;
    let pop = parse_pop_size(&args.pop_size)?;
    let mut provenance = Provenance::new("estimate", manifest.provenance.seed)
        .input("imputed", &args.imputed)?
        .input("manifest", &manifest_path(&args.imputed))?;
    let model = &manifest.model;

    let estimate = match args.variance {
        VarianceChoice::None | VarianceChoice::Bootstrap => {
            let data = read_augmented_dataset(&args.imputed, &manifest.weight_column)?;
            let n = pop.unwrap_or_else(|| data.estimated_population_size());
            let theta_hat = data.theta_hat(n);
            let variance = if args.variance == VarianceChoice::Bootstrap {
                if data.replicates() == 0 {
                    return Err(usage("the file has no replicate columns; run `bootstrap` first"));
                }
                Some(VarianceBlock::bootstrap(
                    theta_hat,
                    data.bootstrap_variance(n)?,
                    data.replicates(),
                ))
            } else {
                None
            };
            EstimateReport {
                estimator_kind: EstimatorKind::MassImputation,
                theta_hat,
                n_a: Some(data.weights.len()),
                n_b: Some(model.n_train),
                population_size_used: Some(n),
                variance,
            }
        }
        VarianceChoice::Linearized => {
            let train_path = args
                .train
                .as_ref()
                .ok_or_else(|| usage("--variance linearized requires --train"))?;
            let names: Vec<&str> = manifest.covariate_columns.iter().map(String::as_str).collect();
            let schema_a = Schema::numeric(&names).with_weight(manifest.weight_column.clone());
            let sample_a = load_sample(&args.imputed, &schema_a, SampleKind::ProbabilityA)?;
            let sample_b = load_sample(train_path, &manifest.train_schema, SampleKind::NonProbabilityB)?;
            let design_a = full_design_matrix(&sample_a, model.intercept)?;
            let design_b = full_design_matrix(&sample_b, model.intercept)?;
            let n = match pop {
                Some(n) => n,
                None => estimate_population_size(&sample_a)?,
            };
            let design = design_spec(args.design, n, Some(n), args.joint_probs.as_ref())?;
            design.validate(sample_a.len())?;
            let strategy = args.strategy.map(|s| match s {
                StrategyChoice::Exact => VarianceStrategy::ExactJoint,
                StrategyChoice::Ppswr => VarianceStrategy::PpswrApprox,
            });
            provenance = provenance.input("train", train_path)?;
            if let Some(j) = &args.joint_probs {
                provenance = provenance.input("joint_probs", j)?;
            }
            let comps = linearized_variance(
                model,
                &sample_a,
                &design_a,
                &sample_b,
                &design_b,
                &design,
                strategy,
                Some(n),
            )?;
            let report = mass_imputation_estimate(model, &sample_a, &design_a, Some(n))?;
            let block = VarianceBlock::linearized(report.theta_hat, &comps);
            report.with_variance(block)
        }
    };
    emit(&EstimateFile { provenance, estimate }, args.report.as_ref())
}

pub fn bootstrap(args: &BootstrapArgs) -> Result<()> {
    let mut provenance = Provenance::new("bootstrap", Some(args.seed))
        .input("train", &args.train)?
        .input("sample_a", &args.sample_a)?;
    let (schema, family, intercept) = match &args.model {
        Some(path) => {
            provenance = provenance.input("model", path)?;
            let mf = read_model_file(path)?;
            (mf.schema, mf.model.family, mf.model.intercept)
        }
        None => (schema_from_args(&args.spec)?, args.spec.family, !args.spec.no_intercept),
    };
    let t = train(&args.train, schema, family, intercept)?;
    let sample_a = load_a(&args.sample_a, &t.schema, &args.weight)?;
    let design_a = full_design_matrix(&sample_a, intercept)?;
    let pop = parse_pop_size(&args.pop_size)?;
    let design = match args.design {
        DesignChoice::Joint => {
            return Err(Error::UnsupportedDesign(
                "replicate weights are available for the srs and ppswr designs".into(),
            ))
        }
        choice => design_spec(choice, estimate_population_size(&sample_a)?, pop, None)?,
    };
    let set = build_replicates(
        &t.model,
        &sample_a,
        &design_a,
        &t.sample,
        &t.design,
        &design,
        &SolverConfig::default(),
        args.replicates,
        args.seed,
    )?;
    let manifest = ReleaseManifest {
        provenance,
        weight_column: args.weight.clone(),
        covariate_columns: sample_a.covariate_names().to_vec(),
        replicates: Some(AugmentedManifest::new(&t.model, &sample_a, &set, pop)),
        train_schema: t.schema,
        model: t.model,
    };
    write_augmented_dataset(&sample_a, &set, &manifest, &args.out)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let config = SimConfig {
        model: args.model,
        population_size: args.pop_size,
        n_a: args.n_a,
        n_b: args.n_b,
        reps: args.reps,
        bootstrap_l: args.boot_l,
        master_seed: args.seed,
    };
    let start = Instant::now();
    let out = run_monte_carlo_detailed(&config)?;
    eprintln!(
        "simulate: model {} n_b={} reps={} finished in {:.1} s",
        config.model,
        config.n_b,
        config.reps,
        start.elapsed().as_secs_f64()
    );
    if let Some(path) = &args.reps_csv {
        write_rep_records(&out.records, std::io::BufWriter::new(std::fs::File::create(path)?))?;
    }
    let file = SimulateFile {
        provenance: Provenance::new("simulate", Some(args.seed)),
        report: out.report,
    };
    emit(&file, args.report.as_ref())
}
