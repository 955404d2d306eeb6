use massimp::bootstrap::{
    bootstrap_variance, build_replicates, read_augmented_dataset, read_manifest, write_augmented_dataset,
    AugmentedManifest,
};
use massimp::data::{build_design_matrix, DesignSpec, SurveySample};
use massimp::model::{fit_model, FittedModel, ModelFamily, SolverConfig};
use massimp::simulation::{draw_srs, draw_stratified_b, generate_population, PopulationModel, PopulationSpec};
use massimp::{mass_imputation_estimate, DesignMatrix};

struct Fixture {
    a: SurveySample,
    b: SurveySample,
    da: DesignMatrix,
    db: DesignMatrix,
    model: FittedModel,
    big_n: f64,
}

fn fixture(n_a: usize, n_b: usize) -> Fixture {
    let pop = generate_population(&PopulationSpec {
        model: PopulationModel::I,
        population_size: 10_000,
        seed: 5,
    });
    let a = draw_srs(&pop, n_a, 6).unwrap();
    let b = draw_stratified_b(&pop, n_b, 7).unwrap();
    let da = build_design_matrix(&a, &["x"], true).unwrap();
    let db = build_design_matrix(&b, &["x"], true).unwrap();
    let model = fit_model(ModelFamily::Linear, &b, &db, &SolverConfig::default()).unwrap();
    Fixture {
        a,
        b,
        da,
        db,
        model,
        big_n: 10_000.0,
    }
}

#[test]
fn file_shape() {
    let f = fixture(3, 50);
    let set = build_replicates(
        &f.model,
        &f.a,
        &f.da,
        &f.b,
        &f.db,
        &DesignSpec::srs(10_000),
        &SolverConfig::default(),
        2,
        1,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("aug.csv");
    let manifest = AugmentedManifest::new(&f.model, &f.a, &set, Some(f.big_n));
    write_augmented_dataset(&f.a, &set, &manifest, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    let header: Vec<&str> = lines[0].split(',').collect();
    let orig = f.a.column_names().len();
    assert_eq!(header.len(), orig + 1 + 4);
    assert_eq!(
        &header[orig..],
        ["yhat", "w_rep_1", "yhat_rep_1", "w_rep_2", "yhat_rep_2"]
    );
    let back: AugmentedManifest = read_manifest(&path).unwrap();
    assert_eq!(back, manifest);
}

#[test]
fn released_file_reproduces_in_memory_estimates() {
    let f = fixture(200, 300);
    let l = 300;
    let design = DesignSpec::srs(10_000);
    let set = build_replicates(
        &f.model,
        &f.a,
        &f.da,
        &f.b,
        &f.db,
        &design,
        &SolverConfig::default(),
        l,
        99,
    )
    .unwrap();
    let theta = mass_imputation_estimate(&f.model, &f.a, &f.da, Some(f.big_n))
        .unwrap()
        .theta_hat;
    let v_boot = bootstrap_variance(theta, &set.replicate_estimates(f.big_n)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("aug.csv");
    let manifest = AugmentedManifest::new(&f.model, &f.a, &set, Some(f.big_n));
    write_augmented_dataset(&f.a, &set, &manifest, &path).unwrap();

    let data = read_augmented_dataset(&path, "w").unwrap();
    assert_eq!(data.replicates(), l);
    assert!((data.theta_hat(f.big_n) - theta).abs() <= 1e-12);
    assert!((data.bootstrap_variance(f.big_n).unwrap() - v_boot).abs() <= 1e-12);
    for (a, b) in data
        .replicate_estimates(f.big_n)
        .iter()
        .zip(set.replicate_estimates(f.big_n))
    {
        assert_eq!(*a, b);
    }

    // Replaying from the manifest seed regenerates the same bytes.
    let replay: AugmentedManifest = read_manifest(&path).unwrap();
    let again = build_replicates(
        &f.model,
        &f.a,
        &f.da,
        &f.b,
        &f.db,
        &design,
        &SolverConfig::default(),
        replay.replicates,
        replay.seed,
    )
    .unwrap();
    let path2 = dir.path().join("aug2.csv");
    write_augmented_dataset(&f.a, &again, &replay, &path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

// A noiseless linear B: every refit recovers the same line, so only the
// weights vary across replicates.
#[test]
fn perfect_fit_leaves_weight_variability_only() {
    let f = fixture(100, 60);
    let x = f.b.covariates().clone();
    let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v).collect();
    let b = SurveySample::nonprobability(vec!["x".into()], x, "y", y).unwrap();
    let db = build_design_matrix(&b, &["x"], true).unwrap();
    let model = fit_model(ModelFamily::Linear, &b, &db, &SolverConfig::default()).unwrap();
    let set = build_replicates(
        &model,
        &f.a,
        &f.da,
        &b,
        &db,
        &DesignSpec::srs(10_000),
        &SolverConfig::default(),
        50,
        3,
    )
    .unwrap();
    for k in 0..50 {
        for i in 0..f.a.len() {
            assert!((set.replicate_imputations[(i, k)] - set.base_imputations[i]).abs() < 1e-9);
        }
    }
    let weight_only: Vec<f64> = set
        .replicate_weights
        .column_iter()
        .map(|w| w.iter().zip(&set.base_imputations).map(|(a, b)| a * b).sum::<f64>() / f.big_n)
        .collect();
    for (a, b) in set.replicate_estimates(f.big_n).iter().zip(&weight_only) {
        assert!((a - b).abs() < 1e-9);
    }
}
