use linflow_core::cases;
use linflow_core::evaluation::{evaluate_all, Direction, EvalConfig};
use linflow_core::mapping::{
    fit_forward, fit_inverse, partition_inverse, predict_dataset, MappingModel,
};
use linflow_core::network::build_admittance;
use linflow_core::regression::{EngineConfig, OlsConfig, PlsConfig};
use linflow_core::scenario::{generate_mc, split, McConfig, SnapshotDataset};

fn ieee5_data(n: usize, seed: u64) -> SnapshotDataset {
    let case = cases::load("ieee5").unwrap();
    let adm = build_admittance(&case);
    let mut ds = generate_mc(
        &case,
        &adm,
        &McConfig {
            n_samples: n,
            seed,
            ..McConfig::default()
        },
    )
    .unwrap();
    ds.case_ref = "ieee5".into();
    ds
}

#[test]
fn dataset_survives_a_disk_round_trip() {
    let ds = ieee5_data(300, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    ds.save(&path).unwrap();
    let back = SnapshotDataset::load(&path).unwrap();
    assert_eq!(back.vars, ds.vars);
    assert_eq!(back.data, ds.data);
    assert_eq!(back.case_ref, ds.case_ref);
    assert_eq!(back.seed, ds.seed);
}

#[test]
fn generated_data_beats_the_baselines_end_to_end() {
    let case = cases::load("ieee5").unwrap();
    let adm = build_admittance(&case);
    let (train, test) = split(&ieee5_data(200, 11), 120, 80, 11).unwrap();
    let engines = [
        EngineConfig::Ols(OlsConfig::default()),
        EngineConfig::Pls(PlsConfig::default()),
    ];
    let report =
        evaluate_all(&case, &adm, &train, &test, &engines, &EvalConfig::default()).unwrap();
    assert_eq!(report.n_train, 120);
    assert_eq!(report.n_test, 80);
    for method in ["OLS", "PLS"] {
        let fitted = report.value(method, Direction::Forward, "P").unwrap();
        let dlpf = report.value("DLPF", Direction::Forward, "P").unwrap();
        assert!(fitted < dlpf, "{method}: {fitted} vs DLPF {dlpf}");
    }
}

#[test]
fn fitted_models_reload_with_identical_predictions() {
    let case = cases::load("ieee5").unwrap();
    let ds = ieee5_data(300, 1);
    let engine = EngineConfig::Ols(OlsConfig::default());
    let forward = MappingModel::Forward(fit_forward(&ds, &case, &engine).unwrap());
    let inverse = MappingModel::Inverse(fit_inverse(&ds, &case, &engine).unwrap());
    for model in [forward, inverse] {
        let text = serde_json::to_string(&model.to_json_value().unwrap()).unwrap();
        let back = MappingModel::from_json_str(&text).unwrap();
        assert_eq!(back.kind(), model.kind());
        let a = predict_dataset(model.linear(), &ds).unwrap();
        let b = predict_dataset(back.linear(), &ds).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn partitioned_inverse_reproduces_training_states() {
    let case = cases::load("ieee5").unwrap();
    let ds = ieee5_data(300, 1);
    let inv = fit_inverse(&ds, &case, &EngineConfig::Ols(OlsConfig::default())).unwrap();
    let part = partition_inverse(&inv).unwrap();
    let (y1, _) = part.solve_dataset(&ds).unwrap();
    let truth = ds.columns(&part.y1_labels).unwrap();
    let diff = y1 - truth;
    for (k, label) in part.y1_labels.iter().enumerate() {
        let worst = diff.row(k).amax();
        // the slack's active power carries the linearization error in p.u.
        let tol = if label.starts_with("theta_") {
            1e-3
        } else if label.starts_with("V_") {
            1e-4
        } else {
            5e-2
        };
        assert!(worst < tol, "{label}: {worst}");
    }
}
