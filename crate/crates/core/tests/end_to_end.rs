use tbcough_core::dataset::{generate_synthetic, FeatureMode, FeatureTable, SyntheticConfig};
use tbcough_core::experiment::{
    run_on, DataSource, ExperimentConfig, FamilySelection, ModeSelection,
};
use tbcough_core::learners::{ClassWeight, LrGrid, ModelFile, Solver};
use tbcough_core::splits::nested::mode_matrix;

fn config() -> ExperimentConfig {
    let data = SyntheticConfig {
        n_coughers: 60,
        coughs_mean: 4.0,
        coughs_std: 1.0,
        coughs_min: 3,
        coughs_max: 6,
        seed: 11,
        ..SyntheticConfig::default()
    };
    ExperimentConfig {
        data: DataSource::Synthetic(data),
        feature_mode: ModeSelection::Fused,
        model: FamilySelection::Lr,
        outer_folds: 3,
        inner_folds: 2,
        seed: 11,
        lr_grid: LrGrid {
            c: vec![1e-2, 1e-1],
            class_weight: vec![ClassWeight::Balanced],
            solver: vec![Solver::Lbfgs],
        },
        ..ExperimentConfig::default()
    }
}

#[test]
fn report_covers_every_cougher_once_and_models_round_trip() {
    let cfg = config();
    let DataSource::Synthetic(sc) = &cfg.data else {
        unreachable!()
    };
    let ds = generate_synthetic(sc).unwrap();
    let table = FeatureTable::build(&ds).unwrap();
    let report = run_on(&cfg, &ds, &table).unwrap();

    assert_eq!(report.blocks.len(), 1);
    let block = &report.blocks[0];
    let mut tested: Vec<String> = block
        .folds
        .iter()
        .flat_map(|f| f.cougher.ids.clone())
        .collect();
    tested.sort();
    let mut all: Vec<String> = ds.coughers().iter().map(|c| c.id.clone()).collect();
    all.sort();
    assert_eq!(tested, all);

    let x = mode_matrix(&table, FeatureMode::Fused);
    let dir = tempfile::tempdir().unwrap();
    for f in &block.folds {
        let model = f.model.clone().expect("final model kept in memory");
        let path = dir.path().join(format!("fold{}.json", f.fold));
        ModelFile::new(model.clone(), Vec::new())
            .save(&path)
            .unwrap();
        let back = ModelFile::load(&path).unwrap().model;
        let xs = f.scaler.apply(&x).unwrap();
        assert_eq!(
            model.predict_proba(&xs).unwrap(),
            back.predict_proba(&xs).unwrap()
        );
    }

    let json = serde_json::to_string(&report).unwrap();
    let again: tbcough_core::experiment::RunReport = serde_json::from_str(&json).unwrap();
    assert_eq!(again.fold_rows, report.fold_rows);
    assert_eq!(again.tables, report.tables);
}
