// temporary diagnostic
use qexpr::gnn::{predict, rmse, train, ModelConfig, TrainConfig};
use qexpr::graphenc::{normalize_records, read_dataset, split_dataset, compute_feature_stats};

#[test]
#[ignore]
fn final_epoch_vs_best_val() {
    let (_, mut records) = read_dataset("/tmp/corpus3.jsonl").unwrap();
    let split = split_dataset(&records, (0.7, 0.1, 0.2), 0).unwrap();
    let stats = compute_feature_stats(&records, &split.train).unwrap();
    normalize_records(&mut records, &stats);
    let model_cfg = ModelConfig::default();
    for (tag, val_idx) in [("val-selected", split.val.clone()), ("train-selected", split.train.clone())] {
        let cfg = TrainConfig { epochs: 300, batch_size: 64, seed: 1, ..TrainConfig::default() };
        let r = train(&records, &split.train, &val_idx, &model_cfg, &cfg, &stats, None, None).unwrap();
        let test: Vec<&qexpr::graphenc::CircuitGraph> = split.test.iter().map(|&i| &records[i]).collect();
        let preds = predict(&r.best_params, &test).unwrap();
        let labels: Vec<f64> = test.iter().map(|r| r.expr.unwrap()).collect();
        println!("{tag}: best_epoch={} test_rmse={:.4}", r.best_epoch, rmse(&preds, &labels));
    }
}
