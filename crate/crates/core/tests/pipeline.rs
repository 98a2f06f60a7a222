use iqdeg::dataset::{cache_features, evaluate, read_cache, split, SplitSpec};
use iqdeg::svm::{grid_search, load_model, save_model, train_multiclass, GridSpec, SmoOptions};
use iqdeg::synth::{build_corpus, bundled_bases};
use iqdeg::FilterConfig;

#[test]
fn corpus_to_report_with_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bases = bundled_bases().unwrap();
    let m = build_corpus(&bases, 16, 9, dir.path().join("corpus"), (60, 80)).unwrap();
    assert_eq!(m.len(), 96);

    let cache_path = dir.path().join("cache.csv");
    let summary = cache_features(&m, &FilterConfig::default(), &cache_path).unwrap();
    assert_eq!(summary.records, 96);
    let cache = read_cache(&cache_path).unwrap();

    let (train, test) = split(&cache.manifest().unwrap(), &SplitSpec::default()).unwrap();
    assert_eq!((train.len(), test.len()), (72, 24));
    let recs = cache.select(&train).unwrap();
    let x: Vec<&[f64]> = recs.iter().map(|r| r.features.as_slice()).collect();
    let y: Vec<usize> = recs.iter().map(|r| train.label_index(&r.label).unwrap()).collect();
    let labels = train.labels().to_vec();

    let grid = GridSpec::new(&[1.0, 10.0], &[0.05, 0.5], 3, 1);
    let opts = SmoOptions::default();
    let gs = grid_search(&x, &y, &labels, &grid, &opts).unwrap();
    assert!(gs.table.iter().all(|c| c.accuracy <= gs.best_accuracy));
    let model = train_multiclass(&x, &y, &labels, gs.best, &opts).unwrap();
    assert_eq!(model.machines.len(), 15);

    let model_path = dir.path().join("model.txt");
    save_model(&model, &model_path).unwrap();
    let loaded = load_model(&model_path).unwrap();
    let test_recs = cache.select(&test).unwrap();
    for r in &test_recs {
        let a = model.predict(r.features.as_slice()).unwrap();
        let b = loaded.predict(r.features.as_slice()).unwrap();
        assert_eq!(a.class, b.class);
        for (p, q) in a.pair_decisions.iter().zip(&b.pair_decisions) {
            assert_eq!(p.2.to_bits(), q.2.to_bits());
        }
    }

    let (report, pred) = evaluate(&loaded, &test_recs).unwrap();
    assert_eq!(report.total, 24);
    assert_eq!(pred.len(), 24);
    assert!(report.accuracy > 0.5, "accuracy {}", report.accuracy);
}
