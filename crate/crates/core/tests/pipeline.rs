use wmse_core::data::{read_corpus, synthesize_corpus, write_corpus, Task};
use wmse_core::eval::{analyze_filters, stoi};
use wmse_core::models::{build_named_model, Model};
use wmse_core::numerics::Mode;
use wmse_core::training::{train, Example, TrainConfig};

fn examples(task: Task, n: usize, seed: u64) -> Vec<Example> {
    synthesize_corpus(task, n, seed, 8000)
        .unwrap()
        .into_iter()
        .map(|u| Example::new(u.segment.input(), u.segment.target()))
        .collect()
}

#[test]
fn corpus_survives_disk_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let utts = synthesize_corpus(Task::Dm, 2, 4, 3000).unwrap();
    let manifest = write_corpus(d.path(), &utts).unwrap();
    let back = read_corpus(&manifest).unwrap();
    assert_eq!(back.len(), 2);
    for (u, (entry, seg)) in utts.iter().zip(&back) {
        assert_eq!(entry.id, u.id);
        assert_eq!(seg.channel_count(), 5);
        for (a, b) in u.segment.channels.iter().zip(&seg.channels) {
            let worst = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-6, "{worst}");
        }
    }
}

#[test]
fn sinc_model_trains_and_keeps_band_pass_filters() {
    let train_set = examples(Task::Iem, 4, 1);
    let val = examples(Task::Iem, 2, 2);
    let spec = build_named_model("SincFCN-251", 2).unwrap().with_width(4).with_seed(3);
    let mut model = Model::new(spec).unwrap();
    let cfg = TrainConfig {
        max_epochs: 3,
        batch_size: 2,
        learning_rate: 0.002,
        ..TrainConfig::default()
    };
    let log = train(&mut model, &train_set, &val, &cfg).unwrap();
    assert_eq!(log.epochs.len(), 4);
    assert!(log.best_val_mse() <= log.epochs[0].val_mse);

    let analysis = analyze_filters(&model).unwrap();
    assert_eq!(analysis.filters.len(), 8);
    for f in &analysis.filters {
        let (lo, hi) = f.cutoffs_hz.unwrap();
        assert!(0.0 <= lo && lo < hi && hi <= 8000.0, "{lo} {hi}");
    }

    let out = model.forward(&val[0].input, None, Mode::Inference).unwrap();
    assert_eq!((out.channels(), out.length()), (1, 8000));
    let s = stoi(val[0].target.values(), out.values()).unwrap();
    assert!(s.is_finite() && s <= 1.0);
}
