use miturbo::data::{BlobSpec, Dataset};
use miturbo::error::Error;
use miturbo::losses::LossWeights;
use miturbo::nn::{EncoderConfig, Tensor};
use miturbo::trainer::{
    evaluate_accuracy, run, run_ablation, AblationConfig, Cell, LossVariant, Model, Setup,
};
use miturbo::densities::RescaleKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data() -> (Dataset, Dataset) {
    BlobSpec {
        n_classes: 4,
        n_per_class: 40,
        test_per_class: 10,
        dim: 6,
        separation: 5.0,
        seed: 3,
    }
    .generate()
    .unwrap()
}

fn setup() -> Setup {
    let mut s = Setup::default();
    s.encoder = EncoderConfig {
        feature_dim: 8,
        n_patch_tokens: 2,
        token_dim: 4,
        projector_hidden: 8,
        ..EncoderConfig::default()
    };
    s.predictor.hidden = 8;
    s.predictor.n_classes = 4;
    s.discriminator.hidden = 6;
    s.train.epochs = 2;
    s.train.batch_size = 32;
    s.train.subset_size = 12;
    s.train.base_lr = 1e-2;
    s.train.warmup_steps = 2;
    s.augment.noise_sigma = 0.2;
    s
}

fn full() -> LossWeights {
    LossWeights::new(0.1, 0.1, 0.1)
}

#[test]
fn zero_weights_train_on_the_supervised_term_alone() {
    let (train, test) = data();
    let out = run(&setup(), &train, &test, 5).unwrap();
    for s in &out.metrics.steps {
        assert_eq!(s.total, s.supervised);
        assert!(s.critic_disc.is_none() && s.critic_model.is_none());
        assert!(s.latent.is_none() && s.augment.is_none());
    }
    assert_eq!(out.metrics.epochs.len(), 2);
}

#[test]
fn discriminator_untouched_without_critic() {
    let (train, test) = data();
    let mut s = setup();
    s.train.weights = LossWeights::new(0.0, 0.1, 0.1);
    let out = run(&s, &train, &test, 9).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    rng.set_stream(0);
    let fresh = Model::new(&s, train.dim(), train.n_classes(), &mut rng).unwrap();
    assert_eq!(out.model.disc_store.flat_values(), fresh.disc_store.flat_values());
    assert_ne!(out.model.store.flat_values(), fresh.store.flat_values());

    s.train.weights = full();
    let out = run(&s, &train, &test, 9).unwrap();
    assert_ne!(out.model.disc_store.flat_values(), fresh.disc_store.flat_values());
    assert!(out.metrics.steps.iter().all(|r| r.critic_disc.is_some()));
}

#[test]
fn same_seed_gives_identical_metrics() {
    let (train, test) = data();
    let mut s = setup();
    s.train.weights = full();
    let a = run(&s, &train, &test, 42).unwrap();
    let b = run(&s, &train, &test, 42).unwrap();
    assert_eq!(a.metrics.to_jsonl(), b.metrics.to_jsonl());
    assert_eq!(a.metrics.summary_json(&s), b.metrics.summary_json(&s));
    assert_eq!(a.model.store.flat_values(), b.model.store.flat_values());

    let c = run(&s, &train, &test, 43).unwrap();
    assert_ne!(a.metrics.to_jsonl(), c.metrics.to_jsonl());

    let dir = tempfile::tempdir().unwrap();
    a.metrics.write(dir.path().join("a"), &s).unwrap();
    b.metrics.write(dir.path().join("b"), &s).unwrap();
    for f in ["metrics.jsonl", "summary.json"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn constant_prediction_scores_the_class_share() {
    let (train, _) = data();
    let spec = BlobSpec {
        n_classes: 10,
        n_per_class: 5,
        test_per_class: 10,
        dim: 6,
        separation: 3.0,
        seed: 1,
    };
    let (_, test) = spec.generate().unwrap();
    let mut s = setup();
    s.predictor.n_classes = 10;
    let mut model = Model::new(&s, train.dim(), 10, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let w = model.store.find("predictor.out.weight").unwrap();
    let b = model.store.find("predictor.out.bias").unwrap();
    let (r, c) = model.store.value(w).shape();
    model.store.get_mut(w).value = Tensor::zeros(r, c);
    let mut bias = Tensor::zeros(1, 10);
    bias.set(0, 3, 1.0);
    model.store.get_mut(b).value = bias;
    assert!(model.predict(test.features()).unwrap().iter().all(|&k| k == 3));
    assert!((evaluate_accuracy(&model, &test).unwrap() - 0.1).abs() < 1e-12);
}

#[test]
fn empty_test_set_is_an_error() {
    let (train, test) = data();
    let empty = test.truncated(0);
    assert!(matches!(run(&setup(), &train, &empty, 1), Err(Error::Data(_))));
}

#[test]
fn non_finite_loss_names_its_component() {
    let (train, test) = data();
    let mut bad = train.features().clone();
    for v in bad.data_mut() {
        *v = f64::NAN;
    }
    let train = Dataset::new(bad, train.labels().to_vec(), 4, None).unwrap();
    match run(&setup(), &train, &test, 1) {
        Err(Error::NonFiniteLoss { component, step, .. }) => {
            assert_eq!(component, "supervised");
            assert_eq!(step, 0);
        }
        other => panic!("expected a non-finite loss, got {:?}", other.map(|o| o.metrics.final_accuracy)),
    }
}

#[test]
fn ablation_rows_and_failed_cells() {
    let (train, test) = data();
    let mut s = setup();
    s.train.epochs = 1;
    s.train.seeds = vec![1, 2];
    let ablation = AblationConfig {
        // more labelled rows than the training set holds
        subset_sizes: vec![8, 10_000],
        weights: full(),
        critic_controls: false,
        cells: vec![
            Cell::new("baseline", LossVariant::CatCross, RescaleKind::Softmax, LossWeights::zero()),
            Cell::new("full", LossVariant::BinCross, RescaleKind::Softmax, full()),
        ],
    };
    let report = run_ablation(&s, &ablation, &train, &test).unwrap();
    assert_eq!(report.rows.len(), 2 * 2);
    assert!(report.any_success());
    for row in &report.rows {
        assert_eq!(row.seeds.len(), 2);
        if row.subset_size == 10_000 {
            assert!(row.failed);
            assert!(row.best.is_none() && row.range().is_none());
            assert!(row.seeds.iter().all(|r| r.error.is_some()));
        } else {
            assert!(!row.failed);
            let (lo, hi) = (row.min.unwrap(), row.max.unwrap());
            assert!(lo <= row.median.unwrap() && row.median.unwrap() <= hi);
            assert_eq!(row.best, row.max);
        }
    }
    let tsv = report.to_tsv();
    assert_eq!(tsv.lines().count(), 1 + 4);

    // a one-cell grid repeats `run` for every seed
    let one = AblationConfig {
        subset_sizes: vec![8],
        cells: ablation.cells[1..].to_vec(),
        ..ablation
    };
    let report = run_ablation(&s, &one, &train, &test).unwrap();
    let mut t = s.clone();
    t.train.loss_variant = LossVariant::BinCross;
    t.train.weights = full();
    t.train.subset_size = 8;
    for r in &report.rows[0].seeds {
        assert_eq!(r.accuracy, Some(run(&t, &train, &test, r.seed).unwrap().metrics.final_accuracy));
    }
}

#[test]
fn standard_grid_shape() {
    let ablation = AblationConfig::default();
    let names: Vec<String> = ablation.grid().into_iter().map(|c| c.name).collect();
    assert_eq!(
        names,
        ["baseline", "cat-twin", "+sigmoid", "bin-cross", "+critic", "+latent", "+augment", "+latent-critic", "+augment-critic"]
    );
}
