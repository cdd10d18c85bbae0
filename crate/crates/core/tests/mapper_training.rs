use panobev::bev::BevGridSpec;
use panobev::datagen::{generate_bev_gt, synth_scene, SynthConfig};
use panobev::mapper::{
    forward, predict_map, train, MapperConfig, MapperModel, TrainConfig, TrainingScene,
};
use panobev::nn::Parameterized;

fn spec() -> BevGridSpec {
    BevGridSpec {
        size: 50,
        ..BevGridSpec::default()
    }
}

fn scene(seed: u64) -> TrainingScene {
    let cfg = SynthConfig {
        spec: spec(),
        ..SynthConfig::default()
    };
    let s = synth_scene(seed, &cfg).unwrap();
    let gt = generate_bev_gt(&s.semantic, &s.depth, &s.pose, &cfg.spec).unwrap();
    TrainingScene {
        image: s.rgb,
        depth: s.depth,
        pose: s.pose,
        gt,
    }
}

fn model_config() -> MapperConfig {
    MapperConfig {
        spec: spec(),
        ..MapperConfig::default()
    }
}

#[test]
fn empty_scene_list_rejected() {
    let mut m = MapperModel::new(model_config()).unwrap();
    assert!(train(&mut m, &[], &TrainConfig::default()).is_err());
}

#[test]
fn mismatched_spec_rejected() {
    let mut m = MapperModel::new(MapperConfig {
        spec: BevGridSpec {
            size: 40,
            ..BevGridSpec::default()
        },
        ..model_config()
    })
    .unwrap();
    assert!(train(&mut m, &[scene(0)], &TrainConfig::default()).is_err());
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let mut m = MapperModel::new(model_config()).unwrap();
    let before = m.clone();
    let mut cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    cfg.optimizer.learning_rate = 0.0;
    let r = train(&mut m, &[scene(0)], &cfg).unwrap();
    assert_eq!(m, before);
    assert!(r.loss_curve.windows(2).all(|w| w[0] == w[1]), "{:?}", r.loss_curve);
}

#[test]
fn single_scene_overfits() {
    let mut m = MapperModel::new(model_config()).unwrap();
    let r = train(&mut m, &[scene(0)], &TrainConfig::default()).unwrap();
    assert_eq!(r.loss_curve.len(), 200);
    let (first, last) = (r.loss_curve[0], *r.loss_curve.last().unwrap());
    assert!(last < 0.1 * first, "{first} -> {last}");
}

#[test]
fn same_seed_same_curve() {
    let scenes = [scene(1), scene(2)];
    let cfg = TrainConfig {
        epochs: 6,
        batch_size: 2,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = MapperModel::new(model_config()).unwrap();
        let r = train(&mut m, &scenes, &cfg).unwrap();
        (r.loss_curve, m)
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(ma, mb);
}

#[test]
fn one_step_updates_every_stage() {
    let mut m = MapperModel::new(model_config()).unwrap();
    let before = m.clone();
    train(
        &mut m,
        &[scene(0)],
        &TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let changed = |a: &dyn Parameterized, b: &dyn Parameterized| a.flatten() != b.flatten();
    assert!(changed(&m.params.encoder, &before.params.encoder));
    assert!(changed(&m.params.embed, &before.params.embed));
    for (a, b) in m.params.layers.iter().zip(&before.params.layers) {
        assert!(changed(a, b));
    }
    assert!(changed(&m.params.classifier, &before.params.classifier));
}

#[test]
fn logits_reproducible_and_checkpoint_preserves_predictions() {
    let s = scene(4);
    let m = MapperModel::new(model_config()).unwrap();
    let a = forward(&s.image, &s.depth, &s.pose, &m).unwrap();
    let b = forward(&s.image, &s.depth, &s.pose, &MapperModel::new(model_config()).unwrap()).unwrap();
    assert!(a.logits.data.iter().zip(&b.logits.data).all(|(x, y)| x.to_bits() == y.to_bits()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    m.save(&path).unwrap();
    let loaded = MapperModel::load(&path).unwrap();
    assert_eq!(loaded, m);
    let p1 = predict_map(&m, &s.image, &s.depth, &s.pose).unwrap();
    let p2 = predict_map(&loaded, &s.image, &s.depth, &s.pose).unwrap();
    assert_eq!(p1.labels, p2.labels);
    for (k, o) in p1.observed.iter().enumerate() {
        assert_eq!(*o, p1.labels[k] != 255);
    }
}

