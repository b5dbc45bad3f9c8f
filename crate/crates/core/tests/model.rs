use proptest::prelude::*;

use vortexcast::cfd::{FlowSnapshot, SolverConfig};
use vortexcast::dataset::*;
use vortexcast::model::*;
use vortexcast::nn::Parameters;
use vortexcast::rng::random_uniform;
use vortexcast::{DType, Error, Rng, Tensor};

fn tiny(variant: Variant, t_in: usize, t_out: usize, channels: usize) -> ModelConfig {
    let mut cfg = ModelConfig::reference(variant);
    cfg.t_in = t_in;
    cfg.t_out = t_out;
    cfg.channels = channels;
    cfg.precision = DType::F64;
    match variant {
        Variant::Improved => {
            cfg.front_width = 4;
            cfg.se_ratio = Some(2);
            cfg.hidden = vec![3];
        }
        Variant::Standard => cfg.hidden = vec![3, 2],
    }
    cfg
}

fn random(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    random_uniform(rng, shape, -1.0, 1.0).unwrap()
}

/// Perturbs weights away from the zero-initialised peepholes and biases.
fn jitter(net: &mut Network<f64>, rng: &mut Rng) {
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v += 0.2 * (rng.next_f64() - 0.5);
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn relu_pattern(net: &Network<f64>, x: &Tensor<f64>) -> Vec<bool> {
    let cache = net.forward_train(x).unwrap();
    cache
        .relu_inputs()
        .iter()
        .flat_map(|t| t.data().iter().map(|&v| v > 0.0))
        .collect()
}

/// Max relative error between backprop and central differences of `<r, f(x)>`,
/// and the fraction of coordinates skipped because `θ ± ε` straddles a ReLU
/// kink (where a central difference is not a derivative estimate).
fn full_model_gradient_error(cfg: &ModelConfig, seed: u64) -> (f64, f64) {
    let mut rng = Rng::new(1000 + seed);
    let mut net: Network<f64> = Network::init(&ModelConfig { seed, ..cfg.clone() }).unwrap();
    jitter(&mut net, &mut rng);
    let x = random(&mut rng, &[cfg.t_in, cfg.channels, 8, 8]);
    let r = random(&mut rng, &[cfg.t_out, cfg.channels, 8, 8]);
    let loss = |n: &Network<f64>| -> f64 {
        let out = n.forward(&x).unwrap();
        out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    let cache = net.forward_train(&x).unwrap();
    let mut grads = net.zeros_like();
    net.backward_accumulate(&cache, &r, &mut grads).unwrap();
    let analytic: Vec<f64> = grads.params().iter().flat_map(|(_, t)| t.data().to_vec()).collect();

    let eps = 1e-5;
    let (mut worst, mut skipped): (f64, usize) = (0.0, 0);
    let mut flat = 0;
    let sizes: Vec<usize> = net.params().iter().map(|(_, t)| t.len()).collect();
    for (p, &len) in sizes.iter().enumerate() {
        let mut checked = 0;
        for i in 0..len {
            let mut plus = net.clone();
            plus.params_mut()[p].data_mut()[i] += eps;
            let mut minus = net.clone();
            minus.params_mut()[p].data_mut()[i] -= eps;
            if relu_pattern(&plus, &x) != relu_pattern(&minus, &x) {
                skipped += 1;
            } else {
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                worst = worst.max(rel(analytic[flat], numeric));
                checked += 1;
            }
            flat += 1;
        }
        assert!(checked > 0, "every coordinate of {} sits at a kink", net.params()[p].0);
    }
    (worst, skipped as f64 / flat as f64)
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for variant in [Variant::Improved, Variant::Standard] {
        for seed in 0..5 {
            let (err, skipped) = full_model_gradient_error(&tiny(variant, 4, 1, 1), seed);
            assert!(err < 1e-5, "{variant} seed {seed}: {err:e}");
            assert!(skipped < 0.2, "{variant} seed {seed}: {skipped} of coordinates at a kink");
        }
        let (err, _) = full_model_gradient_error(&tiny(variant, 3, 2, 2), 9);
        assert!(err < 1e-5, "{variant} with two output frames: {err:e}");
    }
}

#[test]
fn output_shape_and_range() {
    let mut rng = Rng::new(3);
    for variant in [Variant::Improved, Variant::Standard] {
        for (t_in, t_out, c) in [(4, 1, 1), (3, 3, 2), (1, 1, 2)] {
            let net: Network<f64> = Network::init(&tiny(variant, t_in, t_out, c)).unwrap();
            let h = 2 + rng.below(6);
            let w = 2 + rng.below(6);
            let out = net.forward(&random(&mut rng, &[t_in, c, h, w])).unwrap();
            assert_eq!(out.shape(), [t_out, c, h, w]);
            assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
        let net: Network<f64> = Network::init(&tiny(variant, 4, 1, 1)).unwrap();
        assert!(net.forward(&Tensor::zeros(&[3, 1, 8, 8])).is_err());
        assert!(net.forward(&Tensor::zeros(&[4, 2, 8, 8])).is_err());
        assert!(net.forward(&Tensor::zeros(&[4, 8, 8])).is_err());
    }
}

#[test]
fn reference_parameter_counts() {
    let (s, i) = (ModelConfig::standard(), ModelConfig::improved());
    let sn: Network<f32> = Network::init(&s).unwrap();
    let inet: Network<f32> = Network::init(&i).unwrap();
    assert_eq!(sn.count_params(), s.param_count());
    assert_eq!(inet.count_params(), i.param_count());
    assert!(inet.count_params() < sn.count_params());
    assert!(inet.se.is_some() && !inet.blocks.is_empty());
    assert!(sn.se.is_none() && sn.blocks.is_empty() && sn.lift.is_none());
}

#[test]
fn metric_identities_and_worked_examples() {
    let mut rng = Rng::new(11);
    let x = random(&mut rng, &[3, 2, 5, 7]);
    let m = metrics(&x, &x).unwrap();
    assert_eq!((m.mae, m.mse, m.ssim), (0.0, 0.0, 1.0));

    let y = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
    let p = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
    let m = metrics(&y, &p).unwrap();
    assert!((m.mae - 3.5).abs() < 1e-12);
    assert!((m.mse - 12.5).abs() < 1e-12);

    let zeros = Tensor::<f64>::zeros(&[4, 6]);
    let ones = Tensor::<f64>::ones(&[4, 6]);
    let c1 = 0.01f64.powi(2);
    let c2 = 0.03f64.powi(2);
    let expected = c1 * c2 / ((1.0 + c1) * c2);
    assert!((metrics(&zeros, &ones).unwrap().ssim - expected).abs() < 1e-12);
    assert!((expected - c1 / (1.0 + c1)).abs() < 1e-15);

    assert!(metrics(&zeros, &Tensor::zeros(&[6, 4])).is_err());
}

proptest! {
    #[test]
    fn metric_properties(seed in 0u64..10_000, h in 1usize..6, w in 1usize..6, frames in 1usize..4) {
        let mut rng = Rng::new(seed);
        let a = random(&mut rng, &[frames, h, w]);
        let b = random(&mut rng, &[frames, h, w]);
        let ab = metrics(&a, &b).unwrap();
        let ba = metrics(&b, &a).unwrap();
        prop_assert!((ab.ssim - ba.ssim).abs() <= 1e-12);
        prop_assert!(ab.mse >= ab.mae * ab.mae - 1e-15);
        prop_assert!(ab.mae >= 0.0 && ab.mse >= 0.0);
        prop_assert!((-1.0..=1.0).contains(&ab.ssim));
    }
}

const NX: usize = 24;
const NY: usize = 12;

/// A travelling wave sampled on a small grid; every window is learnable.
fn wave_dataset(frames: usize, t_in: usize) -> Dataset {
    let cfg = SolverConfig {
        nx: NX,
        ny: NY,
        cylinders: vec![],
        n_steps: frames * 20,
        ..SolverConfig::default()
    };
    let field = |k: usize, c: usize, r: usize, col: usize| {
        let phase = 0.5 * k as f64 + c as f64;
        (0.4 * col as f64 - phase).sin() * (0.25 * r as f64).cos() + 0.1 * c as f64
    };
    let snapshots = (0..frames)
        .map(|k| {
            let plane = |c: usize| Tensor::from_fn(&[NY, NX], |i| field(k, c, i / NX, i % NX));
            FlowSnapshot {
                t: (k + 1) as f64 * 0.02,
                u: plane(0),
                v: plane(1),
                p: plane(2),
            }
        })
        .collect();
    let run = MemoryRun { cfg, snapshots };
    let spec = DatasetSpec {
        crop: Some(CropRegion {
            row0: 2,
            col0: 4,
            height: 8,
            width: 16,
        }),
        out_height: 4,
        out_width: 8,
        t_in,
        transient_fraction: Some(0.0),
        ..DatasetSpec::default()
    };
    build_from_sources(&spec, &[&run]).unwrap()
}

fn small_train_cfg(variant: Variant, epochs: usize) -> ModelConfig {
    let mut cfg = tiny(variant, 3, 1, 2);
    cfg.epochs = epochs;
    cfg.batch_size = 4;
    cfg
}

#[test]
fn zero_epochs_return_initial_weights() {
    let ds = wave_dataset(20, 3);
    let cfg = small_train_cfg(Variant::Improved, 0);
    let (net, report) = train::<f64>(&cfg, &ds).unwrap();
    assert_eq!(net, Network::init(&cfg).unwrap());
    assert!(report.epochs.is_empty());
    assert_eq!(report.best_epoch, None);
    assert_eq!(report.param_count, cfg.param_count());
}

#[test]
fn overfits_two_samples() {
    let mut ds = wave_dataset(20, 3);
    ds.split.train = vec![0, 5];
    ds.split.val = vec![0, 5];
    let mut cfg = tiny(Variant::Improved, 3, 1, 2);
    cfg.hidden = vec![8];
    cfg.learning_rate = 1e-2;
    cfg.epochs = 200;
    let (_, report) = train::<f64>(&cfg, &ds).unwrap();
    let losses = report.losses();
    assert_eq!(losses.len(), 200);
    let (first, last) = (losses[0], *losses.last().unwrap());
    assert!(last < 1e-3, "final loss {last:e}");
    assert!(first / last >= 100.0, "loss only fell from {first:e} to {last:e}");
}

#[test]
fn training_is_deterministic_in_f64() {
    let ds = wave_dataset(30, 3);
    let cfg = small_train_cfg(Variant::Improved, 2);
    let (a, ra) = train::<f64>(&cfg, &ds).unwrap();
    let (b, rb) = train::<f64>(&cfg, &ds).unwrap();
    assert_eq!(a, b);
    let bits = |r: &TrainReport| -> Vec<u64> {
        r.epochs
            .iter()
            .flat_map(|e| [e.train_loss, e.val.mae, e.val.mse, e.val.ssim])
            .map(f64::to_bits)
            .collect()
    };
    assert_eq!(bits(&ra), bits(&rb));
    let (c, _) = train::<f64>(&ModelConfig { seed: 1, ..cfg }, &ds).unwrap();
    assert_ne!(a, c);
}

#[test]
fn training_errors() {
    let ds = wave_dataset(20, 3);
    let cfg = small_train_cfg(Variant::Standard, 1);
    let mut empty = ds.clone();
    empty.split.train.clear();
    assert!(matches!(train::<f64>(&cfg, &empty), Err(Error::EmptySplit(_))));
    let mut empty = ds.clone();
    empty.split.val.clear();
    assert!(matches!(train::<f64>(&cfg, &empty), Err(Error::EmptySplit(_))));

    let mut poisoned = ds.clone();
    let victim = poisoned.split.train[0];
    poisoned.samples[victim].input.data_mut()[0] = f32::NAN;
    let mut one_batch = cfg.clone();
    one_batch.batch_size = 100;
    assert!(matches!(
        train::<f64>(&one_batch, &poisoned),
        Err(Error::NonFiniteLoss { epoch: 1, batch: 0 })
    ));

    let wrong = ModelConfig { t_in: 4, ..cfg };
    assert!(matches!(train::<f64>(&wrong, &ds), Err(Error::DatasetMismatch(_))));
}

#[test]
fn rollout_contract() {
    let mut rng = Rng::new(5);
    let cfg = tiny(Variant::Improved, 4, 1, 2);
    let net: Network<f64> = Network::init(&cfg).unwrap();
    let window = random(&mut rng, &[4, 2, 6, 6]);
    let one = rollout(&net, &window, 1).unwrap();
    assert_eq!(one.data(), net.forward(&window).unwrap().data());
    let four = rollout(&net, &window, 4).unwrap();
    assert_eq!(four.shape(), [4, 2, 6, 6]);
    assert_eq!(four.slab(0), one.slab(0));
    // The second step sees the window shifted by one with the first prediction appended.
    let mut shifted: Vec<Tensor<f64>> = (1..4).map(|t| window.index_axis0(t)).collect();
    shifted.push(one.index_axis0(0));
    let second = net.forward(&Tensor::stack(&shifted).unwrap()).unwrap();
    assert_eq!(four.slab(1), second.slab(0));
    assert!(rollout(&net, &window, 0).is_err());
}

#[test]
fn rollout_evaluation_uses_dataset_frames() {
    let ds = wave_dataset(30, 3);
    let index = FrameIndex::new(&ds);
    let s = &ds.samples[2];
    let future = index.future(s, 3, 4).unwrap();
    assert_eq!(future.slab(0), s.target.slab(0));
    assert_eq!(future.slab(3), ds.samples[5].target.slab(0));
    assert!(index.future(ds.samples.last().unwrap(), 3, 2).is_none());

    let net: Network<f64> = Network::init(&small_train_cfg(Variant::Improved, 0)).unwrap();
    let per_h = evaluate_rollout(&net, &ds, &ds.test(), 3).unwrap();
    assert_eq!(per_h.len(), 3);
    let covered: Vec<&SequenceSample> = ds
        .test()
        .into_iter()
        .filter(|s| index.future(s, 3, 3).is_some())
        .collect();
    let direct = evaluate(&net, &covered).unwrap();
    assert!((per_h[0].mse - direct.mse).abs() < 1e-12);
    assert!((per_h[0].ssim - direct.ssim).abs() < 1e-12);
}

#[test]
fn persistence_repeats_last_frame() {
    let ds = wave_dataset(20, 3);
    let s = &ds.samples[0];
    let p = persistence(s);
    assert_eq!(p.shape(), s.target.shape());
    assert_eq!(p.slab(0), s.input.slab(2));
    assert!(evaluate_persistence(&ds.test()).unwrap().mse > 0.0);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt");
    for precision in [DType::F64, DType::F32] {
        let cfg = ModelConfig {
            precision,
            seed: 4,
            ..tiny(Variant::Improved, 4, 1, 2)
        };
        let net: Network<f64> = Network::init(&cfg).unwrap();
        let mut extra = vortexcast::kv::KvDoc::new();
        extra.set_in("checkpoint", "epoch", 3);
        checkpoint::save(&path, &cfg, &net, &extra).unwrap();
        let (back_cfg, back, doc) = checkpoint::load::<f64>(&path).unwrap();
        assert_eq!(back_cfg, cfg);
        assert_eq!(doc.get_in("checkpoint", "epoch"), Some("3"));
        if precision == DType::F64 {
            assert_eq!(back, net);
        } else {
            assert_eq!(back, net.cast::<f32>().cast::<f64>());
        }
        assert_eq!(checkpoint::stored_param_count(&path).unwrap(), net.count_params());
    }
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
}

#[test]
fn stored_parameter_count_matches_reference_configs() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in [ModelConfig::standard(), ModelConfig::improved()] {
        let path = dir.path().join(cfg.variant.name());
        let net: Network<f32> = Network::init(&cfg).unwrap();
        checkpoint::save(&path, &cfg, &net, &Default::default()).unwrap();
        let expected: usize = net.params().iter().map(|(_, t)| t.len()).sum();
        assert_eq!(checkpoint::stored_param_count(&path).unwrap(), expected);
        assert_eq!(net.count_params(), expected);
    }
}

#[test]
fn self_comparison_has_zero_deltas() {
    let ds = wave_dataset(30, 3);
    let cfg = small_train_cfg(Variant::Improved, 1);
    let run = compare::<f64>(&cfg, &cfg, &ds, &TrainOptions::default(), |_, _| {}).unwrap();
    let rows = run.table.rows();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.delta_percent == 0.0));
    let names: Vec<_> = rows.iter().map(|r| r.metric).collect();
    assert_eq!(
        names,
        ["Total params", "Trainable params", "Training time (min)", "MAE", "MSE", "SSIM"]
    );
    assert_eq!(run.table.to_csv().lines().count(), 7);
    assert_eq!(run.table.to_text().lines().count(), 7);
}

#[test]
fn comparison_of_variants() {
    let ds = wave_dataset(30, 3);
    let s = small_train_cfg(Variant::Standard, 1);
    let i = small_train_cfg(Variant::Improved, 1);
    let run = compare::<f64>(&s, &i, &ds, &TrainOptions::default(), |_, _| {}).unwrap();
    let rows = run.table.rows();
    assert_eq!(rows[0].standard as usize, run.standard.0.count_params());
    assert_eq!(rows[0].improved as usize, run.improved.0.count_params());
    assert!(compare::<f64>(&s, &ModelConfig { seed: 9, ..i.clone() }, &ds, &TrainOptions::default(), |_, _| {}).is_err());

    let mut other = run.table.improved.clone();
    other.dataset = "different".into();
    assert!(matches!(
        Comparison::new(run.table.standard.clone(), other),
        Err(Error::DatasetMismatch(_))
    ));
}

#[test]
fn reference_comparison_direction_of_parameter_delta() {
    let s = ModelConfig::standard();
    let i = ModelConfig::improved();
    let dummy = |cfg: &ModelConfig| VariantResult {
        variant: cfg.variant,
        total_params: cfg.param_count(),
        trainable_params: cfg.param_count(),
        train_minutes: 1.0,
        test: MetricTriple::default(),
        dataset: "d".into(),
    };
    let table = Comparison::new(dummy(&s), dummy(&i)).unwrap();
    assert!(table.rows()[0].delta_percent < 0.0);
    assert!(table.rows()[0].change().starts_with("reduced by"));
}
