use edcforge_core::dataset::{self, Dataset, DatasetManifest};
use edcforge_core::nn::{self, evaluate_mse, train_step, Adam, ModelParams, ModelShape, Mode, TrainConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn edc_batch(rng: &mut ChaCha8Rng, n: usize, len: usize) -> (Array2<f64>, Array2<f64>) {
    let x = Array2::from_shape_fn((n, 16), |_| rng.random_range(0.0..1.0));
    let taus: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..80.0)).collect();
    let y = Array2::from_shape_fn((n, len), |(i, k)| (-(k as f64) / taus[i]).exp());
    (x, y)
}

fn descent_trial(trial: u64, iterations: usize) -> Vec<f64> {
    let shape = ModelShape {
        dropout: 0.0,
        ..ModelShape::default()
    };
    let config = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
    let (x, y) = edc_batch(&mut rng, 10, shape.output);
    let mut params = ModelParams::init(shape, trial);
    let mut adam = Adam::new(config.adam(), &params);
    (0..iterations)
        .map(|_| train_step(&mut params, &mut adam, x.view(), y.view(), Mode::Eval).unwrap())
        .collect()
}

// Same weights, data and optimizer settings replayed through torch.nn.LSTM,
// Linear and torch.optim.Adam in float64.
#[test]
fn loss_trajectory_matches_reference_framework() {
    let reference = [
        (0, 0.10635008766766374),
        (1, 0.08901793822105086),
        (2, 0.07284523249047076),
        (5, 0.028283383413535514),
        (10, 0.011530775804145204),
        (13, 0.006650391150505275),
        (14, 0.006889005444037692),
        (20, 0.004407934018769507),
        (30, 0.0019325338448028333),
        (49, 0.00030319040061428524),
    ];
    let traj = descent_trial(0, 50);
    for (k, want) in reference {
        assert!(((traj[k] - want) / want).abs() < 1e-10, "iteration {k}: {} vs {want}", traj[k]);
    }
}

#[test]
fn full_batch_loss_descends() {
    let mut early_monotone = 0;
    for trial in 0..100u64 {
        let traj = descent_trial(trial, 12);
        early_monotone += traj.windows(2).all(|w| w[1] < w[0]) as usize;
    }
    assert!(early_monotone >= 95, "{early_monotone}/100 monotone trials");
}

fn small_dataset(n: usize, seed: u64) -> Dataset {
    let manifest = DatasetManifest::new(seed, n);
    let configs = dataset::sample_configs(n, seed, &manifest.ranges).unwrap();
    let samples = dataset::build(&configs, &manifest, 4).unwrap();
    Dataset::assemble(manifest, &samples).unwrap()
}

#[test]
fn fifty_rooms_fit_below_target_variance() {
    let ds = small_dataset(50, 3);
    let all: Vec<usize> = (0..50).collect();
    let (x, y) = ds.xy(&all);
    let (x, y) = (nn::to_matrix(&x).unwrap(), nn::to_matrix(&y).unwrap());
    let mean = y.mean_axis(ndarray::Axis(0)).unwrap();
    let variance = (&y - &mean).mapv(|v| v * v).mean().unwrap();

    let config = TrainConfig {
        max_epochs: 40,
        patience: 40,
        batch_size: 16,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = nn::train(ModelShape::default(), &config, x.view(), y.view(), x.view(), y.view()).unwrap();
    assert!(out.history.len() >= 30);
    let mse = evaluate_mse(&out.params, x.view(), y.view()).unwrap();
    assert!(mse < variance, "train mse {mse} vs target variance {variance}");
}

#[test]
fn training_is_deterministic() {
    let ds = small_dataset(30, 8);
    let config = TrainConfig {
        max_epochs: 5,
        batch_size: 8,
        seed: 4,
        ..TrainConfig::default()
    };
    let shape = ModelShape {
        hidden: 16,
        dense: 64,
        ..ModelShape::default()
    };
    let a = nn::train_on_dataset(&ds, shape, &config).unwrap();
    let b = nn::train_on_dataset(&ds, shape, &config).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    let c = nn::train_on_dataset(&ds, shape, &TrainConfig { seed: 5, ..config }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn best_weights_are_restored() {
    let ds = small_dataset(30, 9);
    let config = TrainConfig {
        max_epochs: 25,
        patience: 3,
        batch_size: 8,
        seed: 2,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let shape = ModelShape {
        hidden: 16,
        dense: 64,
        ..ModelShape::default()
    };
    let ckpt = nn::train_on_dataset(&ds, shape, &config).unwrap();
    let best = ckpt
        .history
        .iter()
        .map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(ckpt.history[ckpt.best_epoch].val_loss, best);
    let (vx, mut vy) = ds.xy(&ds.splits.val);
    if let Some(ts) = &ckpt.target_scaler {
        vy = vy.iter().map(|r| ts.transform(r)).collect();
    }
    let restored = evaluate_mse(&ckpt.params, nn::to_matrix(&vx).unwrap().view(), nn::to_matrix(&vy).unwrap().view()).unwrap();
    assert!((restored - best).abs() <= 1e-4 * best, "{restored} vs {best}");
}
