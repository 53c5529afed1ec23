use flowlab_core::model::{load_model, mlp_init, save_model, train, TrainConfig};
use flowlab_core::sampler::generate;
use flowlab_core::{make_schedule, Condition, Modality, Rng64, ScheduleKind, TensorState};

fn gaussian_data(n: usize, mean: f64, std: f64, seed: u64) -> Vec<(TensorState, Condition)> {
    let mut rng = Rng64::new(seed);
    (0..n)
        .map(|_| (TensorState::scalar(mean + std * rng.normal()).unwrap(), Condition::null(0)))
        .collect()
}

#[test]
fn trained_model_generates_target_mean() {
    // N(2, 0.25): 1024 examples, batch 64, 125 epochs = 2000 optimizer steps
    let data = gaussian_data(1024, 2.0, 0.5, 1);
    let mut model = mlp_init(&[3, 32, 32, 1], 0, 7).unwrap();
    let cfg = TrainConfig {
        epochs: 125,
        batch_size: 64,
        learning_rate: 3e-3,
        seed: 11,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &data, &cfg).unwrap();
    assert_eq!(report.steps, 2000);
    assert!(report.final_loss < report.initial_loss);

    let schedule = make_schedule(50, ScheduleKind::Linear).unwrap();
    let mut rng = Rng64::new(99);
    let n = 2000;
    let mean = (0..n)
        .map(|_| {
            let x1 = rng.normal_state(&[1], Modality::Generic);
            generate(&model, &x1, &Condition::null(0), &schedule).unwrap().data()[0]
        })
        .sum::<f64>()
        / n as f64;
    assert!((mean - 2.0).abs() < 0.15, "generated mean {mean}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.omed");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    let x1 = TensorState::scalar(0.3).unwrap();
    assert_eq!(
        generate(&back, &x1, &Condition::null(0), &schedule).unwrap(),
        generate(&model, &x1, &Condition::null(0), &schedule).unwrap()
    );
}
