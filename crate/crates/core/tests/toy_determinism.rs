use absa_rl_core::toy::{make_tasks, policy_fingerprint, run_training, TrainConfig, Trainer, Vocabulary};

fn small() -> TrainConfig {
    TrainConfig { iterations: 25, task_count: 6, seed: 11, ..TrainConfig::default() }
}

#[test]
fn same_seed_same_report() {
    let a = run_training(small()).unwrap();
    let b = run_training(small()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn different_seed_diverges() {
    let a = run_training(small()).unwrap();
    let b = run_training(TrainConfig { seed: 12, ..small() }).unwrap();
    assert_ne!(serde_json::to_string(&a.iterations).unwrap(), serde_json::to_string(&b.iterations).unwrap());
}

#[test]
fn stepping_matches_run() {
    let mut t = Trainer::<f64>::new(small()).unwrap();
    for _ in 0..small().iterations {
        t.step().unwrap();
    }
    let report = run_training(small()).unwrap();
    assert_eq!(report.iterations.len(), 25);
    assert_eq!(policy_fingerprint(t.policy().logits()), report.header.final_policy_sha256);
}

#[test]
fn task_generation_is_seeded() {
    let v = Vocabulary::default();
    assert_eq!(make_tasks(5, 8, &v), make_tasks(5, 8, &v));
    assert_eq!(make_tasks(5, 8, &v).len(), 8);
}

#[test]
fn invalid_config_is_rejected() {
    assert!(Trainer::<f64>::new(TrainConfig { group_size: 0, ..small() }).is_err());
    assert!(run_training(TrainConfig { learning_rate: -1.0, ..small() }).is_err());
}
