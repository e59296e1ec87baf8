mod common;

use common::*;
use gridarc::config::{load_config, make, parse_config, AnyEnv};
use gridarc::env::CapacityProfile;
use gridarc::Mode;

#[test]
fn make_from_config_file() {
    let path = fixtures_dir().join("configs/tiny.yaml");
    let (env, params) = make(path.to_str().unwrap()).unwrap();
    assert!(matches!(env, AnyEnv::Full(_)));
    assert_eq!(env.observation_shape(), (2, 30, 30));
    assert_eq!(env.action_arity(), 5);
    assert_eq!(env.task_ids(), ["fill_blue", "flip_rows", "recolor"]);
    assert_eq!(params.max_episode_steps, 20);
}

#[test]
fn config_round_trip_and_defaults() {
    let cfg = load_config(&fixtures_dir().join("configs/tiny.yaml"), &[]).unwrap();
    let again = parse_config(&cfg.to_yaml(), std::path::Path::new("x.yaml")).unwrap();
    assert_eq!(again, cfg);

    let minimal = parse_config("dataset: {root: somewhere}\n", std::path::Path::new("m.yaml")).unwrap();
    assert_eq!(minimal.env.max_episode_steps, 150);
    assert_eq!(minimal.env.reward.success_bonus, 10.0);
    assert_eq!(minimal.env.reward.step_penalty, 0.02);
    assert_eq!(minimal.buffer.max_demo_pairs, 5);
    let ctx = parse_config(
        "dataset: {root: r}\nwrappers: [{type: contextual}]\n",
        std::path::Path::new("c.yaml"),
    )
    .unwrap();
    assert_eq!(ctx.obs_config().contextual, Some(5));
}

#[test]
fn includes_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    write_mini_dataset(dir.path());
    std::fs::write(dir.path().join("base.yaml"), "dataset: {root: MiniARC}\nenv: {capacity: mini, max_episode_steps: 9}\n").unwrap();
    std::fs::write(dir.path().join("run.json"), r#"{"include": "base.yaml", "env": {"mode": "eval"}, "wrappers": [{"type": "point"}]}"#).unwrap();
    let cfg = load_config(&dir.path().join("run.json"), &["env.max_episode_steps=4".into()]).unwrap();
    assert_eq!((cfg.env.mode, cfg.env.capacity, cfg.env.max_episode_steps), (Mode::Eval, CapacityProfile::Mini, 4));
    let (env, _) = make(dir.path().join("run.json").to_str().unwrap()).unwrap();
    assert_eq!(env.num_tasks(), MINI_TASKS);
    assert_eq!(env.action_dims(), [5, 5, 35]);
}
