use dexgrasp::contrastive::{ClConfig, Contrastive};
use dexgrasp::demo::{collect_demos, DemoSet, DemoStep, Source, Trajectory};
use dexgrasp::env::{Action, EnvConfig, Event, Observation, Task};
use dexgrasp::harness::metrics::{metrics_csv, parse_metrics};
use dexgrasp::harness::IterationMetrics;
use dexgrasp::nn::{Checkpoint, Tensor};
use dexgrasp::sac::{actor_from_checkpoint, normal_noise, Batch, PolicyNet, Sac, SacConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn float_bits(set: &DemoSet) -> Vec<u64> {
    set.trajectories()
        .iter()
        .flat_map(|t| t.steps.iter())
        .flat_map(|s| s.obs.0.iter().chain(&s.action.0).chain(std::iter::once(&s.reward)).map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect()
}

fn demo_files_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let set = collect_demos(&EnvConfig::default(), Task::Bottle, 4, 20, 0.05).unwrap();
    let path = dir.path().join("demos.jsonl");
    set.save(&path).unwrap();
    let back = DemoSet::load(&path).unwrap();
    assert_eq!(back, set);
    assert_eq!(float_bits(&back), float_bits(&set));
    let again = dir.path().join("again.jsonl");
    back.save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

fn arb_float() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3f64..1e3,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(5e-324),
        Just(f64::MAX),
    ]
}

fn arb_step() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64, u8)> {
    (
        proptest::collection::vec(arb_float(), 20),
        proptest::collection::vec(arb_float(), 8),
        arb_float(),
        0u8..4,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    fn arbitrary_demo_sets_round_trip(
        trajs in proptest::collection::vec((proptest::collection::vec(arb_step(), 1..6), any::<u64>(), any::<bool>()), 1..4)
    ) {
        let mut set = DemoSet::new(Task::Ball);
        for (steps, seed, teleop) in trajs {
            let n = steps.len();
            let steps = steps
                .into_iter()
                .enumerate()
                .map(|(i, (o, a, r, e))| DemoStep {
                    obs: Observation::from_slice(&o).unwrap(),
                    action: Action::from_slice(&a).unwrap(),
                    reward: r,
                    event: [Event::None, Event::Contact, Event::Collision, Event::Success][e as usize],
                    done: i + 1 == n,
                })
                .collect();
            set.push(Trajectory {
                task: Task::Ball,
                seed,
                steps,
                source: if teleop { Source::Teleop } else { Source::Scripted },
                created_at: seed / 3,
            })
            .unwrap();
        }
        let text = set.to_jsonl().unwrap();
        let back = DemoSet::from_jsonl(&text).unwrap();
        prop_assert_eq!(float_bits(&back), float_bits(&set));
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(back.to_jsonl().unwrap(), text);
    }

    fn metrics_rows_round_trip(
        rows in proptest::collection::vec(
            (arb_float(), 0.0f64..=1.0, proptest::collection::vec(proptest::option::of(arb_float()), 5)),
            1..8,
        )
    ) {
        let rows: Vec<IterationMetrics> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (reward, success, l))| IterationMetrics {
                iter: i,
                env_steps: 2000 * i as u64,
                mean_reward: reward,
                success_rate: success,
                loss_q1: l[0],
                loss_q2: l[1],
                loss_pi: l[2],
                loss_cl: l[3],
                entropy: l[4],
                wall_seconds: 0.0,
            })
            .collect();
        let text = metrics_csv(&rows);
        let back = parse_metrics(&text).unwrap();
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.mean_reward.to_bits(), b.mean_reward.to_bits());
        }
        prop_assert_eq!(&back, &rows);
        prop_assert_eq!(metrics_csv(&back), text);
    }
}

fn trained_parts(seed: u64) -> (Sac, Contrastive) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actor = PolicyNet::new(&mut rng);
    let mut sac = Sac::new(
        SacConfig {
            batch_size: 8,
            ..SacConfig::default()
        },
        actor,
        &mut rng,
    )
    .unwrap();
    let mut cl = Contrastive::new(ClConfig::default(), &mut rng).unwrap();
    for _ in 0..3 {
        step(&mut sac, &mut cl, &mut rng);
    }
    (sac, cl)
}

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn step(sac: &mut Sac, cl: &mut Contrastive, rng: &mut ChaCha8Rng) {
    let b = Batch {
        states: uniform(8, 20, rng),
        actions: uniform(8, 8, rng),
        rewards: Tensor::vector((0..8).map(|_| rng.gen_range(-5.0..5.0)).collect()),
        next_states: uniform(8, 20, rng),
        dones: Tensor::vector(vec![0.0; 8]),
    };
    let q_bar = sac.target_q(&b, &normal_noise(8, 8, rng)).unwrap();
    sac.critic_update(&b, &q_bar).unwrap();
    let (se, ae) = (uniform(8, 20, rng), uniform(8, 8, rng));
    let eps = normal_noise(8, 8, rng);
    cl.head_update(&sac.actor, &se, &ae, &eps).unwrap();
    let eps_pi = normal_noise(8, 8, rng);
    sac.actor_update_with(&b.states, &eps_pi, 0.5, |tape, bp| cl.record_actor_term(tape, bp, &se, &ae, &eps).map(Some))
        .unwrap();
    sac.update_targets().unwrap();
}

fn all_bits(sac: &Sac, cl: &Contrastive) -> Vec<u64> {
    let mut ps = sac.actor.params();
    ps.extend(sac.q1.mlp.params());
    ps.extend(sac.q2.mlp.params());
    ps.extend(sac.q1_target.mlp.params());
    ps.extend(sac.q2_target.mlp.params());
    ps.extend(cl.head.mlp.params());
    ps.iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect()
}

fn checkpoints_round_trip_and_resume_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (mut sac, mut cl) = trained_parts(1);
    let mut ck = Checkpoint::new("sac", 1);
    sac.add_to_checkpoint(&mut ck);
    cl.add_to_checkpoint(&mut ck);
    ck.counters.insert("iter".into(), 3);
    ck.meta.insert("task".into(), "ball".into());
    let path = dir.path().join("a.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes(), ck.to_bytes());

    let mut sac2 = Sac::from_checkpoint(sac.cfg.clone(), &back).unwrap();
    let mut cl2 = Contrastive::from_checkpoint(cl.cfg.clone(), &back).unwrap();
    assert_eq!(all_bits(&sac2, &cl2), all_bits(&sac, &cl));
    assert_eq!(sac2.updates, sac.updates);

    // Identical continuations, including the optimizer moments.
    let mut r1 = ChaCha8Rng::seed_from_u64(99);
    let mut r2 = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..3 {
        step(&mut sac, &mut cl, &mut r1);
        step(&mut sac2, &mut cl2, &mut r2);
    }
    assert_eq!(all_bits(&sac2, &cl2), all_bits(&sac, &cl));
}

fn deployment_checkpoints_hold_only_the_actor() {
    let dir = tempfile::tempdir().unwrap();
    let (sac, cl) = trained_parts(2);
    let mut ck = Checkpoint::new("final", 2);
    sac.add_to_checkpoint(&mut ck);
    cl.add_to_checkpoint(&mut ck);
    assert!(ck.has_network("head"));
    let path = dir.path().join("deploy.ckpt");
    ck.deployment().save(&path).unwrap();
    let dep = Checkpoint::load(&path).unwrap();
    for t in &dep.tensors {
        assert!(t.name.starts_with("actor."), "deployment keeps {}", t.name);
        assert!(!t.name.starts_with("head"));
    }
    assert_eq!(
        dep.networks.keys().cloned().collect::<Vec<_>>(),
        vec!["actor.log_std", "actor.mean", "actor.trunk"]
    );
    let actor = actor_from_checkpoint(&dep).unwrap();
    assert_eq!(actor, sac.actor);
    let s = uniform(4, 20, &mut ChaCha8Rng::seed_from_u64(5));
    assert_eq!(actor.mean_action(&s).unwrap(), sac.actor.mean_action(&s).unwrap());
}

/// Pairs, not trajectories, are the unit of sampling.
fn expert_batches_sample_pairs_uniformly() {
    let mut set = DemoSet::new(Task::Ball);
    let mut id = 0.0;
    for len in [1usize, 2, 7] {
        let steps = (0..len)
            .map(|i| {
                let mut o = [0.0; 20];
                o[0] = id;
                id += 1.0;
                DemoStep {
                    obs: Observation(o),
                    action: Action::zeros(),
                    reward: 0.0,
                    event: Event::None,
                    done: i + 1 == len,
                }
            })
            .collect();
        set.push(Trajectory {
            task: Task::Ball,
            seed: len as u64,
            steps,
            source: Source::Scripted,
            created_at: 0,
        })
        .unwrap();
    }
    let n = set.num_pairs();
    assert_eq!(n, 10);
    let mut counts = vec![0usize; n];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 1_000_000;
    for _ in 0..draws / 1000 {
        let (s, _) = set.sample_batch(1000, &mut rng).unwrap();
        for r in 0..1000 {
            counts[s.at(r, 0) as usize] += 1;
        }
    }
    let expected = draws as f64 / n as f64;
    let mut chi2 = 0.0;
    for (k, &c) in counts.iter().enumerate() {
        let rel = (c as f64 - expected).abs() / expected;
        assert!(rel < 0.01, "pair {k}: {c} draws, {rel:.4} off");
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    // 99.9th percentile of chi-square with 9 degrees of freedom
    assert!(chi2 < 27.88, "chi-square {chi2}");
}

pub const CHECKS: &[(&str, fn())] = &[
    ("demo_files_round_trip_bit_exactly", demo_files_round_trip_bit_exactly),
    ("arbitrary_demo_sets_round_trip", arbitrary_demo_sets_round_trip),
    ("metrics_rows_round_trip", metrics_rows_round_trip),
    ("checkpoints_round_trip_and_resume_exactly", checkpoints_round_trip_and_resume_exactly),
    ("deployment_checkpoints_hold_only_the_actor", deployment_checkpoints_hold_only_the_actor),
    ("expert_batches_sample_pairs_uniformly", expert_batches_sample_pairs_uniformly),
];
