use dexgrasp::bc::BcConfig;
use dexgrasp::demo::collect_demos;
use dexgrasp::env::{EnvConfig, Task};
use dexgrasp::harness::{train_with_demos, IterationMetrics, Method, RunConfig};
use dexgrasp::nn::Checkpoint;
use dexgrasp::sac::SacConfig;

fn tensor_bits(ck: &Checkpoint, prefix: &str) -> Vec<(String, Vec<u64>)> {
    ck.tensors
        .iter()
        .filter(|t| t.name.starts_with(&format!("{prefix}.")))
        .map(|t| (t.name.clone(), t.tensor.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

/// With the contrastive weight at zero the contrastive method must follow
/// the plain pretrained method bit for bit. The head still trains, but
/// nothing it does reaches the actor or the critics.
fn zero_weight_matches_bc_sac_at_every_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let demos = collect_demos(&EnvConfig::default(), Task::Ball, 6, 0, 0.05).unwrap();
    let base = RunConfig {
        seed: 11,
        total_iterations: 4,
        steps_per_iteration: 80,
        eval_episodes: 5,
        checkpoint_every: Some(1),
        sac: SacConfig {
            batch_size: 32,
            warmup_steps: 50,
            ..SacConfig::default()
        },
        bc: BcConfig {
            epochs: 100,
            ..BcConfig::default()
        },
        ..RunConfig::default()
    };
    let plain = RunConfig {
        method: Method::BcSac,
        output_dir: dir.path().join("bc_sac"),
        ..base.clone()
    };
    let mut cl = RunConfig {
        method: Method::BcSacCl,
        output_dir: dir.path().join("bc_sac_cl"),
        ..base
    };
    cl.contrastive.xi4 = 0.0;
    let a = train_with_demos(&plain, Some(&demos)).unwrap();
    let b = train_with_demos(&cl, Some(&demos)).unwrap();
    assert!(b.metrics.iter().skip(1).all(|r| r.loss_cl.is_some()), "the head did not train");

    let mut names: Vec<String> = (1..=4).map(|i| format!("iter_{i:04}.ckpt")).collect();
    names.extend(["bc.ckpt", "final.ckpt", "deploy.ckpt"].map(String::from));
    for name in &names {
        let ca = Checkpoint::load(a.output_dir.join(name)).unwrap();
        let cb = Checkpoint::load(b.output_dir.join(name)).unwrap();
        let mut compared = 0;
        for prefix in ["actor", "actor_opt", "q1", "q2", "q1_target", "q2_target", "q1_opt", "q2_opt"] {
            let (x, y) = (tensor_bits(&ca, prefix), tensor_bits(&cb, prefix));
            assert_eq!(x, y, "{name}: {prefix} diverged");
            compared += x.len();
        }
        let theirs = cb.tensors.iter().filter(|t| !t.name.starts_with("head")).count();
        assert_eq!(compared, theirs, "{name}: unexpected tensors");
        assert_eq!(compared, ca.tensors.len(), "{name}: unexpected tensors");
        let counters: std::collections::BTreeMap<_, _> =
            cb.counters.into_iter().filter(|(k, _)| !k.starts_with("head")).collect();
        assert_eq!(ca.counters, counters, "{name}");
    }
    let strip = |m: &[IterationMetrics]| {
        m.iter()
            .map(|r| (r.env_steps, r.success_rate.to_bits(), r.mean_reward.to_bits(), r.loss_q1, r.loss_q2, r.loss_pi, r.entropy))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a.metrics), strip(&b.metrics));
}

pub const CHECKS: &[(&str, fn())] = &[(
    "zero_weight_matches_bc_sac_at_every_checkpoint",
    zero_weight_matches_bc_sac_at_every_checkpoint,
)];
