use dexgrasp::contrastive::{ClConfig, Contrastive};
use dexgrasp::nn::{Tape, Tensor};
use dexgrasp::sac::{normal_noise, squashed_log_density, Batch, PolicyNet, QNet, Sac, SacConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OBS: usize = 5;
const ACT: usize = 3;

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn batch(b: usize, done_p: f64, rng: &mut ChaCha8Rng) -> Batch {
    Batch {
        states: uniform(b, OBS, rng),
        actions: uniform(b, ACT, rng),
        rewards: Tensor::vector((0..b).map(|_| rng.gen_range(-10.0..10.0)).collect()),
        next_states: uniform(b, OBS, rng),
        dones: Tensor::vector((0..b).map(|_| f64::from(rng.gen_bool(done_p))).collect()),
    }
}

fn small_sac(seed: u64) -> Sac {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actor = PolicyNet::with_sizes(OBS, &[16, 16], ACT, &mut rng);
    let q1 = QNet::with_sizes(OBS, ACT, &[16, 16], &mut rng);
    let q2 = QNet::with_sizes(OBS, ACT, &[16, 16], &mut rng);
    let mut sac = Sac::from_parts(
        SacConfig {
            batch_size: 32,
            ..SacConfig::default()
        },
        actor,
        q1,
        q2,
    );
    // Decouple the targets from the online critics.
    sac.q2_target = QNet::with_sizes(OBS, ACT, &[16, 16], &mut rng);
    sac
}

fn bits(ts: &[&Tensor]) -> Vec<u64> {
    ts.iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect()
}

struct Snapshot {
    actor: Vec<u64>,
    q1: Vec<u64>,
    q2: Vec<u64>,
    q1t: Vec<u64>,
    q2t: Vec<u64>,
}

fn snapshot(s: &Sac) -> Snapshot {
    Snapshot {
        actor: bits(&s.actor.params()),
        q1: bits(&s.q1.mlp.params()),
        q2: bits(&s.q2.mlp.params()),
        q1t: bits(&s.q1_target.mlp.params()),
        q2t: bits(&s.q2_target.mlp.params()),
    }
}

fn target_uses_the_smaller_critic_and_masks_terminals() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sac = small_sac(2);
    let b = batch(64, 0.3, &mut rng);
    let eps = normal_noise(64, ACT, &mut rng);
    let q_bar = sac.target_q(&b, &eps).unwrap();

    let (a2, logp) = sac.actor.sample(&b.next_states, &eps).unwrap();
    let v1 = sac.q1_target.forward(&b.next_states, &a2).unwrap();
    let v2 = sac.q2_target.forward(&b.next_states, &a2).unwrap();
    let (gamma, alpha) = (sac.cfg.gamma, sac.cfg.alpha);
    let mut terminals = 0;
    for i in 0..64 {
        let r = b.rewards.data()[i];
        if b.dones.data()[i] == 1.0 {
            terminals += 1;
            assert_eq!(q_bar.data()[i], r);
            continue;
        }
        let lo = v1.data()[i].min(v2.data()[i]);
        let hi = v1.data()[i].max(v2.data()[i]);
        let want = r + gamma * (lo - alpha * logp.data()[i]);
        assert_eq!(q_bar.data()[i], want);
        // pessimism: never above the target built from the larger critic
        assert!(q_bar.data()[i] <= r + gamma * (hi - alpha * logp.data()[i]));
    }
    assert!(terminals > 0 && terminals < 64);
}

fn polyak_contracts_geometrically() {
    let mut sac = small_sac(3);
    let online = bits(&sac.q2.mlp.params());
    let gap0: Vec<f64> = sac
        .q2_target
        .mlp
        .params()
        .iter()
        .zip(sac.q2.mlp.params())
        .flat_map(|(t, o)| t.data().iter().zip(o.data()).map(|(a, b)| a - b).collect::<Vec<_>>())
        .collect();
    let tau = sac.cfg.tau;
    assert_eq!(tau, 0.005);
    for n in 1..=1000u32 {
        sac.update_targets().unwrap();
        if n % 250 == 0 {
            let factor = (1.0 - tau).powi(n as i32);
            let gap: Vec<f64> = sac
                .q2_target
                .mlp
                .params()
                .iter()
                .zip(sac.q2.mlp.params())
                .flat_map(|(t, o)| t.data().iter().zip(o.data()).map(|(a, b)| a - b).collect::<Vec<_>>())
                .collect();
            for (g, g0) in gap.iter().zip(&gap0) {
                assert!((g - factor * g0).abs() <= 1e-12 + 1e-9 * g0.abs(), "n={n}: {g} vs {}", factor * g0);
            }
        }
    }
    assert_eq!(bits(&sac.q2.mlp.params()), online, "online critic moved");
    assert_eq!(sac.updates, 1000);
    // q1 started equal to its target and stays there up to rounding
    for (t, o) in sac.q1_target.mlp.params().iter().zip(sac.q1.mlp.params()) {
        assert!(t.max_abs_diff(o) <= 1e-15);
    }
}

fn updates_touch_only_their_own_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sac = small_sac(5);
    let b = batch(32, 0.2, &mut rng);

    let before = snapshot(&sac);
    let q_bar = sac.target_q(&b, &normal_noise(32, ACT, &mut rng)).unwrap();
    let after = snapshot(&sac);
    assert_eq!(before.actor, after.actor);
    assert_eq!(before.q1, after.q1);
    assert_eq!(before.q1t, after.q1t);

    sac.critic_update(&b, &q_bar).unwrap();
    let c = snapshot(&sac);
    assert_eq!(c.actor, before.actor, "critic step moved the actor");
    assert_eq!(c.q1t, before.q1t, "critic step moved a target");
    assert_eq!(c.q2t, before.q2t, "critic step moved a target");
    assert_ne!(c.q1, before.q1);
    assert_ne!(c.q2, before.q2);

    sac.actor_update(&b.states, &normal_noise(32, ACT, &mut rng)).unwrap();
    let a = snapshot(&sac);
    assert_eq!(a.q1, c.q1, "actor step moved a critic");
    assert_eq!(a.q2, c.q2, "actor step moved a critic");
    assert_eq!(a.q1t, c.q1t);
    assert_eq!(a.q2t, c.q2t);
    assert_ne!(a.actor, c.actor);
}

fn contrastive_steps_keep_to_their_side() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut sac = small_sac(7);
    let mut cl = Contrastive::from_head(
        ClConfig::default(),
        dexgrasp::contrastive::ProjectionHead {
            mlp: dexgrasp::nn::Mlp::new(
                &[OBS + ACT, 16, 8],
                dexgrasp::nn::Activation::Relu,
                dexgrasp::nn::Activation::Identity,
                &mut rng,
            ),
        },
    );
    let se = uniform(16, OBS, &mut rng);
    let ae = uniform(16, ACT, &mut rng);
    let eps = normal_noise(16, ACT, &mut rng);

    let before = snapshot(&sac);
    let head0 = bits(&cl.head.mlp.params());
    cl.head_update(&sac.actor, &se, &ae, &eps).unwrap();
    assert_eq!(snapshot(&sac).actor, before.actor, "head step moved the actor");
    let head1 = bits(&cl.head.mlp.params());
    assert_ne!(head1, head0);

    let states = uniform(16, OBS, &mut rng);
    let eps_pi = normal_noise(16, ACT, &mut rng);
    let stats = sac
        .actor_update_with(&states, &eps_pi, 0.5, |tape, bp| {
            cl.record_actor_term(tape, bp, &se, &ae, &eps).map(Some)
        })
        .unwrap();
    assert!(stats.aux_loss.is_some());
    assert_eq!(bits(&cl.head.mlp.params()), head1, "actor step moved the head");
    let after = snapshot(&sac);
    assert_eq!(after.q1, before.q1);
    assert_eq!(after.q2, before.q2);
    assert_ne!(after.actor, before.actor);
}

fn frozen_networks_receive_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sac = small_sac(9);
    let s = uniform(8, OBS, &mut rng);
    let eps = normal_noise(8, ACT, &mut rng);
    let mut tape = Tape::new();
    let bp = sac.actor.bind(&mut tape, true);
    let q1 = sac.q1.mlp.bind(&mut tape, false);
    let sv = tape.constant(s.clone());
    let (a, _) = bp.sample(&mut tape, sv, &eps).unwrap();
    let x = tape.concat_cols(sv, a);
    let q = q1.forward(&mut tape, x).unwrap();
    let l = tape.mean(q);
    let g = tape.backward(l).unwrap();
    for v in q1.param_vars() {
        assert!(!tape.requires_grad(v));
        assert!(g.get(v).is_none(), "frozen critic got a gradient");
    }
    assert!(bp.grads(&g).iter().any(|t| t.data().iter().any(|&x| x != 0.0)));
}

/// Midpoint rule over (−1, 1).
fn integrate(f: impl Fn(f64) -> f64, cells: usize) -> f64 {
    let h = 2.0 / cells as f64;
    (0..cells).map(|i| f(-1.0 + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

fn squashed_density_integrates_to_one() {
    for &mean in &[0.0, 0.7, -1.5, 2.0] {
        for &log_std in &[-2.0, -1.0, 0.0, 0.5] {
            let mass = integrate(|a| squashed_log_density(&[mean], &[log_std], &[a]).exp(), 400_000);
            assert!((mass - 1.0).abs() < 1e-3, "mean {mean} log_std {log_std}: {mass}");
        }
    }
}

fn density_slices_of_a_policy_integrate_to_the_other_factors() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut actor = PolicyNet::with_sizes(OBS, &[16], ACT, &mut rng);
    for p in actor.log_std_head.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
    }
    let s = uniform(4, OBS, &mut rng);
    let (mean, log_std) = actor.dist(&s).unwrap();
    for r in 0..4 {
        let (m, ls) = (mean.row(r), log_std.row(r));
        let fixed: Vec<f64> = (0..ACT).map(|_| rng.gen_range(-0.8..0.8)).collect();
        for k in 0..ACT {
            let slice = integrate(
                |x| {
                    let mut a = fixed.clone();
                    a[k] = x;
                    squashed_log_density(m, ls, &a).exp()
                },
                200_000,
            );
            let others: f64 = (0..ACT)
                .filter(|&j| j != k)
                .map(|j| squashed_log_density(&m[j..=j], &ls[j..=j], &fixed[j..=j]))
                .sum::<f64>()
                .exp();
            assert!((slice / others - 1.0).abs() < 1e-3, "row {r} dim {k}: {}", slice / others);
        }
    }
}

fn sampler_matches_its_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut actor = PolicyNet::with_sizes(2, &[8], 1, &mut rng);
    for p in actor.log_std_head.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let n = 200_000;
    let state = Tensor::new(vec![n, 2], [0.3, -0.4].repeat(n)).unwrap();
    let eps = normal_noise(n, 1, &mut rng);
    let (a, logp) = actor.sample(&state, &eps).unwrap();
    let (mean, log_std) = actor.dist(&state.slice_rows(0, 1)).unwrap();
    let (m, ls) = (mean.data()[0], log_std.data()[0]);

    for i in (0..n).step_by(997) {
        let want = squashed_log_density(&[m], &[ls], &[a.data()[i]]);
        assert!((logp.data()[i] - want).abs() < 1e-8 * want.abs().max(1.0), "{} vs {want}", logp.data()[i]);
    }

    let bins = 20;
    let mut counts = vec![0usize; bins];
    for &x in a.data() {
        counts[(((x + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1)] += 1;
    }
    for (k, &c) in counts.iter().enumerate() {
        let (lo, hi) = (-1.0 + 2.0 * k as f64 / bins as f64, -1.0 + 2.0 * (k + 1) as f64 / bins as f64);
        let cells = 2000;
        let h = (hi - lo) / cells as f64;
        let mass: f64 = (0..cells)
            .map(|i| squashed_log_density(&[m], &[ls], &[lo + (i as f64 + 0.5) * h]).exp() * h)
            .sum();
        if mass > 0.02 {
            let freq = c as f64 / n as f64;
            assert!((freq / mass - 1.0).abs() < 0.05, "bin {k}: {freq} vs {mass}");
        }
    }
}

/// With flat critics the actor objective is `α·E[log π]`, so actor steps
/// must raise the entropy.
fn entropy_bonus_drives_entropy_up_under_flat_critics() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let actor = PolicyNet::with_sizes(OBS, &[16], ACT, &mut rng);
    let mut q1 = QNet::with_sizes(OBS, ACT, &[16], &mut rng);
    for p in q1.mlp.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut sac = Sac::from_parts(
        SacConfig {
            learning_rate: 1e-2,
            ..SacConfig::default()
        },
        actor,
        q1.clone(),
        q1,
    );
    let s = uniform(64, OBS, &mut rng);
    let first = sac.actor_update(&s, &normal_noise(64, ACT, &mut rng)).unwrap();
    let mut last = first;
    for _ in 0..200 {
        last = sac.actor_update(&s, &normal_noise(64, ACT, &mut rng)).unwrap();
    }
    assert_eq!(first.base_loss, -first.entropy * sac.cfg.alpha);
    assert!(last.entropy > first.entropy + 1.0, "{} -> {}", first.entropy, last.entropy);
}

pub const CHECKS: &[(&str, fn())] = &[
    ("target_uses_the_smaller_critic_and_masks_terminals", target_uses_the_smaller_critic_and_masks_terminals),
    ("polyak_contracts_geometrically", polyak_contracts_geometrically),
    ("updates_touch_only_their_own_parameters", updates_touch_only_their_own_parameters),
    ("contrastive_steps_keep_to_their_side", contrastive_steps_keep_to_their_side),
    ("frozen_networks_receive_no_gradient", frozen_networks_receive_no_gradient),
    ("squashed_density_integrates_to_one", squashed_density_integrates_to_one),
    ("density_slices_of_a_policy_integrate_to_the_other_factors", density_slices_of_a_policy_integrate_to_the_other_factors),
    ("sampler_matches_its_density", sampler_matches_its_density),
    ("entropy_bonus_drives_entropy_up_under_flat_critics", entropy_bonus_drives_entropy_up_under_flat_critics),
];
