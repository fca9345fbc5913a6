//! Reverse-mode gradients of every training loss against central finite
//! differences computed from the plain forward passes.

use dexgrasp::bc::{bc_loss, bc_loss_grad};
use dexgrasp::contrastive::{contrastive_loss, ClConfig, Contrastive, DenominatorMode, ProjectionHead};
use dexgrasp::nn::{Activation, Mlp, Tape, Tensor};
use dexgrasp::sac::{critic_loss_grad, normal_noise, record_actor_objective, Batch, PolicyNet, QNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REL_TOL: f64 = 1e-4;
const H: f64 = 1e-6;
const PROBES: usize = 60;

fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Compares `grads` (one tensor per parameter, in `params_mut` order) with
/// central differences at randomly chosen coordinates. Returns the worst
/// relative error, measured against the larger of the two magnitudes.
fn check<M>(
    label: &str,
    model: &mut M,
    grads: &[Tensor],
    params_mut: impl Fn(&mut M) -> Vec<&mut Tensor>,
    loss: impl Fn(&M) -> f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let sizes: Vec<usize> = params_mut(model).iter().map(|p| p.len()).collect();
    assert_eq!(sizes.len(), grads.len(), "{label}: gradient count");
    let total: usize = sizes.iter().sum();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..PROBES {
        let mut flat = rng.gen_range(0..total);
        let mut p = 0;
        while flat >= sizes[p] {
            flat -= sizes[p];
            p += 1;
        }
        let orig = params_mut(model)[p].data()[flat];
        params_mut(model)[p].data_mut()[flat] = orig + H;
        let up = loss(model);
        params_mut(model)[p].data_mut()[flat] = orig - H;
        let down = loss(model);
        params_mut(model)[p].data_mut()[flat] = orig;
        let fd = (up - down) / (2.0 * H);
        let g = grads[p].data()[flat];
        // Rounding in the loss puts a floor of about 1e-9 under the
        // difference quotient, so tiny components are only checked absolutely.
        let scale = g.abs().max(fd.abs());
        if scale < 1e-4 {
            assert!((g - fd).abs() < 1e-8, "{label}: param {p}[{flat}] autodiff {g} vs fd {fd}");
            continue;
        }
        checked += 1;
        worst = worst.max((g - fd).abs() / scale);
    }
    assert!(checked >= 10, "{label}: only {checked} informative coordinates");
    assert!(worst < REL_TOL, "{label}: worst relative error {worst:e}");
    worst
}

fn small_batch(b: usize, obs: usize, act: usize, rng: &mut ChaCha8Rng) -> Batch {
    Batch {
        states: uniform(b, obs, -1.0, 1.0, rng),
        actions: uniform(b, act, -0.99, 0.99, rng),
        rewards: Tensor::vector((0..b).map(|_| rng.gen_range(-5.0..5.0)).collect()),
        next_states: uniform(b, obs, -1.0, 1.0, rng),
        dones: Tensor::vector((0..b).map(|_| f64::from(rng.gen_bool(0.2))).collect()),
    }
}

/// Gives the scale head a state dependence so its weights get gradient.
fn jitter_log_std(actor: &mut PolicyNet, rng: &mut ChaCha8Rng) {
    for p in actor.log_std_head.params_mut() {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
}

struct Shape {
    seed: u64,
    batch: usize,
    obs: usize,
    act: usize,
    hidden: &'static [usize],
}

const SHAPES: [Shape; 5] = [
    Shape { seed: 1, batch: 1, obs: 3, act: 1, hidden: &[5] },
    Shape { seed: 2, batch: 4, obs: 6, act: 2, hidden: &[8, 8] },
    Shape { seed: 3, batch: 7, obs: 20, act: 8, hidden: &[16, 16] },
    Shape { seed: 4, batch: 16, obs: 5, act: 3, hidden: &[12, 6] },
    Shape { seed: 5, batch: 32, obs: 10, act: 4, hidden: &[24] },
];

fn critic_loss_gradients() {
    for sh in &SHAPES {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + sh.seed);
        let mut q = QNet::with_sizes(sh.obs, sh.act, sh.hidden, &mut rng);
        let batch = small_batch(sh.batch, sh.obs, sh.act, &mut rng);
        let q_bar = Tensor::vector((0..sh.batch).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let (_, grads) = critic_loss_grad(&q, &batch, &q_bar).unwrap();
        let loss = |q: &QNet| {
            let pred = q.forward(&batch.states, &batch.actions).unwrap();
            let n = pred.len() as f64;
            0.5 * pred.data().iter().zip(q_bar.data()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n
        };
        check(&format!("critic seed {}", sh.seed), &mut q, &grads, |q| q.mlp.params_mut(), loss, &mut rng);
    }
}

fn plain_actor_loss(actor: &PolicyNet, q1: &QNet, q2: &QNet, s: &Tensor, eps: &Tensor, alpha: f64) -> f64 {
    let (a, logp) = actor.sample(s, eps).unwrap();
    let v1 = q1.forward(s, &a).unwrap();
    let v2 = q2.forward(s, &a).unwrap();
    let n = logp.len() as f64;
    (0..logp.len())
        .map(|i| alpha * logp.data()[i] - v1.data()[i].min(v2.data()[i]))
        .sum::<f64>()
        / n
}

fn actor_loss_gradients() {
    for (k, sh) in SHAPES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + sh.seed);
        let mut actor = PolicyNet::with_sizes(sh.obs, sh.hidden, sh.act, &mut rng);
        jitter_log_std(&mut actor, &mut rng);
        let q1 = QNet::with_sizes(sh.obs, sh.act, sh.hidden, &mut rng);
        let q2 = QNet::with_sizes(sh.obs, sh.act, sh.hidden, &mut rng);
        let s = uniform(sh.batch, sh.obs, -1.0, 1.0, &mut rng);
        let eps = normal_noise(sh.batch, sh.act, &mut rng);
        let alpha = [1.0, 0.2, 0.0, 2.5, 1.0][k];
        let mut tape = Tape::new();
        let bp = actor.bind(&mut tape, true);
        let (base, _) = record_actor_objective(&mut tape, &bp, &q1, &q2, &s, &eps, alpha).unwrap();
        let g = tape.backward(base).unwrap();
        let grads = bp.grads(&g);
        check(
            &format!("actor seed {}", sh.seed),
            &mut actor,
            &grads,
            |a| a.params_mut(),
            |a| plain_actor_loss(a, &q1, &q2, &s, &eps, alpha),
            &mut rng,
        );
    }
}

/// Trunk and mean head only, which is what behavior cloning trains.
struct BcParams(PolicyNet);

impl BcParams {
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.0.trunk.params_mut();
        v.extend(self.0.mean_head.params_mut());
        v
    }
}

fn bc_loss_gradients() {
    for sh in &SHAPES {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + sh.seed);
        let mut actor = BcParams(PolicyNet::with_sizes(sh.obs, sh.hidden, sh.act, &mut rng));
        let s = uniform(sh.batch, sh.obs, -1.0, 1.0, &mut rng);
        let a = uniform(sh.batch, sh.act, -1.0, 1.0, &mut rng);
        let (l, grads) = bc_loss_grad(&actor.0, &s, &a).unwrap();
        assert_eq!(l, bc_loss(&actor.0, &s, &a).unwrap());
        check(
            &format!("bc seed {}", sh.seed),
            &mut actor,
            &grads,
            BcParams::params_mut,
            |m| bc_loss(&m.0, &s, &a).unwrap(),
            &mut rng,
        );
    }
}

fn small_head(obs: usize, act: usize, hidden: &[usize], embed: usize, rng: &mut ChaCha8Rng) -> ProjectionHead {
    let mut sizes = vec![obs + act];
    sizes.extend_from_slice(hidden);
    sizes.push(embed);
    ProjectionHead {
        mlp: Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng),
    }
}

fn contrastive_head_gradients() {
    for mode in [DenominatorMode::Positives, DenominatorMode::Standard] {
        // A single row makes the loss identically zero.
        for sh in &SHAPES[1..] {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + sh.seed);
            let actor = PolicyNet::with_sizes(sh.obs, sh.hidden, sh.act, &mut rng);
            let head = small_head(sh.obs, sh.act, sh.hidden, 6, &mut rng);
            let cfg = ClConfig {
                denominator_mode: mode,
                ..ClConfig::default()
            };
            let mut cl = Contrastive::from_head(cfg, head);
            let se = uniform(sh.batch, sh.obs, -1.0, 1.0, &mut rng);
            let ae = uniform(sh.batch, sh.act, -1.0, 1.0, &mut rng);
            let eps = normal_noise(sh.batch, sh.act, &mut rng);
            let (_, grads) = cl.head_loss_grad(&actor, &se, &ae, &eps).unwrap();
            let (aa, _) = actor.sample(&se, &eps).unwrap();
            let tau = cl.cfg.tau_cl;
            check(
                &format!("head {mode:?} seed {}", sh.seed),
                &mut cl,
                &grads,
                |c| c.head.mlp.params_mut(),
                |c| contrastive_loss(&c.head.embed(&se, &ae).unwrap(), &c.head.embed(&se, &aa).unwrap(), tau, mode).unwrap(),
                &mut rng,
            );
        }
    }
}

fn contrastive_actor_gradients() {
    for sh in &SHAPES[1..] {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + sh.seed);
        let mut actor = PolicyNet::with_sizes(sh.obs, sh.hidden, sh.act, &mut rng);
        jitter_log_std(&mut actor, &mut rng);
        let cl = Contrastive::from_head(ClConfig::default(), small_head(sh.obs, sh.act, sh.hidden, 5, &mut rng));
        let se = uniform(sh.batch, sh.obs, -1.0, 1.0, &mut rng);
        let ae = uniform(sh.batch, sh.act, -1.0, 1.0, &mut rng);
        let eps = normal_noise(sh.batch, sh.act, &mut rng);
        let mut tape = Tape::new();
        let bp = actor.bind(&mut tape, true);
        let l = cl.record_actor_term(&mut tape, &bp, &se, &ae, &eps).unwrap();
        let g = tape.backward(l).unwrap();
        let grads = bp.grads(&g);
        let he = cl.head.embed(&se, &ae).unwrap();
        check(
            &format!("actor contrastive seed {}", sh.seed),
            &mut actor,
            &grads,
            |a| a.params_mut(),
            |a| {
                let (aa, _) = a.sample(&se, &eps).unwrap();
                contrastive_loss(&he, &cl.head.embed(&se, &aa).unwrap(), cl.cfg.tau_cl, cl.cfg.denominator_mode).unwrap()
            },
            &mut rng,
        );
    }
}

/// The combined objective the training loop differentiates.
fn actor_plus_weighted_contrastive_gradients() {
    for sh in &SHAPES[1..4] {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + sh.seed);
        let mut actor = PolicyNet::with_sizes(sh.obs, sh.hidden, sh.act, &mut rng);
        jitter_log_std(&mut actor, &mut rng);
        let q1 = QNet::with_sizes(sh.obs, sh.act, sh.hidden, &mut rng);
        let q2 = QNet::with_sizes(sh.obs, sh.act, sh.hidden, &mut rng);
        let cl = Contrastive::from_head(ClConfig::default(), small_head(sh.obs, sh.act, sh.hidden, 4, &mut rng));
        let s = uniform(sh.batch, sh.obs, -1.0, 1.0, &mut rng);
        let eps = normal_noise(sh.batch, sh.act, &mut rng);
        let se = uniform(sh.batch, sh.obs, -1.0, 1.0, &mut rng);
        let ae = uniform(sh.batch, sh.act, -1.0, 1.0, &mut rng);
        let eps_cl = normal_noise(sh.batch, sh.act, &mut rng);
        let xi4 = 0.5;
        let mut tape = Tape::new();
        let bp = actor.bind(&mut tape, true);
        let (base, _) = record_actor_objective(&mut tape, &bp, &q1, &q2, &s, &eps, 1.0).unwrap();
        let aux = cl.record_actor_term(&mut tape, &bp, &se, &ae, &eps_cl).unwrap();
        let w = tape.scale(aux, xi4);
        let total = tape.add(base, w);
        let g = tape.backward(total).unwrap();
        let grads = bp.grads(&g);
        let he = cl.head.embed(&se, &ae).unwrap();
        check(
            &format!("actor total seed {}", sh.seed),
            &mut actor,
            &grads,
            |a| a.params_mut(),
            |a| {
                let (aa, _) = a.sample(&se, &eps_cl).unwrap();
                let l_cl = contrastive_loss(&he, &cl.head.embed(&se, &aa).unwrap(), cl.cfg.tau_cl, cl.cfg.denominator_mode)
                    .unwrap();
                plain_actor_loss(a, &q1, &q2, &s, &eps, 1.0) + xi4 * l_cl
            },
            &mut rng,
        );
    }
}

pub const CHECKS: &[(&str, fn())] = &[
    ("critic_loss_gradients", critic_loss_gradients),
    ("actor_loss_gradients", actor_loss_gradients),
    ("bc_loss_gradients", bc_loss_gradients),
    ("contrastive_head_gradients", contrastive_head_gradients),
    ("contrastive_actor_gradients", contrastive_actor_gradients),
    ("actor_plus_weighted_contrastive_gradients", actor_plus_weighted_contrastive_gradients),
];
