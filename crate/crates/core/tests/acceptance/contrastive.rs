use dexgrasp::contrastive::{contrastive_loss, ClError, DenominatorMode};
use dexgrasp::nn::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for k in 0..a.len() {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// `−(1/B) Σᵢ log(exp(sᵢ/τ) / Σⱼ exp(sⱼ/τ))` with `sᵢ` the cosine between
/// row `i` of each side, written out term by term.
fn positives_brute(he: &[Vec<f64>], ha: &[Vec<f64>], tau: f64) -> f64 {
    let b = he.len();
    let s: Vec<f64> = (0..b).map(|i| cosine(&he[i], &ha[i])).collect();
    let mut denom = 0.0;
    for j in 0..b {
        denom += (s[j] / tau).exp();
    }
    let mut total = 0.0;
    for i in 0..b {
        total += ((s[i] / tau).exp() / denom).ln();
    }
    -total / b as f64
}

/// InfoNCE over the full similarity matrix.
fn standard_brute(he: &[Vec<f64>], ha: &[Vec<f64>], tau: f64) -> f64 {
    let b = he.len();
    let mut total = 0.0;
    for i in 0..b {
        let mut denom = 0.0;
        for j in 0..b {
            denom += (cosine(&he[i], &ha[j]) / tau).exp();
        }
        total += ((cosine(&he[i], &ha[i]) / tau).exp() / denom).ln();
    }
    -total / b as f64
}

fn random_rows(b: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..b).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
}

fn tensor(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

fn positives_mode_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..100 {
        let b = [1, 2, 8, 64][k % 4];
        let d = [3, 16, 128][k % 3];
        let tau = [0.1, 0.5, 1.0, 0.05][k % 4];
        let he = random_rows(b, d, &mut rng);
        let ha = random_rows(b, d, &mut rng);
        let got = contrastive_loss(&tensor(&he), &tensor(&ha), tau, DenominatorMode::Positives).unwrap();
        let want = positives_brute(&he, &ha, tau);
        assert!((got - want).abs() <= 1e-10, "batch {k} (B={b}): {got} vs {want}");
    }
}

fn standard_mode_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for k in 0..40 {
        let b = [1, 2, 8, 64][k % 4];
        let he = random_rows(b, 16, &mut rng);
        let ha = random_rows(b, 16, &mut rng);
        let got = contrastive_loss(&tensor(&he), &tensor(&ha), 0.1, DenominatorMode::Standard).unwrap();
        let want = standard_brute(&he, &ha, 0.1);
        assert!((got - want).abs() <= 1e-10, "batch {k} (B={b}): {got} vs {want}");
    }
}

fn single_pair_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let he = random_rows(1, 8, &mut rng);
        let ha = random_rows(1, 8, &mut rng);
        assert_eq!(contrastive_loss(&tensor(&he), &tensor(&ha), 0.1, DenominatorMode::Positives).unwrap(), 0.0);
    }
}

fn equal_similarities_give_log_b() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for b in [1usize, 2, 8, 64, 100] {
        // every pair identical up to a per-row rotation of coordinates keeps
        // all cosines equal
        let base = random_rows(1, 6, &mut rng).remove(0);
        let other = random_rows(1, 6, &mut rng).remove(0);
        let he: Vec<Vec<f64>> = (0..b).map(|i| rotate(&base, i)).collect();
        let ha: Vec<Vec<f64>> = (0..b).map(|i| rotate(&other, i)).collect();
        let l = contrastive_loss(&tensor(&he), &tensor(&ha), 0.1, DenominatorMode::Positives).unwrap();
        assert!((l - (b as f64).ln()).abs() <= 1e-10, "B={b}: {l}");
    }
}

fn rotate(v: &[f64], by: usize) -> Vec<f64> {
    (0..v.len()).map(|k| v[(k + by) % v.len()]).collect()
}

fn zero_rows_are_rejected_by_name() {
    let he = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
    let ha = vec![vec![1.0, 1.0], vec![1.0, 0.5]];
    match contrastive_loss(&tensor(&he), &tensor(&ha), 0.1, DenominatorMode::Positives) {
        Err(ClError::ZeroNorm { which, row }) => assert_eq!((which, row), ("expert", 1)),
        other => panic!("expected a zero-norm error, got {other:?}"),
    }
    match contrastive_loss(&tensor(&ha), &tensor(&he), 0.1, DenominatorMode::Positives) {
        Err(ClError::ZeroNorm { which, row }) => assert_eq!((which, row), ("actor", 1)),
        other => panic!("expected a zero-norm error, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    fn positive_row_scaling_is_invariant(
        seed in any::<u64>(),
        b in 1usize..20,
        scales in proptest::collection::vec(1e-3f64..1e3, 40),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let he = random_rows(b, 8, &mut rng);
        let ha = random_rows(b, 8, &mut rng);
        let he2: Vec<Vec<f64>> = he.iter().enumerate().map(|(i, r)| r.iter().map(|v| v * scales[i]).collect()).collect();
        let ha2: Vec<Vec<f64>> = ha.iter().enumerate().map(|(i, r)| r.iter().map(|v| v * scales[20 + i]).collect()).collect();
        for mode in [DenominatorMode::Positives, DenominatorMode::Standard] {
            let l1 = contrastive_loss(&tensor(&he), &tensor(&ha), 0.1, mode).unwrap();
            let l2 = contrastive_loss(&tensor(&he2), &tensor(&ha2), 0.1, mode).unwrap();
            prop_assert!((l1 - l2).abs() <= 1e-10, "{:?}: {} vs {}", mode, l1, l2);
        }
    }

    fn positives_loss_is_bounded(seed in any::<u64>(), b in 1usize..32) {
        // The mean of log-softmax terms is at most ln(1/B) by Jensen, with
        // equality exactly when every similarity is the same. The mean also
        // sits within the score spread 2/τ of the log-sum-exp.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let he = random_rows(b, 8, &mut rng);
        let ha = random_rows(b, 8, &mut rng);
        let l = contrastive_loss(&tensor(&he), &tensor(&ha), 0.1, DenominatorMode::Positives).unwrap();
        prop_assert!(l >= (b as f64).ln() - 1e-10);
        prop_assert!(l <= (b as f64).ln() + 20.0 + 1e-9);
    }
}

pub const CHECKS: &[(&str, fn())] = &[
    ("positives_mode_matches_brute_force", positives_mode_matches_brute_force),
    ("standard_mode_matches_brute_force", standard_mode_matches_brute_force),
    ("single_pair_is_zero", single_pair_is_zero),
    ("equal_similarities_give_log_b", equal_similarities_give_log_b),
    ("zero_rows_are_rejected_by_name", zero_rows_are_rejected_by_name),
    ("positive_row_scaling_is_invariant", positive_row_scaling_is_invariant),
    ("positives_loss_is_bounded", positives_loss_is_bounded),
];
