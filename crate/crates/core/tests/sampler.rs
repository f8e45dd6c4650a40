use proptest::prelude::*;

use mss_core::stochastics::sample_transitions;
use mss_core::{make_stream, SamplerMode};

fn moments(n: u64, p: f64, draws: usize, mode: SamplerMode, stream: u64) -> (f64, f64) {
    let mut rng = make_stream(77, stream);
    let xs: Vec<f64> = (0..draws)
        .map(|_| sample_transitions(n, p, &mut rng, mode).unwrap() as f64)
        .collect();
    let mean = xs.iter().sum::<f64>() / draws as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
    (mean, var)
}

#[test]
fn normal_and_exact_agree_at_large_n() {
    let (m_exact, v_exact) = moments(10_000, 0.3, 100_000, SamplerMode::ExactBinomial, 0);
    let (m_normal, v_normal) = moments(10_000, 0.3, 100_000, SamplerMode::NormalApprox, 1);
    assert!((m_exact - m_normal).abs() / m_exact < 0.02);
    assert!((v_exact - v_normal).abs() / v_exact < 0.02, "{v_exact} vs {v_normal}");
    assert!((v_exact - 2100.0).abs() / 2100.0 < 0.02);
}

#[test]
fn exact_sampler_at_small_n_matches_binomial_moments() {
    // Auto takes the exact path here (n <= 128)
    let (mean, var) = moments(20, 0.1, 200_000, SamplerMode::Auto, 2);
    assert!((mean - 2.0).abs() < 0.01, "{mean}");
    assert!((var - 1.8).abs() < 0.03, "{var}");
}

#[test]
fn streams_are_independent_of_draw_history_elsewhere() {
    let mut a = make_stream(5, 1);
    let mut other = make_stream(5, 0);
    let mut b = make_stream(5, 1);
    let xs: Vec<u64> = (0..100)
        .map(|_| {
            sample_transitions(500, 0.4, &mut other, SamplerMode::Auto).unwrap();
            sample_transitions(500, 0.4, &mut a, SamplerMode::Auto).unwrap()
        })
        .collect();
    let ys: Vec<u64> = (0..100)
        .map(|_| sample_transitions(500, 0.4, &mut b, SamplerMode::Auto).unwrap())
        .collect();
    assert_eq!(xs, ys);
}

proptest! {
    #[test]
    fn draws_stay_in_support(n in 0u64..5_000_000, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut rng = make_stream(seed, 0);
        for mode in [SamplerMode::ExactBinomial, SamplerMode::NormalApprox, SamplerMode::Auto] {
            let k = sample_transitions(n, p, &mut rng, mode).unwrap();
            prop_assert!(k <= n);
        }
    }
}
