use proptest::prelude::*;

use mss_core::model::{
    device_conductance, logistic_gamma, schottky_current, step_expected, step_stochastic, total_current,
    transition_probabilities,
};
use mss_core::{make_stream, DeviceState, DiodeParams, MeanFieldState, MssParams, SamplerMode};

prop_compose! {
    fn params()(
        n in 1u64..=200_000,
        t_c in 1e-6f64..1e-2,
        g_a in 1e-6f64..1e-1,
        g_b in 1e-6f64..1e-1,
        v_a in -1.0f64..1.0,
        v_b in -1.0f64..1.0,
        phi in 0.0f64..=1.0,
        temperature in 50.0f64..600.0,
    ) -> MssParams {
        MssParams {
            n_switches: n,
            t_c,
            g_a_total: g_a,
            g_b_total: g_b,
            v_a,
            v_b,
            phi,
            temperature,
            ..MssParams::reference_device()
        }
    }
}

fn sampler() -> impl Strategy<Value = SamplerMode> {
    prop::sample::select(vec![SamplerMode::ExactBinomial, SamplerMode::NormalApprox, SamplerMode::Auto])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn probabilities_are_bounded_by_alpha(p in params(), v in -5.0f64..5.0, dt_frac in 0.0f64..=1.0) {
        let dt = (p.t_c * dt_frac).max(f64::MIN_POSITIVE);
        let tp = transition_probabilities(v, &p, dt).unwrap();
        prop_assert!(tp.alpha <= 1.0);
        prop_assert!((0.0..=tp.alpha).contains(&tp.p_a), "{tp:?}");
        prop_assert!((0.0..=tp.alpha).contains(&tp.p_b), "{tp:?}");
    }

    #[test]
    fn stochastic_steps_conserve_and_stay_bounded(
        p in params(),
        frac in 0.0f64..=1.0,
        seed in any::<u64>(),
        mode in sampler(),
        amplitude in 0.0f64..2.0,
    ) {
        let dt = p.t_c * 0.5;
        let (g_min, g_max) = p.conductance_bounds();
        let mut rng = make_stream(seed, 0);
        let mut state = DeviceState::with_fraction_a(frac, &p).unwrap();
        let mut g_inc = state.g_m();
        for k in 0..300 {
            let v = amplitude * (k as f64 * 0.05).sin();
            let (next, dg) = step_stochastic(&state, v, dt, &p, &mut rng, mode).unwrap();
            state = next;
            g_inc += dg;
            prop_assert_eq!(state.n_a() + state.n_b(), p.n_switches);
            prop_assert!((g_min..=g_max).contains(&state.g_m()));
            let g_ref = device_conductance(&state, &p).unwrap();
            prop_assert!((state.g_m() - g_ref).abs() <= 8.0 * f64::EPSILON * g_ref);
            prop_assert!((g_inc - g_ref).abs() <= 1e-12);
        }
    }

    #[test]
    fn mean_field_steps_conserve(p in params(), frac in 0.0f64..=1.0, v in -2.0f64..2.0) {
        let n = p.n_switches as f64;
        let mut state = MeanFieldState::with_fraction_a(frac, &p).unwrap();
        for _ in 0..200 {
            state = step_expected(&state, v, p.t_c, &p).unwrap().0;
            prop_assert!((0.0..=n).contains(&state.n_a()));
            prop_assert!((0.0..=n).contains(&state.n_b()));
            prop_assert_eq!(state.n_a() + state.n_b(), n);
        }
    }

    #[test]
    fn schottky_is_monotone(
        alpha_f in 0.0f64..1e-3,
        beta_f in 0.0f64..20.0,
        alpha_r in 0.0f64..1e-3,
        beta_r in 0.0f64..20.0,
    ) {
        let d = DiodeParams { alpha_f, beta_f, alpha_r, beta_r };
        let mut prev = f64::NEG_INFINITY;
        for k in 0..10_000 {
            let v = -2.0 + 4.0 * k as f64 / 9_999.0;
            let i = schottky_current(v, &d);
            prop_assert!(i >= prev, "decrease at v = {v}");
            prev = i;
        }
    }

    #[test]
    fn gamma_stays_in_unit_interval(v in -1e3f64..1e3, v_th in -1.0f64..1.0, beta in 1e-3f64..100.0) {
        let g = logistic_gamma(v, v_th, beta).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
        let mirrored = logistic_gamma(2.0 * v_th - v, v_th, beta).unwrap();
        prop_assert!((g + mirrored - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn pure_memory_branch_is_ohmic() {
    let p = MssParams::reference_device();
    for v in [-0.4, -0.1, 0.0, 0.2, 0.5] {
        assert_eq!(total_current(v, 1e-3, &p), v * 1e-3);
    }
}

#[test]
fn stochastic_mean_tracks_mean_field_within_three_standard_errors() {
    let p = MssParams::reference_device();
    let dt = 1e-6;
    let steps = 400;
    let seeds = 200u64;
    let drive = |k: usize| 0.5 * (2.0 * std::f64::consts::PI * 500.0 * k as f64 * dt).sin();

    let mut mf = MeanFieldState::with_fraction_a(0.5, &p).unwrap();
    for k in 0..steps {
        mf = step_expected(&mf, drive(k), dt, &p).unwrap().0;
    }
    let finals: Vec<f64> = (0..seeds)
        .map(|seed| {
            let mut rng = make_stream(seed, 3);
            let mut s = DeviceState::with_fraction_a(0.5, &p).unwrap();
            for k in 0..steps {
                s = step_stochastic(&s, drive(k), dt, &p, &mut rng, SamplerMode::Auto).unwrap().0;
            }
            s.n_a() as f64
        })
        .collect();
    let mean = finals.iter().sum::<f64>() / seeds as f64;
    let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (seeds as f64 - 1.0);
    let se = (var / seeds as f64).sqrt();
    assert!((mean - mf.n_a()).abs() <= 3.0 * se, "mean {mean}, mean-field {}, se {se}", mf.n_a());
}

#[test]
fn saturation_limits() {
    let beta = 1.0 / 0.026;
    assert_eq!(logistic_gamma(1e300, 0.27, beta).unwrap(), 0.0);
    assert_eq!(logistic_gamma(-1e300, 0.27, beta).unwrap(), 1.0);
    assert!(logistic_gamma(f64::INFINITY, 0.27, beta).is_err());
    assert!(logistic_gamma(0.0, 0.27, 0.0).is_err());
}

#[test]
fn held_voltage_mean_n_b_tracks_mean_field() {
    let p = MssParams::reference_device();
    let (dt, steps, seeds) = (1e-6, 1000, 100u64);
    let mut mf = MeanFieldState::with_fraction_a(0.5, &p).unwrap();
    for _ in 0..steps {
        mf = step_expected(&mf, 0.5, dt, &p).unwrap().0;
    }
    let finals: Vec<f64> = (0..seeds)
        .map(|seed| {
            let mut rng = make_stream(seed, 0);
            let mut s = DeviceState::with_fraction_a(0.5, &p).unwrap();
            for _ in 0..steps {
                s = step_stochastic(&s, 0.5, dt, &p, &mut rng, SamplerMode::Auto).unwrap().0;
            }
            s.n_b() as f64
        })
        .collect();
    let mean = finals.iter().sum::<f64>() / seeds as f64;
    let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (seeds as f64 - 1.0);
    let se = (var / seeds as f64).sqrt();
    assert!((mean - mf.n_b()).abs() <= 3.0 * se, "mean {mean}, mean-field {}, se {se}", mf.n_b());
}
