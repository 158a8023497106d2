use std::collections::BTreeMap;
use std::sync::Arc;

use sfde_core::{
    build_model, check_khasminskii_inequality, init_state, make_cubic_volatility_model, make_linear_delay_model,
    run_convergence, segment_error, simulate, step, z_process_eval, AssumptionConstants, BrownianGrid, ErrorNorm,
    ExperimentConfig, SfdeError, TruncationPolicy, UniformPairSampler,
};

fn cubic() -> (sfde_core::SfdeModel, TruncationPolicy) {
    let model = make_cubic_volatility_model(3.0, 10.0, 53.0).unwrap();
    let policy = TruncationPolicy::new(&model, 1.0, 1.0 / 3.0).unwrap();
    (model, policy)
}

#[test]
fn one_step_moments_match_drift_and_diffusion() {
    let (model, policy) = cubic();
    let delta = 2f64.powi(-6);
    let state = init_state(&model, &policy, delta).unwrap();
    let view = state.segment.view();
    let f = model.drift(&view)[0];
    let g = model.diffusion(&view)[0];
    let y0 = state.segment.head()[0];
    let n = 100_000;
    let increments: Vec<f64> = (0..n)
        .map(|i| {
            let noise = BrownianGrid::generate(21, i, 1, delta, 1).unwrap();
            step(&state, &model, &policy, delta, noise.increment(0)).unwrap().y_hat[0] - y0
        })
        .collect();
    let mean = increments.iter().sum::<f64>() / n as f64;
    let var = increments.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let expected_var = g * g * delta;
    let mean_se = expected_var.sqrt() / (n as f64).sqrt();
    assert!((mean - f * delta).abs() < 5.0 * mean_se, "mean {mean} vs {}", f * delta);
    assert!((var / expected_var - 1.0).abs() < 0.03, "variance {var} vs {expected_var}");
}

#[test]
fn deterministic_delay_free_decay_matches_euler_recursion() {
    let model = make_linear_delay_model(-2.0, 0.0, 0.0, 0.0).unwrap();
    let policy = TruncationPolicy::new(&model, 1.0, 1.0 / 3.0).unwrap();
    let delta = 2f64.powi(-7);
    let noise = Arc::new(BrownianGrid::generate(1, 0, 256, delta, 1).unwrap());
    let path = simulate(&model, &policy, delta, 2.0, noise, true).unwrap();
    for k in [1usize, 64, 256] {
        let expected = (1.0 - 2.0 * delta).powi(k as i32);
        assert!((path.y(k as isize)[0] - expected).abs() < 1e-13);
    }
}

#[test]
fn auxiliary_process_agrees_with_scheme_on_coarse_grid() {
    let (model, policy) = cubic();
    let delta = 2f64.powi(-5);
    let noise = Arc::new(BrownianGrid::generate(3, 4, 4 * 32 * 2, delta / 4.0, 1).unwrap());
    let path = simulate(&model, &policy, delta, 2.0, noise, true).unwrap();
    for k in 0..=path.n_steps() {
        let t = k as f64 * delta;
        assert_eq!(z_process_eval(&path, &model, t).unwrap(), path.y(k as isize));
    }
    let between = z_process_eval(&path, &model, 3.0 * delta / 4.0).unwrap();
    assert!(between[0].is_finite());
    assert!(matches!(z_process_eval(&path, &model, 0.1), Err(SfdeError::Domain(_))));
}

#[test]
fn coarse_runs_are_exact_restrictions_of_the_reference_noise() {
    let (model, policy) = cubic();
    let fine = 2f64.powi(-8);
    let noise = Arc::new(BrownianGrid::generate(8, 2, 1024, fine, 1).unwrap());
    let reference = simulate(&model, &policy, fine, 4.0, noise.clone(), true).unwrap();
    let coarse = simulate(&model, &policy, 4.0 * fine, 4.0, noise.clone(), true).unwrap();
    let explicit = simulate(&model, &policy, 4.0 * fine, 4.0, Arc::new(noise.coarsen(4).unwrap()), true).unwrap();
    assert_eq!(coarse.nodes_y(), explicit.nodes_y());
    let err = segment_error(&reference, &coarse, 4.0, ErrorNorm::SegmentSup).unwrap();
    let point = segment_error(&reference, &coarse, 4.0, ErrorNorm::TerminalPoint).unwrap();
    assert!(err > 0.0 && point <= err);

    let other = Arc::new(BrownianGrid::generate(8, 3, 1024, fine, 1).unwrap());
    let stranger = simulate(&model, &policy, 4.0 * fine, 4.0, other, true).unwrap();
    assert!(matches!(
        segment_error(&reference, &stranger, 4.0, ErrorNorm::SegmentSup),
        Err(SfdeError::Coupling(_))
    ));
}

#[test]
fn ladder_validation() {
    let small = |step_exps: Vec<u32>, ref_exp: u32| ExperimentConfig {
        step_exps,
        ref_exp,
        samples: 2,
        horizon: 2.0,
        ..ExperimentConfig::default()
    };
    assert_eq!(small(vec![5, 3, 4], 6).deltas(), vec![0.125, 0.0625, 0.03125]);
    assert!(matches!(run_convergence(&small(vec![3, 4], 4)), Err(SfdeError::Config(_))));
    assert!(matches!(run_convergence(&small(vec![3, 3], 6)), Err(SfdeError::Config(_))));
    let report = run_convergence(&small(vec![3, 4, 5], 6)).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows.windows(2).all(|w| w[0].delta > w[1].delta));
    assert!(report.rows.iter().all(|r| r.samples_used == 2 && r.rms_error > 0.0));
}

#[test]
fn unknown_model_parameters_are_rejected() {
    let mut params = BTreeMap::new();
    params.insert("lambda".to_string(), 1.0);
    assert!(matches!(build_model("cubic-vol", &params), Err(SfdeError::Config(_))));
    assert!(matches!(build_model("nope", &BTreeMap::new()), Err(SfdeError::Config(_))));
}

fn delay_constants(q: f64, lambda: f64, mu: f64, sigma1: f64) -> AssumptionConstants {
    let alpha0 = 2.0 * lambda.abs() + 2.0 * mu.abs() + (q - 1.0) * 2.0 * sigma1 * sigma1 + 1.0;
    AssumptionConstants::new(q, alpha0, 1.0, 0.5, 1.0, 1.0).unwrap()
}

#[test]
fn verifier_accepts_delay_free_linear_model() {
    let model = make_linear_delay_model(-1.0, 0.0, 0.1, 0.0).unwrap();
    let constants = delay_constants(27.0, -1.0, 0.0, 0.0);
    let mut sampler = UniformPairSampler::for_model(&model, 8, 5.0, 1).unwrap();
    let report = check_khasminskii_inequality(&model, &constants, &mut sampler, 10_000).unwrap();
    assert_eq!(report.violations, 0);
}

// The right-hand side only sees the delay through ∫|ψ - ψ̄|², so a pair that
// differs only near θ = -τ makes the σ₁ term on the left win.
#[test]
fn verifier_flags_point_delay_terms() {
    let model = make_linear_delay_model(-1.0, 0.3, 0.1, 0.5).unwrap();
    let constants = delay_constants(27.0, -1.0, 0.3, 0.5);
    let mut sampler = UniformPairSampler::for_model(&model, 8, 5.0, 1).unwrap();
    let report = check_khasminskii_inequality(&model, &constants, &mut sampler, 10_000).unwrap();
    assert!(report.violations > 0);
    assert!(report.worst_margin > 0.0);
}

#[test]
fn truncation_keeps_large_initial_data_bounded() {
    let model = build_model("cubic-vol", &[("xi".to_string(), 10.0)].into_iter().collect()).unwrap();
    let (_, policy) = cubic();
    let delta = 0.125;
    let noise = Arc::new(BrownianGrid::generate(42, 0, 80, delta, 1).unwrap());
    let radius = policy.radius(delta).unwrap();
    let path = simulate(&model, &policy, delta, 10.0, noise.clone(), true).unwrap();
    assert!((0..path.nodes_y().len()).all(|j| path.nodes_y().value(j)[0].abs() <= radius));
    assert!(matches!(simulate(&model, &policy, delta, 10.0, noise, false), Err(SfdeError::BlowUp { .. })));
}
