//! The truncated Euler-Maruyama recursion
//!
//! ```text
//! Ŷ(kΔ) = ξ(kΔ),                                   k = -m, …, 0
//! Y(kΔ) = π_Δ(Ŷ(kΔ))
//! Ŷ((k+1)Δ) = Y(kΔ) + f(Y_{kΔ})Δ + g(Y_{kΔ})ΔB_{kΔ},  k = 0, 1, …
//! ```
//!
//! where `Y_{kΔ}` is the linear interpolant of `Y((k-m)Δ), …, Y(kΔ)` and
//! `Δ = τ/m`. With truncation disabled `π_Δ` is the identity and the
//! recursion is the classical EM scheme.

use std::sync::Arc;

use crate::error::{Result, SfdeError};
use crate::model::SfdeModel;
use crate::noise::BrownianGrid;
use crate::segment::{euclidean_norm, GridFunction, Segment, SegmentView};
use crate::truncation::{pi_delta_in_place, TruncationPolicy};

/// Any `|Y(kΔ)|` above this counts as a blow-up.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Relative tolerance for "is a grid multiple" checks.
const GRID_TOLERANCE: f64 = 1e-12;

/// `m` with `m·Δ = τ`, or a configuration error when `Δ` does not divide `τ`
/// or lies outside `(0, 1]`.
pub fn delay_steps(tau: f64, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(SfdeError::Config(format!("step size {delta} outside (0, 1]")));
    }
    let m = (tau / delta).round();
    if m < 1.0 || (m * delta - tau).abs() > GRID_TOLERANCE * tau {
        return Err(SfdeError::Config(format!(
            "step size {delta} does not divide the delay {tau}"
        )));
    }
    Ok(m as usize)
}

/// `N` with `N·Δ = t`, or `None` when `t` is off the grid.
pub(crate) fn grid_index(t: f64, delta: f64) -> Option<usize> {
    if !(t >= 0.0) {
        return None;
    }
    let n = (t / delta).round();
    ((n * delta - t).abs() <= GRID_TOLERANCE * delta.max(t)).then_some(n as usize)
}

/// The scheme after `k` steps: `Y_{kΔ}` and the pre-truncation value `Ŷ(kΔ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub k: usize,
    pub segment: Segment,
    pub y_hat: Vec<f64>,
}

fn initial_history(model: &SfdeModel, delta: f64, m: usize) -> Result<Vec<f64>> {
    let n1 = model.dim_state();
    let mut out = Vec::with_capacity((m + 1) * n1);
    for i in 0..=m {
        let theta = -((m - i) as f64) * delta;
        let v = model.initial(theta);
        if v.len() != n1 || v.iter().any(|x| !x.is_finite()) {
            return Err(SfdeError::Config(format!("initial data is invalid at theta = {theta}")));
        }
        out.extend_from_slice(&v);
    }
    Ok(out)
}

/// `Ŷ(iΔ) = ξ(iΔ)` and `Y(iΔ) = π_Δ(ξ(iΔ))` for `i = -m, …, 0`.
pub fn init_state(model: &SfdeModel, policy: &TruncationPolicy, delta: f64) -> Result<SchemeState> {
    let m = delay_steps(model.tau(), delta)?;
    let radius = policy.radius(delta)?;
    let n1 = model.dim_state();
    let history = initial_history(model, delta, m)?;
    let y_hat = history[m * n1..].to_vec();
    let mut nodes = history;
    nodes.chunks_exact_mut(n1).for_each(|x| pi_delta_in_place(x, radius));
    Ok(SchemeState {
        k: 0,
        segment: Segment::from_flat(nodes, delta, n1)?,
        y_hat,
    })
}

/// Scratch buffers for one step.
struct Workspace {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
}

impl Workspace {
    fn new(model: &SfdeModel) -> Self {
        Workspace {
            drift: vec![0.0; model.dim_state()],
            diffusion: vec![0.0; model.dim_state() * model.dim_noise()],
        }
    }
}

/// Writes `Ŷ((k+1)Δ)` into `y_hat` and `Y((k+1)Δ)` into `y`. `next_index` is
/// the step number reported on blow-up.
#[allow(clippy::too_many_arguments)]
fn advance(
    model: &SfdeModel,
    segment: &SegmentView<'_>,
    delta: f64,
    radius: f64,
    d_b: &[f64],
    ws: &mut Workspace,
    y_hat: &mut [f64],
    y: &mut [f64],
    next_index: usize,
) -> Result<()> {
    model.drift_into(segment, &mut ws.drift);
    model.diffusion_into(segment, &mut ws.diffusion);
    let n2 = d_b.len();
    let current = segment.head();
    for (i, out) in y_hat.iter_mut().enumerate() {
        let row = &ws.diffusion[i * n2..(i + 1) * n2];
        let noise: f64 = row.iter().zip(d_b).map(|(g, b)| g * b).sum();
        *out = current[i] + ws.drift[i] * delta + noise;
    }
    if y_hat.iter().any(|v| !v.is_finite()) {
        return Err(SfdeError::BlowUp { step: next_index });
    }
    y.copy_from_slice(y_hat);
    pi_delta_in_place(y, radius);
    if euclidean_norm(y) > BLOW_UP_THRESHOLD {
        return Err(SfdeError::BlowUp { step: next_index });
    }
    Ok(())
}

/// One truncated EM step driven by the increment `d_b = B((k+1)Δ) - B(kΔ)`.
pub fn step(
    state: &SchemeState,
    model: &SfdeModel,
    policy: &TruncationPolicy,
    delta: f64,
    d_b: &[f64],
) -> Result<SchemeState> {
    if d_b.len() != model.dim_noise() || d_b.iter().any(|v| !v.is_finite()) {
        return Err(SfdeError::Domain("Brownian increment must be finite with dim_noise entries".into()));
    }
    let radius = policy.radius(delta)?;
    let n1 = model.dim_state();
    let mut ws = Workspace::new(model);
    let mut y_hat = vec![0.0; n1];
    let mut y = vec![0.0; n1];
    advance(
        model,
        &state.segment.view(),
        delta,
        radius,
        d_b,
        &mut ws,
        &mut y_hat,
        &mut y,
        state.k + 1,
    )?;
    Ok(SchemeState {
        k: state.k + 1,
        segment: state.segment.shift_append(&y)?,
        y_hat,
    })
}

/// A full simulated path `{Y(kΔ)}` and `{Ŷ(kΔ)}` for `k = -m, …, N`,
/// together with the Brownian sample that drove it.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    model_id: String,
    delta: f64,
    m: usize,
    n_steps: usize,
    radius: f64,
    truncated: bool,
    y: GridFunction,
    y_hat: GridFunction,
    noise: Arc<BrownianGrid>,
    noise_factor: usize,
}

impl SimulatedPath {
    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Nodes per delay interval.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of steps `N` beyond `t = 0`.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.delta
    }

    pub fn tau(&self) -> f64 {
        self.m as f64 * self.delta
    }

    /// `R(Δ)` used for this path (`∞` when untruncated).
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn dim(&self) -> usize {
        self.y.dim()
    }

    pub fn nodes_y(&self) -> &GridFunction {
        &self.y
    }

    pub fn nodes_y_hat(&self) -> &GridFunction {
        &self.y_hat
    }

    /// The Brownian sample at its finest resolution.
    pub fn noise(&self) -> &Arc<BrownianGrid> {
        &self.noise
    }

    /// `Δ / Δ_fine` of the driving noise.
    pub fn noise_factor(&self) -> usize {
        self.noise_factor
    }

    /// `Y(kΔ)` for `k = -m, …, N`.
    pub fn y(&self, k: isize) -> &[f64] {
        self.y.value((k + self.m as isize) as usize)
    }

    pub fn y_hat(&self, k: isize) -> &[f64] {
        self.y_hat.value((k + self.m as isize) as usize)
    }

    /// `⌊t/Δ⌋·Δ`.
    pub fn floor_grid_time(&self, t: f64) -> f64 {
        (t / self.delta).floor() * self.delta
    }

    /// `Y_{kΔ}` as a borrowed segment, `k = 0, …, N`.
    pub fn segment_view(&self, k: usize) -> SegmentView<'_> {
        let d = self.dim();
        SegmentView::from_parts(&self.y.values_flat()[k * d..(k + self.m + 1) * d], self.delta, d)
    }

    /// The step process `Ȳ_t = Y_{⌊t/Δ⌋Δ}` for `t ∈ [0, T]`.
    pub fn step_segment(&self, t: f64) -> Result<SegmentView<'_>> {
        if !(t >= 0.0 && t <= self.horizon() * (1.0 + GRID_TOLERANCE)) {
            return Err(SfdeError::Domain(format!("t = {t} outside [0, {}]", self.horizon())));
        }
        let k = grid_index(t, self.delta).unwrap_or((t / self.delta).floor() as usize);
        Ok(self.segment_view(k.min(self.n_steps)))
    }
}

/// Simulates `k = 0, …, N` with `N·Δ = horizon`.
///
/// `noise` may be finer than `Δ` by an integer factor; it is aggregated to
/// `Δ` with [`BrownianGrid::coarsen`]. With `truncate = false` the
/// projection is skipped (classical EM).
pub fn simulate(
    model: &SfdeModel,
    policy: &TruncationPolicy,
    delta: f64,
    horizon: f64,
    noise: Arc<BrownianGrid>,
    truncate: bool,
) -> Result<SimulatedPath> {
    let m = delay_steps(model.tau(), delta)?;
    let n_steps = grid_index(horizon, delta).ok_or_else(|| {
        SfdeError::Config(format!("horizon {horizon} is not a multiple of the step {delta}"))
    })?;
    if noise.dim_noise() != model.dim_noise() {
        return Err(SfdeError::Config(format!(
            "noise has dimension {}, model expects {}",
            noise.dim_noise(),
            model.dim_noise()
        )));
    }
    let ratio = delta / noise.delta_fine();
    let factor = ratio.round();
    if factor < 1.0 || (factor - ratio).abs() > 1e-9 * ratio {
        return Err(SfdeError::Config(format!(
            "noise step {} does not divide the step {delta}",
            noise.delta_fine()
        )));
    }
    let factor = factor as usize;
    if noise.len() < n_steps * factor {
        return Err(SfdeError::Config(format!(
            "noise has {} increments, need {}",
            noise.len(),
            n_steps * factor
        )));
    }
    let coarse;
    let increments: &BrownianGrid = if n_steps == 0 || (factor == 1 && noise.len() == n_steps) {
        &noise
    } else {
        let prefix = if noise.len() == n_steps * factor {
            noise.coarsen(factor)?
        } else {
            let d = noise.dim_noise();
            BrownianGrid::from_increments(
                noise.delta_fine(),
                d,
                noise.increments_flat()[..n_steps * factor * d].to_vec(),
            )?
            .coarsen(factor)?
        };
        coarse = prefix;
        &coarse
    };

    let radius = if truncate { policy.radius(delta)? } else { f64::INFINITY };
    let n1 = model.dim_state();
    let total = m + n_steps + 1;
    let mut y_hat = initial_history(model, delta, m)?;
    y_hat.resize(total * n1, 0.0);
    let mut y = y_hat.clone();
    y[..(m + 1) * n1]
        .chunks_exact_mut(n1)
        .for_each(|x| pi_delta_in_place(x, radius));

    let mut ws = Workspace::new(model);
    for k in 0..n_steps {
        let (done, rest) = y.split_at_mut((k + m + 1) * n1);
        let segment = SegmentView::from_parts(&done[k * n1..], delta, n1);
        advance(
            model,
            &segment,
            delta,
            radius,
            increments.increment(k),
            &mut ws,
            &mut y_hat[(k + m + 1) * n1..(k + m + 2) * n1],
            &mut rest[..n1],
            k + 1,
        )?;
    }

    let times: Vec<f64> = (0..total).map(|j| (j as f64 - m as f64) * delta).collect();
    Ok(SimulatedPath {
        model_id: model.id().to_string(),
        delta,
        m,
        n_steps,
        radius,
        truncated: truncate,
        y: GridFunction::from_parts_unchecked(times.clone(), y, n1),
        y_hat: GridFunction::from_parts_unchecked(times, y_hat, n1),
        noise,
        noise_factor: factor,
    })
}

/// The auxiliary continuous process
///
/// ```text
/// Z(t) = Y(kΔ) + f(Y_{kΔ})(t - kΔ) + g(Y_{kΔ})(B(t) - B(kΔ)),  t ∈ [kΔ, (k+1)Δ),
/// ```
///
/// evaluated at a time `t ∈ [0, T]` on the grid of the driving noise.
pub fn z_process_eval(path: &SimulatedPath, model: &SfdeModel, t: f64) -> Result<Vec<f64>> {
    let fine = path.noise().delta_fine();
    let total_fine = path.n_steps() * path.noise_factor();
    let j = grid_index(t, fine)
        .filter(|&j| j <= total_fine)
        .ok_or_else(|| SfdeError::Domain(format!("t = {t} is not on the fine grid of [0, T]")))?;
    let k = j / path.noise_factor();
    let offset = j - k * path.noise_factor();
    let y = path.y(k as isize);
    if offset == 0 {
        return Ok(y.to_vec());
    }
    let segment = path.segment_view(k);
    let f = model.drift(&segment);
    let g = model.diffusion(&segment);
    let start = k * path.noise_factor();
    let d_b = path.noise().partial_sum(start, start + offset);
    let h = offset as f64 * fine;
    let n2 = d_b.len();
    Ok((0..y.len())
        .map(|i| {
            let noise: f64 = g[i * n2..(i + 1) * n2].iter().zip(&d_b).map(|(a, b)| a * b).sum();
            y[i] + f[i] * h + noise
        })
        .collect())
}

/// `Y_{kΔ}` with `kΔ = at_time`: the nodes `Y(at_time - τ), …, Y(at_time)`.
pub fn terminal_segment(path: &SimulatedPath, at_time: f64) -> Result<Segment> {
    let k = grid_index(at_time, path.delta())
        .filter(|&k| k <= path.n_steps())
        .ok_or_else(|| SfdeError::Domain(format!("time {at_time} is not a grid point of the path")))?;
    Ok(path.segment_view(k).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_cubic_volatility_model, make_linear_delay_model};
    use crate::truncation::{make_policy, TruncationPolicy, DEFAULT_VARRHO};

    fn cubic() -> (SfdeModel, TruncationPolicy) {
        let model = make_cubic_volatility_model(3.0, 10.0, 53.0).unwrap();
        let policy = make_policy(&model, 1.0, DEFAULT_VARRHO).unwrap();
        (model, policy)
    }

    #[test]
    fn delay_steps_validation() {
        assert_eq!(delay_steps(1.0, 0.25).unwrap(), 4);
        assert!(matches!(delay_steps(1.0, 0.3), Err(SfdeError::Config(_))));
        assert!(delay_steps(1.0, 2.0).is_err());
        assert!(delay_steps(0.5, 1.0).is_err());
    }

    #[test]
    fn init_state_constant_history() {
        let (model, policy) = cubic();
        let s = init_state(&model, &policy, 2f64.powi(-7)).unwrap();
        assert_eq!(s.segment.m(), 128);
        assert!(s.segment.as_flat().iter().all(|&v| v == 0.05));
        assert_eq!(s.y_hat, vec![0.05]);
        assert_eq!(s.k, 0);
    }

    #[test]
    fn init_state_samples_initial_function() {
        let model = SfdeModel::builder("ramp", 1, 1, 1.0)
            .initial(|theta| vec![theta], 1.0)
            .build()
            .unwrap();
        let policy = TruncationPolicy::from_parts(1.0, 0.0, 1.0, DEFAULT_VARRHO).unwrap();
        let s = init_state(&model, &policy, 0.5).unwrap();
        assert_eq!(s.segment.as_flat(), &[-1.0, -0.5, 0.0]);
    }

    #[test]
    fn init_state_clips_large_history() {
        let (model, policy) = cubic();
        // The policy keeps c4 from the original ξ ≡ 0.05, so ‖ξ‖ = 50 > R(Δ).
        let big = model.with_constant_initial(vec![-50.0]).unwrap();
        let delta = 2f64.powi(-3);
        let r = policy.radius(delta).unwrap();
        assert!(r < 50.0);
        let s = init_state(&big, &policy, delta).unwrap();
        assert!(s.segment.as_flat().iter().all(|&v| v == -r));
        assert_eq!(s.y_hat, vec![-50.0]);
        assert!(init_state(&model, &policy, 0.3).is_err());
    }

    #[test]
    fn step_with_pure_brownian_coefficients() {
        let model = SfdeModel::builder("bm", 1, 1, 1.0)
            .diffusion(|_, out| out[0] = 1.0)
            .build()
            .unwrap();
        let policy = TruncationPolicy::from_parts(1.0, 0.0, 1.0, DEFAULT_VARRHO).unwrap();
        let s0 = init_state(&model, &policy, 0.25).unwrap();
        let s1 = step(&s0, &model, &policy, 0.25, &[0.7]).unwrap();
        assert_eq!(s1.y_hat, vec![0.7]);
        assert_eq!(s1.segment.head(), &[0.7]);
        assert_eq!(s1.k, 1);
    }

    #[test]
    fn step_drift_only_from_initial_segment() {
        let (model, policy) = cubic();
        let delta = 2f64.powi(-7);
        let s0 = init_state(&model, &policy, delta).unwrap();
        let s1 = step(&s0, &model, &policy, delta, &[0.0]).unwrap();
        let expected = 0.05 + 3.493_375 * delta;
        assert!((s1.y_hat[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn step_truncates_large_values() {
        let (model, policy) = cubic();
        let delta = 2f64.powi(-7);
        let r = policy.radius(delta).unwrap();
        let s0 = init_state(&model, &policy, delta).unwrap();
        let s1 = step(&s0, &model, &policy, delta, &[1e4]).unwrap();
        assert!(s1.y_hat[0] > r);
        assert_eq!(s1.segment.head(), &[r]);
        let s2 = step(&s0, &model, &policy, delta, &[-1e4]).unwrap();
        assert_eq!(s2.segment.head(), &[-r]);
        assert!(step(&s0, &model, &policy, delta, &[f64::NAN]).is_err());
    }

    #[test]
    fn simulate_with_zero_steps_is_history() {
        let (model, policy) = cubic();
        let delta = 0.125;
        let noise = Arc::new(BrownianGrid::generate(1, 0, 8, delta, 1).unwrap());
        let path = simulate(&model, &policy, delta, 0.0, noise, true).unwrap();
        assert_eq!(path.n_steps(), 0);
        assert_eq!(path.nodes_y().len(), 9);
        let seg = terminal_segment(&path, 0.0).unwrap();
        assert_eq!(seg, init_state(&model, &policy, delta).unwrap().segment);
    }

    #[test]
    fn simulate_matches_repeated_step() {
        let (model, policy) = cubic();
        let delta = 2f64.powi(-5);
        let noise = Arc::new(BrownianGrid::generate(3, 2, 128, delta, 1).unwrap());
        let path = simulate(&model, &policy, delta, 4.0, noise.clone(), true).unwrap();
        let mut state = init_state(&model, &policy, delta).unwrap();
        for k in 0..128 {
            state = step(&state, &model, &policy, delta, noise.increment(k)).unwrap();
            assert_eq!(state.y_hat.as_slice(), path.y_hat(k as isize + 1));
            assert_eq!(state.segment.head(), path.y(k as isize + 1));
        }
        assert_eq!(state.segment, terminal_segment(&path, 4.0).unwrap());
    }

    #[test]
    fn simulate_coarsens_finer_noise() {
        let (model, policy) = cubic();
        let fine = Arc::new(BrownianGrid::generate(3, 2, 256, 2f64.powi(-8), 1).unwrap());
        let coarse = Arc::new(fine.coarsen(4).unwrap());
        let a = simulate(&model, &policy, 2f64.powi(-6), 1.0, fine, true).unwrap();
        let b = simulate(&model, &policy, 2f64.powi(-6), 1.0, coarse, true).unwrap();
        assert_eq!(a.nodes_y(), b.nodes_y());
        assert_eq!(a.noise_factor(), 4);
    }

    #[test]
    fn simulate_rejects_incompatible_noise() {
        let (model, policy) = cubic();
        let noise = Arc::new(BrownianGrid::generate(3, 2, 10, 0.3, 1).unwrap());
        assert!(matches!(
            simulate(&model, &policy, 0.125, 1.0, noise, true),
            Err(SfdeError::Config(_))
        ));
        let short = Arc::new(BrownianGrid::generate(3, 2, 4, 0.125, 1).unwrap());
        assert!(simulate(&model, &policy, 0.125, 1.0, short.clone(), true).is_err());
        assert!(simulate(&model, &policy, 0.125, 0.3, short, true).is_err());
    }

    #[test]
    fn deterministic_linear_decay_converges_to_exponential() {
        let model = make_linear_delay_model(-1.0, 0.0, 0.0, 0.0).unwrap();
        let policy = make_policy(&model, 1.0, DEFAULT_VARRHO).unwrap();
        let errs: Vec<f64> = [6, 8, 10]
            .iter()
            .map(|&e| {
                let delta = 2f64.powi(-e);
                let n = 1usize << e;
                let noise = Arc::new(BrownianGrid::generate(0, 0, n, delta, 1).unwrap());
                let path = simulate(&model, &policy, delta, 1.0, noise, true).unwrap();
                let y = path.y(n as isize)[0];
                // Euler on x' = -x gives (1 - Δ)^N exactly.
                assert!((y - (1.0 - delta).powi(n as i32)).abs() < 1e-13);
                (y - (-1.0f64).exp()).abs()
            })
            .collect();
        assert!(errs[0] > 3.9 * errs[1] && errs[1] > 3.9 * errs[2], "{errs:?}");
    }

    #[test]
    fn untruncated_policy_matches_plain_em() {
        let model = make_linear_delay_model(-1.0, 0.3, 0.1, 0.5).unwrap();
        let policy = make_policy(&model, 1.0, DEFAULT_VARRHO).unwrap();
        let noise = Arc::new(BrownianGrid::generate(8, 1, 512, 2f64.powi(-7), 1).unwrap());
        let a = simulate(&model, &policy, 2f64.powi(-7), 4.0, noise.clone(), true).unwrap();
        let b = simulate(&model, &policy, 2f64.powi(-7), 4.0, noise, false).unwrap();
        assert_eq!(a.nodes_y(), b.nodes_y());
        assert_eq!(a.nodes_y_hat(), b.nodes_y_hat());
    }

    #[test]
    fn plain_em_blows_up_from_large_history() {
        let (model, _) = cubic();
        let model = model.with_constant_initial(vec![10.0]).unwrap();
        let policy = make_policy(&model, 1.0, DEFAULT_VARRHO).unwrap();
        let delta = 0.125;
        let noise = Arc::new(BrownianGrid::generate(42, 0, 800, delta, 1).unwrap());
        let err = simulate(&model, &policy, delta, 100.0, noise.clone(), false).unwrap_err();
        match err {
            SfdeError::BlowUp { step } => assert!(step <= 100, "blow-up at {step}"),
            other => panic!("unexpected {other:?}"),
        }
        let path = simulate(&model, &policy, delta, 100.0, noise, true).unwrap();
        let r = policy.radius(delta).unwrap();
        assert!(path.nodes_y().values_flat().iter().all(|v| v.abs() <= r));
    }

    #[test]
    fn z_process_hits_nodes_and_interpolates_with_noise() {
        let (model, policy) = cubic();
        let fine = Arc::new(BrownianGrid::generate(4, 4, 512, 2f64.powi(-9), 1).unwrap());
        let delta = 2f64.powi(-6);
        let path = simulate(&model, &policy, delta, 1.0, fine.clone(), true).unwrap();
        for k in [0usize, 1, 17, 64] {
            let t = k as f64 * delta;
            assert_eq!(z_process_eval(&path, &model, t).unwrap(), path.y(k as isize));
        }
        let k = 5usize;
        let t = k as f64 * delta + fine.delta_fine();
        let seg = path.segment_view(k);
        let f = model.drift(&seg)[0];
        let g = model.diffusion(&seg)[0];
        let expected = path.y(k as isize)[0] + f * fine.delta_fine() + g * fine.increment(k * 8)[0];
        assert!((z_process_eval(&path, &model, t).unwrap()[0] - expected).abs() < 1e-15);
        assert!(matches!(z_process_eval(&path, &model, 1e-5), Err(SfdeError::Domain(_))));
        assert!(z_process_eval(&path, &model, 2.0).is_err());
    }

    #[test]
    fn z_process_is_frozen_without_coefficients() {
        let model = SfdeModel::builder("still", 1, 1, 1.0)
            .initial(|_| vec![2.0], 0.0)
            .build()
            .unwrap();
        let policy = TruncationPolicy::from_parts(1.0, 0.0, 1.0, DEFAULT_VARRHO).unwrap();
        let fine = Arc::new(BrownianGrid::generate(4, 4, 64, 2f64.powi(-6), 1).unwrap());
        let path = simulate(&model, &policy, 0.25, 1.0, fine, true).unwrap();
        for j in 0..=64 {
            assert_eq!(z_process_eval(&path, &model, j as f64 / 64.0).unwrap(), vec![2.0]);
        }
    }

    #[test]
    fn terminal_segment_window() {
        let (model, policy) = cubic();
        let delta = 0.25;
        let noise = Arc::new(BrownianGrid::generate(1, 1, 12, delta, 1).unwrap());
        let path = simulate(&model, &policy, delta, 3.0, noise, true).unwrap();
        let seg = terminal_segment(&path, 1.0).unwrap();
        let expected: Vec<f64> = (0..=4).flat_map(|k| path.y(k).to_vec()).collect();
        assert_eq!(seg.as_flat(), expected.as_slice());
        assert!(seg.norm() <= path.radius());
        assert!(matches!(terminal_segment(&path, 0.3), Err(SfdeError::Domain(_))));
        assert!(terminal_segment(&path, 3.25).is_err());
        assert_eq!(path.floor_grid_time(0.6), 0.5);
        assert_eq!(path.step_segment(0.6).unwrap(), path.segment_view(2));
    }
}
