//! SFDE problem definitions, the built-in models, and a sampling-based
//! falsification check of the one-sided (Khasminskii-type) monotonicity
//! condition on the coefficients.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SfdeError};
use crate::segment::{euclidean_norm, Segment, SegmentView};

/// Drift `f`: writes the `n₁`-vector `f(ψ)` into the output buffer.
pub type DriftFn = dyn Fn(&SegmentView<'_>, &mut [f64]) + Send + Sync;
/// Diffusion `g`: writes the `n₁ × n₂` matrix `g(ψ)` row-major.
pub type DiffusionFn = dyn Fn(&SegmentView<'_>, &mut [f64]) + Send + Sync;
/// Initial function `ξ` on `[-τ, 0]`.
pub type InitialFn = dyn Fn(f64) -> Vec<f64> + Send + Sync;

/// `ε̂` in `p = q - ε̂`.
pub const P_EPSILON: f64 = 0.01;

pub const CUBIC_VOLATILITY_ID: &str = "cubic-vol";
pub const LINEAR_DELAY_ID: &str = "linear-delay";

/// An SFDE `dX = f(X_t) dt + g(X_t) dB` with initial data `ξ` on `[-τ, 0]`.
///
/// Coefficients are opaque callables over segments; the declared exponents
/// `r` (polynomial growth) and `r̂` (monotonicity) are trusted as given.
#[derive(Clone)]
pub struct SfdeModel {
    id: String,
    dim_state: usize,
    dim_noise: usize,
    tau: f64,
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
    initial: Arc<InitialFn>,
    initial_holder: f64,
    growth_exponent: f64,
    khasminskii_exponent: f64,
}

impl fmt::Debug for SfdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SfdeModel")
            .field("id", &self.id)
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .field("tau", &self.tau)
            .field("r", &self.growth_exponent)
            .field("r_hat", &self.khasminskii_exponent)
            .finish_non_exhaustive()
    }
}

pub struct SfdeModelBuilder {
    model: SfdeModel,
}

impl SfdeModelBuilder {
    pub fn drift(mut self, f: impl Fn(&SegmentView<'_>, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.model.drift = Arc::new(f);
        self
    }

    pub fn diffusion(mut self, g: impl Fn(&SegmentView<'_>, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.model.diffusion = Arc::new(g);
        self
    }

    /// Initial data `ξ` and its Hölder-1/2 constant `c₂`.
    pub fn initial(mut self, xi: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static, holder: f64) -> Self {
        self.model.initial = Arc::new(xi);
        self.model.initial_holder = holder;
        self
    }

    /// Growth exponent `r` and monotonicity exponent `r̂`.
    pub fn exponents(mut self, r: f64, r_hat: f64) -> Self {
        self.model.growth_exponent = r;
        self.model.khasminskii_exponent = r_hat;
        self
    }

    pub fn build(self) -> Result<SfdeModel> {
        let m = self.model;
        if m.dim_state == 0 || m.dim_noise == 0 {
            return Err(SfdeError::Config("model dimensions must be positive".into()));
        }
        if !(m.tau.is_finite() && m.tau > 0.0) {
            return Err(SfdeError::Config(format!("delay tau = {} must be positive", m.tau)));
        }
        if !(m.growth_exponent >= 0.0 && m.khasminskii_exponent >= 0.0) {
            return Err(SfdeError::Config("exponents r and r_hat must be nonnegative".into()));
        }
        if !(m.initial_holder >= 0.0) {
            return Err(SfdeError::Config("Hölder constant of the initial data must be >= 0".into()));
        }
        for theta in [-m.tau, 0.0] {
            let v = (m.initial)(theta);
            if v.len() != m.dim_state || v.iter().any(|x| !x.is_finite()) {
                return Err(SfdeError::Config(format!(
                    "initial data must return {} finite components",
                    m.dim_state
                )));
            }
        }
        Ok(m)
    }
}

impl SfdeModel {
    /// Starts a model with zero coefficients, zero initial data and `r = r̂ = 0`.
    pub fn builder(id: impl Into<String>, dim_state: usize, dim_noise: usize, tau: f64) -> SfdeModelBuilder {
        SfdeModelBuilder {
            model: SfdeModel {
                id: id.into(),
                dim_state,
                dim_noise,
                tau,
                drift: Arc::new(|_, out: &mut [f64]| out.fill(0.0)),
                diffusion: Arc::new(|_, out: &mut [f64]| out.fill(0.0)),
                initial: Arc::new(move |_| vec![0.0; dim_state]),
                initial_holder: 0.0,
                growth_exponent: 0.0,
                khasminskii_exponent: 0.0,
            },
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Declared polynomial growth exponent `r`.
    pub fn growth_exponent(&self) -> f64 {
        self.growth_exponent
    }

    /// Declared monotonicity exponent `r̂`.
    pub fn khasminskii_exponent(&self) -> f64 {
        self.khasminskii_exponent
    }

    pub fn initial_holder_constant(&self) -> f64 {
        self.initial_holder
    }

    pub fn drift_into(&self, seg: &SegmentView<'_>, out: &mut [f64]) {
        (self.drift)(seg, out)
    }

    pub fn diffusion_into(&self, seg: &SegmentView<'_>, out: &mut [f64]) {
        (self.diffusion)(seg, out)
    }

    pub fn drift(&self, seg: &SegmentView<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_state];
        self.drift_into(seg, &mut out);
        out
    }

    /// `g(ψ)` as a row-major `n₁ × n₂` matrix.
    pub fn diffusion(&self, seg: &SegmentView<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_state * self.dim_noise];
        self.diffusion_into(seg, &mut out);
        out
    }

    pub fn initial(&self, theta: f64) -> Vec<f64> {
        (self.initial)(theta)
    }

    /// Returns a copy of this model with different initial data.
    pub fn with_initial(
        &self,
        xi: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        holder: f64,
    ) -> Result<SfdeModel> {
        SfdeModelBuilder { model: self.clone() }.initial(xi, holder).build()
    }

    pub fn with_constant_initial(&self, value: Vec<f64>) -> Result<SfdeModel> {
        self.with_initial(move |_| value.clone(), 0.0)
    }

    /// `‖ξ‖`, the sup-norm of the initial data, evaluated on 4096 equal
    /// sub-intervals of `[-τ, 0]`.
    pub fn initial_norm(&self) -> f64 {
        const POINTS: usize = 4096;
        (0..=POINTS)
            .map(|i| {
                let theta = -self.tau + self.tau * i as f64 / POINTS as f64;
                euclidean_norm(&self.initial(theta.min(0.0)))
            })
            .fold(0.0, f64::max)
    }

    /// `(|f(𝟎)|, |g(𝟎)|)` with `|·|` the Euclidean / Frobenius norm.
    pub fn coefficients_at_zero(&self) -> (f64, f64) {
        let zero = vec![0.0; 2 * self.dim_state];
        let view = SegmentView::from_parts(&zero, self.tau, self.dim_state);
        (euclidean_norm(&self.drift(&view)), euclidean_norm(&self.diffusion(&view)))
    }
}

/// The functional stochastic volatility model
///
/// ```text
/// dX(t) = (a0 + a1 X(t) - a2 X(t)³) dt + (∫_{-1}^0 X(t+θ)² dθ) dB(t),  X ≡ 0.05 on [-1, 0],
/// ```
///
/// with `r = r̂ = 2`.
pub fn make_cubic_volatility_model(a0: f64, a1: f64, a2: f64) -> Result<SfdeModel> {
    cubic_volatility_model(a0, a1, a2, 1.0, 0.05)
}

pub(crate) fn cubic_volatility_model(a0: f64, a1: f64, a2: f64, tau: f64, xi: f64) -> Result<SfdeModel> {
    for (name, v) in [("a0", a0), ("a1", a1), ("a2", a2)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(SfdeError::Config(format!("{name} = {v} must be positive")));
        }
    }
    if !xi.is_finite() {
        return Err(SfdeError::Config("initial value must be finite".into()));
    }
    SfdeModel::builder(CUBIC_VOLATILITY_ID, 1, 1, tau)
        .drift(move |seg, out| {
            let x = seg.head()[0];
            out[0] = a0 + a1 * x - a2 * x * x * x;
        })
        .diffusion(|seg, out| {
            out[0] = seg
                .scalar_integral_power(2)
                .expect("cubic-vol model is scalar");
        })
        .initial(move |_| vec![xi], 0.0)
        .exponents(2.0, 2.0)
        .build()
}

/// Globally Lipschitz scalar delay model
///
/// ```text
/// dX(t) = (λ X(t) + μ X(t-τ)) dt + (σ0 + σ1 X(t-τ)) dB(t),  X ≡ 1 on [-1, 0],
/// ```
///
/// with `r = r̂ = 0`, so truncation is inactive.
pub fn make_linear_delay_model(lambda: f64, mu: f64, sigma0: f64, sigma1: f64) -> Result<SfdeModel> {
    linear_delay_model(lambda, mu, sigma0, sigma1, 1.0, 1.0)
}

pub(crate) fn linear_delay_model(
    lambda: f64,
    mu: f64,
    sigma0: f64,
    sigma1: f64,
    tau: f64,
    xi: f64,
) -> Result<SfdeModel> {
    for (name, v) in [("lambda", lambda), ("mu", mu), ("sigma0", sigma0), ("sigma1", sigma1), ("xi", xi)] {
        if !v.is_finite() {
            return Err(SfdeError::Config(format!("{name} = {v} must be finite")));
        }
    }
    SfdeModel::builder(LINEAR_DELAY_ID, 1, 1, tau)
        .drift(move |seg, out| out[0] = lambda * seg.head()[0] + mu * seg.tail()[0])
        .diffusion(move |seg, out| out[0] = sigma0 + sigma1 * seg.tail()[0])
        .initial(move |_| vec![xi], 0.0)
        .exponents(0.0, 0.0)
        .build()
}

/// Builds a built-in model by name. Recognised parameters:
///
/// - `cubic-vol`: `a0` (3), `a1` (10), `a2` (53), `tau` (1), `xi` (0.05)
/// - `linear-delay`: `lambda` (-1), `mu` (0.3), `sigma0` (0.1), `sigma1` (0.5),
///   `tau` (1), `xi` (1)
pub fn build_model(id: &str, params: &BTreeMap<String, f64>) -> Result<SfdeModel> {
    let allowed: &[(&str, f64)] = match id {
        CUBIC_VOLATILITY_ID => &[("a0", 3.0), ("a1", 10.0), ("a2", 53.0), ("tau", 1.0), ("xi", 0.05)],
        LINEAR_DELAY_ID => &[
            ("lambda", -1.0),
            ("mu", 0.3),
            ("sigma0", 0.1),
            ("sigma1", 0.5),
            ("tau", 1.0),
            ("xi", 1.0),
        ],
        other => return Err(SfdeError::Config(format!("unknown model '{other}'"))),
    };
    if let Some(key) = params.keys().find(|k| !allowed.iter().any(|(name, _)| name == k)) {
        return Err(SfdeError::Config(format!("model '{id}' has no parameter '{key}'")));
    }
    let get = |name: &str| -> f64 {
        params.get(name).copied().unwrap_or_else(|| {
            allowed.iter().find(|(n, _)| *n == name).map(|(_, v)| *v).unwrap()
        })
    };
    let tau = get("tau");
    if !(tau.is_finite() && tau > 0.0) {
        return Err(SfdeError::Config(format!("tau = {tau} must be positive")));
    }
    match id {
        CUBIC_VOLATILITY_ID => cubic_volatility_model(get("a0"), get("a1"), get("a2"), tau, get("xi")),
        _ => linear_delay_model(get("lambda"), get("mu"), get("sigma0"), get("sigma1"), tau, get("xi")),
    }
}

/// Constants of the monotonicity and polynomial-growth conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionConstants {
    pub q: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl AssumptionConstants {
    pub fn new(q: f64, alpha0: f64, alpha1: f64, alpha2: f64, c1: f64, c2: f64) -> Result<Self> {
        if !(q > 3.0) {
            return Err(SfdeError::Config(format!("q = {q} must exceed 3")));
        }
        for (name, v) in [("alpha0", alpha0), ("alpha1", alpha1), ("alpha2", alpha2), ("c1", c1), ("c2", c2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SfdeError::Config(format!("{name} = {v} must be positive")));
            }
        }
        if !(alpha1 > alpha2) {
            return Err(SfdeError::Config(format!(
                "alpha1 = {alpha1} must exceed alpha2 = {alpha2}"
            )));
        }
        Ok(AssumptionConstants { q, alpha0, alpha1, alpha2, c1, c2 })
    }

    /// The moment exponent `p = q - ε̂`.
    pub fn p(&self) -> f64 {
        self.q - P_EPSILON
    }
}

/// Source of segment pairs `(ψ, ψ̄)` for [`check_khasminskii_inequality`].
pub trait SegmentPairSampler {
    fn sample_pair(&mut self) -> (Segment, Segment);
}

/// Node values i.i.d. uniform on `[-bound, bound]`.
#[derive(Debug, Clone)]
pub struct UniformPairSampler {
    rng: ChaCha8Rng,
    dim: usize,
    m: usize,
    delta: f64,
    bound: f64,
}

impl UniformPairSampler {
    /// Segments with `m` intervals over `[-tau, 0]`, each component bounded by
    /// `bound` (default used by the CLI: 5).
    pub fn new(dim: usize, tau: f64, m: usize, bound: f64, seed: u64) -> Result<Self> {
        if dim == 0 || m == 0 || !(tau > 0.0) || !(bound > 0.0) {
            return Err(SfdeError::Config("sampler needs dim, m, tau, bound > 0".into()));
        }
        Ok(UniformPairSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dim,
            m,
            delta: tau / m as f64,
            bound,
        })
    }

    pub fn for_model(model: &SfdeModel, m: usize, bound: f64, seed: u64) -> Result<Self> {
        Self::new(model.dim_state(), model.tau(), m, bound, seed)
    }

    fn uniform_segment(&mut self) -> Vec<f64> {
        let b = self.bound;
        (0..(self.m + 1) * self.dim)
            .map(|_| self.rng.random_range(-b..=b))
            .collect()
    }
}

impl SegmentPairSampler for UniformPairSampler {
    fn sample_pair(&mut self) -> (Segment, Segment) {
        let a = self.uniform_segment();
        let b = self.uniform_segment();
        (
            Segment::from_flat(a, self.delta, self.dim).expect("finite samples"),
            Segment::from_flat(b, self.delta, self.dim).expect("finite samples"),
        )
    }
}

/// Adversarial pairs with `ψ̄(0) = -ψ(0)` and `|ψ(0)|` in the upper half of
/// the range; the remaining nodes are uniform.
#[derive(Debug, Clone)]
pub struct AntipodalPairSampler {
    inner: UniformPairSampler,
}

impl AntipodalPairSampler {
    pub fn new(dim: usize, tau: f64, m: usize, bound: f64, seed: u64) -> Result<Self> {
        Ok(AntipodalPairSampler {
            inner: UniformPairSampler::new(dim, tau, m, bound, seed)?,
        })
    }

    pub fn for_model(model: &SfdeModel, m: usize, bound: f64, seed: u64) -> Result<Self> {
        Self::new(model.dim_state(), model.tau(), m, bound, seed)
    }
}

impl SegmentPairSampler for AntipodalPairSampler {
    fn sample_pair(&mut self) -> (Segment, Segment) {
        let s = &mut self.inner;
        let mut a = s.uniform_segment();
        let mut b = s.uniform_segment();
        let head = s.m * s.dim;
        for c in 0..s.dim {
            let magnitude = s.rng.random_range(0.5 * s.bound..=s.bound);
            let sign = if s.rng.random::<bool>() { 1.0 } else { -1.0 };
            a[head + c] = sign * magnitude;
            b[head + c] = -sign * magnitude;
        }
        (
            Segment::from_flat(a, s.delta, s.dim).expect("finite samples"),
            Segment::from_flat(b, s.delta, s.dim).expect("finite samples"),
        )
    }
}

/// Result of a sampled check: how many pairs violated the inequality and by
/// how much at worst. `worst_margin` is the largest `LHS - RHS` seen, which
/// is negative when every pair satisfied the inequality strictly.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    pub evaluated: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

/// Relative tolerance on `LHS - RHS` before a pair counts as a violation.
pub const VIOLATION_TOLERANCE: f64 = 1e-9;

/// Sub-intervals per node interval for the θ-integrals of the check.
const CHECK_SUBDIVISIONS: usize = 64;

/// Evaluates
///
/// ```text
/// LHS = 2⟨ψ(0) - ψ̄(0), f(ψ) - f(ψ̄)⟩ + (q - 1)|g(ψ) - g(ψ̄)|²
/// RHS = α0 (|d(0)|² + (1/τ)∫|d|²) - α1 |d(0)|² (|ψ(0)|^r̂ + |ψ̄(0)|^r̂)
///       + (α2/τ) ∫ |d(θ)|² (|ψ(θ)|^r̂ + |ψ̄(θ)|^r̂) dθ,      d = ψ - ψ̄,
/// ```
///
/// on `count` sampled pairs. Violations are reported, never raised.
pub fn check_khasminskii_inequality(
    model: &SfdeModel,
    constants: &AssumptionConstants,
    sampler: &mut dyn SegmentPairSampler,
    count: usize,
) -> Result<ViolationReport> {
    if count == 0 {
        return Err(SfdeError::Config("count must be at least 1".into()));
    }
    let r_hat = model.khasminskii_exponent();
    let mut report = ViolationReport {
        evaluated: 0,
        violations: 0,
        worst_margin: f64::NEG_INFINITY,
    };
    for _ in 0..count {
        let (psi, psi_bar) = sampler.sample_pair();
        if psi.dim() != model.dim_state()
            || psi_bar.dim() != psi.dim()
            || psi.m() != psi_bar.m()
            || (psi.tau() - model.tau()).abs() > 1e-12 * model.tau()
        {
            return Err(SfdeError::Config(
                "sampled segments do not match the model's dimension or delay".into(),
            ));
        }
        let (lhs, rhs, scale) = khasminskii_sides(model, constants, r_hat, &psi, &psi_bar);
        let margin = lhs - rhs;
        report.evaluated += 1;
        report.worst_margin = report.worst_margin.max(margin);
        if margin > VIOLATION_TOLERANCE * scale {
            report.violations += 1;
        }
    }
    Ok(report)
}

fn khasminskii_sides(
    model: &SfdeModel,
    k: &AssumptionConstants,
    r_hat: f64,
    psi: &Segment,
    psi_bar: &Segment,
) -> (f64, f64, f64) {
    let (a, b) = (psi.view(), psi_bar.view());
    let d0: Vec<f64> = a.head().iter().zip(b.head()).map(|(x, y)| x - y).collect();
    let df: Vec<f64> = model
        .drift(&a)
        .iter()
        .zip(model.drift(&b))
        .map(|(x, y)| x - y)
        .collect();
    let dg_sq: f64 = model
        .diffusion(&a)
        .iter()
        .zip(model.diffusion(&b))
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let inner: f64 = d0.iter().zip(&df).map(|(x, y)| x * y).sum();
    let lhs_drift = 2.0 * inner;
    let lhs_diff = (k.q - 1.0) * dg_sq;

    let d0_sq: f64 = d0.iter().map(|v| v * v).sum();
    let tau = model.tau();
    let (int_d_sq, int_weighted) = pair_integrals(&a, &b, r_hat);
    let weight0 = euclidean_norm(a.head()).powf(r_hat) + euclidean_norm(b.head()).powf(r_hat);
    let t0 = k.alpha0 * (d0_sq + int_d_sq / tau);
    let t1 = k.alpha1 * d0_sq * weight0;
    let t2 = k.alpha2 / tau * int_weighted;
    let scale = 1.0 + lhs_drift.abs() + lhs_diff.abs() + t0 + t1 + t2;
    (lhs_drift + lhs_diff, t0 - t1 + t2, scale)
}

/// `(∫|ψ-ψ̄|², ∫|ψ-ψ̄|²(|ψ|^r̂ + |ψ̄|^r̂))` over `[-τ, 0]`, using a 3-point
/// Gauss rule on 64 sub-intervals of every node interval.
fn pair_integrals(a: &SegmentView<'_>, b: &SegmentView<'_>, r_hat: f64) -> (f64, f64) {
    const GAUSS_3: [(f64, f64); 3] = [
        (-0.774_596_669_241_483_4, 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        (0.774_596_669_241_483_4, 5.0 / 9.0),
    ];
    let dim = a.dim();
    let h = a.delta() / CHECK_SUBDIVISIONS as f64;
    let mut pa = vec![0.0; dim];
    let mut pb = vec![0.0; dim];
    let (mut plain, mut weighted) = (0.0, 0.0);
    for i in 0..a.m() {
        let (a0, a1, b0, b1) = (a.node(i), a.node(i + 1), b.node(i), b.node(i + 1));
        for j in 0..CHECK_SUBDIVISIONS {
            for &(x, w) in &GAUSS_3 {
                let s = (j as f64 + 0.5 * (1.0 + x)) / CHECK_SUBDIVISIONS as f64;
                for c in 0..dim {
                    pa[c] = (1.0 - s) * a0[c] + s * a1[c];
                    pb[c] = (1.0 - s) * b0[c] + s * b1[c];
                }
                let d_sq: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum();
                let weight = euclidean_norm(&pa).powf(r_hat) + euclidean_norm(&pb).powf(r_hat);
                plain += 0.5 * h * w * d_sq;
                weighted += 0.5 * h * w * d_sq * weight;
            }
        }
    }
    (plain, weighted)
}
