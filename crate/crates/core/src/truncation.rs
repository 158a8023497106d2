//! The power-law dominating function `H(R) = K·R^r`, the truncation radius
//! `R(Δ) = H⁻¹(c₄·Δ^{-ϱ})` and the radial projection `π_Δ` onto the ball of
//! that radius.

use crate::error::{Result, SfdeError};
use crate::model::SfdeModel;
use crate::segment::euclidean_norm;

/// `ϱ` used for convergence-order runs.
pub const DEFAULT_VARRHO: f64 = 1.0 / 3.0;
pub const DEFAULT_H_SCALE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    h_scale: f64,
    r_exp: f64,
    c4: f64,
    varrho: f64,
}

impl TruncationPolicy {
    /// Builds the policy for `model` with `c₄ = H(‖ξ‖) ∨ H(1) ∨ |f(𝟎)| ∨ |g(𝟎)|`.
    ///
    /// A model with `r = 0` yields the untruncated policy (`R(Δ) = ∞`).
    pub fn new(model: &SfdeModel, h_scale: f64, varrho: f64) -> Result<Self> {
        if !(varrho > 0.0 && varrho < 0.5) {
            return Err(SfdeError::Config(format!("varrho = {varrho} must lie in (0, 1/2)")));
        }
        if !(h_scale.is_finite() && h_scale > 0.0) {
            return Err(SfdeError::Config(format!("h-scale = {h_scale} must be positive")));
        }
        let r_exp = model.growth_exponent();
        let h = |x: f64| h_scale * x.powf(r_exp);
        let (f0, g0) = model.coefficients_at_zero();
        let c4 = h(model.initial_norm()).max(h(1.0)).max(f0).max(g0);
        Ok(TruncationPolicy { h_scale, r_exp, c4, varrho })
    }

    /// A policy from explicit parameters.
    pub fn from_parts(h_scale: f64, r_exp: f64, c4: f64, varrho: f64) -> Result<Self> {
        if !(varrho > 0.0 && varrho < 0.5) {
            return Err(SfdeError::Config(format!("varrho = {varrho} must lie in (0, 1/2)")));
        }
        if !(h_scale.is_finite() && h_scale > 0.0 && r_exp >= 0.0 && r_exp.is_finite()) {
            return Err(SfdeError::Config("h-scale must be positive and r nonnegative".into()));
        }
        if !(c4.is_finite() && c4 >= h_scale) {
            return Err(SfdeError::Config(format!("c4 = {c4} must be at least H(1) = {h_scale}")));
        }
        Ok(TruncationPolicy { h_scale, r_exp, c4, varrho })
    }

    pub fn h_scale(&self) -> f64 {
        self.h_scale
    }

    pub fn r_exp(&self) -> f64 {
        self.r_exp
    }

    pub fn c4(&self) -> f64 {
        self.c4
    }

    pub fn varrho(&self) -> f64 {
        self.varrho
    }

    /// `true` when the policy never truncates.
    pub fn is_untruncated(&self) -> bool {
        self.r_exp == 0.0
    }

    /// `H(R) = K·R^r`.
    pub fn h(&self, radius: f64) -> f64 {
        self.h_scale * radius.powf(self.r_exp)
    }

    /// `H⁻¹(u) = (u/K)^{1/r}`; `∞` when `r = 0`.
    pub fn h_inverse(&self, u: f64) -> f64 {
        if self.is_untruncated() {
            f64::INFINITY
        } else {
            (u / self.h_scale).powf(1.0 / self.r_exp)
        }
    }

    /// `R(Δ) = H⁻¹(c₄·Δ^{-ϱ})` for `Δ ∈ (0, 1]`.
    pub fn radius(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(SfdeError::Domain(format!("step size {delta} outside (0, 1]")));
        }
        Ok(self.h_inverse(self.c4 * delta.powf(-self.varrho)))
    }
}

/// Convenience constructor mirroring [`TruncationPolicy::new`].
pub fn make_policy(model: &SfdeModel, h_scale: f64, varrho: f64) -> Result<TruncationPolicy> {
    TruncationPolicy::new(model, h_scale, varrho)
}

/// `π_Δ(x) = (|x| ∧ R)·x/|x|`, with `x/|x| = 0` at `x = 0`.
pub fn pi_delta(x: &[f64], radius: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    pi_delta_in_place(&mut out, radius);
    out
}

pub fn pi_delta_in_place(x: &mut [f64], radius: f64) {
    let norm = euclidean_norm(x);
    if norm <= radius {
        return;
    }
    if let [v] = x {
        *v = radius.copysign(*v);
        return;
    }
    let mut scale = radius / norm;
    let original = x.to_vec();
    loop {
        for (v, o) in x.iter_mut().zip(&original) {
            *v = o * scale;
        }
        // Rounding can leave the scaled norm an ulp above the radius.
        if euclidean_norm(x) <= radius {
            break;
        }
        scale = scale.next_down();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_cubic_volatility_model, make_linear_delay_model};

    #[test]
    fn cubic_policy_c4() {
        let model = make_cubic_volatility_model(3.0, 10.0, 53.0).unwrap();
        let policy = make_policy(&model, 1.0, DEFAULT_VARRHO).unwrap();
        assert_eq!(policy.c4(), 3.0);
        assert_eq!(policy.r_exp(), 2.0);
    }

    #[test]
    fn linear_delay_is_untruncated() {
        let model = make_linear_delay_model(-1.0, 0.3, 0.1, 0.5).unwrap();
        let policy = make_policy(&model, 1.0, DEFAULT_VARRHO).unwrap();
        assert!(policy.is_untruncated());
        assert_eq!(policy.radius(2f64.powi(-7)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn radius_examples() {
        let p = TruncationPolicy::from_parts(1.0, 2.0, 1.0, 1.0 / 3.0).unwrap();
        assert_eq!(p.radius(1.0).unwrap(), 1.0);
        assert!((p.radius(2f64.powi(-6)).unwrap() - 2.0).abs() < 1e-12);
        assert!((p.radius(2f64.powi(-12)).unwrap() - 4.0).abs() < 1e-12);
        let p4 = TruncationPolicy::from_parts(1.0, 2.0, 4.0, 1.0 / 3.0).unwrap();
        assert_eq!(p4.radius(1.0).unwrap(), 2.0);
    }

    #[test]
    fn radius_rejects_bad_delta_and_policy_rejects_bad_varrho() {
        let p = TruncationPolicy::from_parts(1.0, 2.0, 1.0, 1.0 / 3.0).unwrap();
        assert!(matches!(p.radius(0.0), Err(SfdeError::Domain(_))));
        assert!(p.radius(1.5).is_err());
        let model = make_cubic_volatility_model(3.0, 10.0, 53.0).unwrap();
        assert!(matches!(make_policy(&model, 1.0, 0.5), Err(SfdeError::Config(_))));
        assert!(make_policy(&model, 1.0, 0.0).is_err());
        assert!(make_policy(&model, 0.0, 0.3).is_err());
    }

    #[test]
    fn radius_is_nonincreasing_in_delta() {
        let p = TruncationPolicy::from_parts(1.0, 2.0, 3.0, 1.0 / 3.0).unwrap();
        let radii: Vec<f64> = (0..=14).map(|e| p.radius(2f64.powi(-e)).unwrap()).collect();
        assert!(radii.windows(2).all(|w| w[0] <= w[1]), "{radii:?}");
    }

    #[test]
    fn projection_examples() {
        assert_eq!(pi_delta(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
        assert_eq!(pi_delta(&[0.0], 0.0), vec![0.0]);
        assert_eq!(pi_delta(&[3.0, 4.0], 10.0), vec![3.0, 4.0]);
        assert_eq!(pi_delta(&[3.0, 4.0], 2.5), vec![1.5, 2.0]);
        assert_eq!(pi_delta(&[3.0, 4.0], 5.0), vec![3.0, 4.0]);
        assert_eq!(pi_delta(&[-7.0], f64::INFINITY), vec![-7.0]);
    }

    #[test]
    fn h_and_inverse_agree() {
        let p = TruncationPolicy::from_parts(2.5, 2.0, 3.0, 0.25).unwrap();
        for r in [1.0, 1.5, 3.0, 10.0] {
            assert!((p.h_inverse(p.h(r)) - r).abs() < 1e-12 * r);
        }
    }
}
