//! Coupled Monte Carlo estimation of strong segment errors.
//!
//! For every sample a Brownian path is drawn at the reference step
//! `2^{-ref_exp}`; the reference solution and every coarse solution are driven
//! by that same path (coarse increments are sums of fine ones). The error of a
//! coarse run is measured against the reference at the horizon `T`, either
//! over the whole terminal segment or at the single point `T`.
//!
//! Per-sample work runs on a rayon pool, but all sums are taken afterwards in
//! sample order, so reports do not depend on the number of workers.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Result, SfdeError};
use crate::model::{build_model, SfdeModel};
use crate::noise::BrownianGrid;
use crate::scheme::{delay_steps, grid_index, simulate, SimulatedPath};
use crate::segment::euclidean_norm;
use crate::truncation::{TruncationPolicy, DEFAULT_H_SCALE, DEFAULT_VARRHO};

/// Largest moment exponent accepted by [`moment_diagnostic`].
pub const MOMENT_EXPONENT_CAP: f64 = 6.0;

/// Samples processed per parallel batch in [`moment_diagnostic`].
const MOMENT_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    /// `sup_{θ} |X(T+θ) - Ȳ_T(θ)|` over the fine grid of `[T-τ, T]`.
    SegmentSup,
    /// `|X(T) - Y(T)|`.
    TerminalPoint,
}

impl FromStr for ErrorNorm {
    type Err = SfdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segment-sup" => Ok(ErrorNorm::SegmentSup),
            "terminal-point" => Ok(ErrorNorm::TerminalPoint),
            other => Err(SfdeError::Config(format!(
                "unknown error norm '{other}' (expected segment-sup or terminal-point)"
            ))),
        }
    }
}

impl fmt::Display for ErrorNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorNorm::SegmentSup => "segment-sup",
            ErrorNorm::TerminalPoint => "terminal-point",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model_id: String,
    pub model_params: BTreeMap<String, f64>,
    pub horizon: f64,
    /// Reference step `2^{-ref_exp}`.
    pub ref_exp: u32,
    /// Coarse steps `2^{-e}`.
    pub step_exps: Vec<u32>,
    pub samples: usize,
    pub base_seed: u64,
    pub varrho: f64,
    pub h_scale: f64,
    pub error_norm: ErrorNorm,
    /// `false` runs classical EM for every step size.
    pub truncate: bool,
    /// Rayon workers; `0` uses the default pool size.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    /// The functional stochastic volatility experiment with `(a0, a1, a2) =
    /// (3, 10, 53)`, `T = 10`, reference step `2^{-12}`, coarse steps
    /// `2^{-7} … 2^{-11}` and 200 samples.
    fn default() -> Self {
        let model_params = [("a0", 3.0), ("a1", 10.0), ("a2", 53.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        ExperimentConfig {
            model_id: "cubic-vol".into(),
            model_params,
            horizon: 10.0,
            ref_exp: 12,
            step_exps: vec![7, 8, 9, 10, 11],
            samples: 200,
            base_seed: 42,
            varrho: DEFAULT_VARRHO,
            h_scale: DEFAULT_H_SCALE,
            error_norm: ErrorNorm::SegmentSup,
            truncate: true,
            workers: 0,
        }
    }
}

fn step_size(exp: u32) -> f64 {
    2f64.powi(-(exp as i32))
}

impl ExperimentConfig {
    pub fn build_model(&self) -> Result<SfdeModel> {
        build_model(&self.model_id, &self.model_params)
    }

    /// Coarse step sizes sorted by descending `Δ`.
    pub fn deltas(&self) -> Vec<f64> {
        let mut exps = self.step_exps.clone();
        exps.sort_unstable();
        exps.dedup();
        exps.into_iter().map(step_size).collect()
    }

    fn validate_ladder(&self, model: &SfdeModel) -> Result<()> {
        if self.step_exps.is_empty() {
            return Err(SfdeError::Config("at least one step size is required".into()));
        }
        if self.samples == 0 {
            return Err(SfdeError::Config("samples must be positive".into()));
        }
        if !(self.horizon.is_finite() && self.horizon >= model.tau()) {
            return Err(SfdeError::Config(format!(
                "horizon {} must be at least the delay {}",
                self.horizon,
                model.tau()
            )));
        }
        for delta in self.deltas() {
            delay_steps(model.tau(), delta)?;
            if grid_index(self.horizon, delta).is_none() {
                return Err(SfdeError::Config(format!(
                    "horizon {} is not a multiple of the step {delta}",
                    self.horizon
                )));
            }
        }
        Ok(())
    }

    /// Checks the ladder for a convergence run, including the reference step.
    pub fn validate(&self) -> Result<SfdeModel> {
        let model = self.build_model()?;
        self.validate_ladder(&model)?;
        let max_exp = *self.step_exps.iter().max().unwrap();
        if self.ref_exp <= max_exp {
            return Err(SfdeError::Config(format!(
                "reference exponent {} must exceed every step exponent (max {max_exp})",
                self.ref_exp
            )));
        }
        if self.deltas().len() < 2 {
            return Err(SfdeError::Config("a slope needs at least two step sizes".into()));
        }
        let delta_ref = step_size(self.ref_exp);
        delay_steps(model.tau(), delta_ref)?;
        if grid_index(self.horizon, delta_ref).is_none() {
            return Err(SfdeError::Config("horizon is not on the reference grid".into()));
        }
        Ok(model)
    }

    fn policy(&self, model: &SfdeModel) -> Result<TruncationPolicy> {
        TruncationPolicy::new(model, self.h_scale, self.varrho)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| SfdeError::Config(format!("cannot start worker pool: {e}")))
    }
}

/// One row of a convergence report.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub delta: f64,
    /// `sqrt(mean of squared errors)`.
    pub rms_error: f64,
    /// Delta-method standard error of `rms_error`.
    pub std_err: f64,
    pub samples_used: usize,
    /// Samples dropped because the coarse run blew up (untruncated runs only).
    pub blow_ups: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Slope of `ln rms_error` against `ln Δ`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Samples whose reference run blew up (untruncated runs only).
    pub reference_blow_ups: usize,
}

impl ConvergenceReport {
    /// Mean-square order: twice the RMS slope.
    pub fn mean_square_order(&self) -> f64 {
        2.0 * self.slope
    }

    /// `delta,rms_error,std_err` rows followed by `slope`, `intercept` and
    /// `r2` footer rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,rms_error,std_err\n");
        for row in &self.rows {
            let _ = writeln!(out, "{},{},{}", row.delta, row.rms_error, row.std_err);
        }
        let _ = writeln!(out, "slope,{}", self.slope);
        let _ = writeln!(out, "intercept,{}", self.intercept);
        let _ = writeln!(out, "r2,{}", self.r_squared);
        out
    }
}

/// Ordinary least squares of `ln value` on `ln Δ`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 2 {
        return Err(SfdeError::Domain("a log-log fit needs at least two points".into()));
    }
    if let Some(&(d, v)) = points.iter().find(|&&(d, v)| !(d > 0.0 && v > 0.0 && d.is_finite() && v.is_finite())) {
        return Err(SfdeError::Domain(format!(
            "log-log fit needs positive finite values, got ({d}, {v})"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let syy: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(SfdeError::Domain("log-log fit needs distinct step sizes".into()));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(LogLogFit { slope, intercept, r_squared })
}

fn same_noise(a: &Arc<BrownianGrid>, b: &Arc<BrownianGrid>) -> bool {
    Arc::ptr_eq(a, b)
        || (a.base_seed() == b.base_seed()
            && a.sample_index() == b.sample_index()
            && a.delta_fine() == b.delta_fine()
            && a.increments_flat() == b.increments_flat())
}

/// Strong error of `coarse` against `reference` at `at_time`.
///
/// Both paths must be driven by the same Brownian sample and the reference
/// step must divide the coarse step. For [`ErrorNorm::SegmentSup`] the coarse
/// segment is linearly interpolated onto every reference node of
/// `[at_time - τ, at_time]`.
pub fn segment_error(
    reference: &SimulatedPath,
    coarse: &SimulatedPath,
    at_time: f64,
    norm: ErrorNorm,
) -> Result<f64> {
    if !same_noise(reference.noise(), coarse.noise()) {
        return Err(SfdeError::Coupling(format!(
            "paths driven by different samples ({}/{} vs {}/{})",
            reference.noise().base_seed(),
            reference.noise().sample_index(),
            coarse.noise().base_seed(),
            coarse.noise().sample_index()
        )));
    }
    if reference.dim() != coarse.dim() || (reference.tau() - coarse.tau()).abs() > 1e-12 * reference.tau() {
        return Err(SfdeError::Coupling("paths belong to different models".into()));
    }
    let ratio = coarse.delta() / reference.delta();
    let factor = ratio.round();
    if factor < 1.0 || (factor - ratio).abs() > 1e-9 * ratio {
        return Err(SfdeError::Coupling(format!(
            "reference step {} does not divide coarse step {}",
            reference.delta(),
            coarse.delta()
        )));
    }
    let factor = factor as usize;
    let on_grid = |path: &SimulatedPath| {
        grid_index(at_time, path.delta())
            .filter(|&k| k <= path.n_steps())
            .ok_or_else(|| SfdeError::Domain(format!("time {at_time} is not a node of both paths")))
    };
    let k_ref = on_grid(reference)? as isize;
    let k_coarse = on_grid(coarse)?;
    let dim = reference.dim();
    let mut diff = vec![0.0; dim];
    match norm {
        ErrorNorm::TerminalPoint => {
            for ((d, a), b) in diff.iter_mut().zip(reference.y(k_ref)).zip(coarse.y(k_coarse as isize)) {
                *d = a - b;
            }
            Ok(euclidean_norm(&diff))
        }
        ErrorNorm::SegmentSup => {
            let segment = coarse.segment_view(k_coarse);
            let m_ref = reference.m();
            let mut worst: f64 = 0.0;
            for j in 0..=m_ref {
                let fine = reference.y(k_ref - m_ref as isize + j as isize);
                let (i, rem) = (j / factor, j % factor);
                if rem == 0 {
                    for ((d, a), b) in diff.iter_mut().zip(fine).zip(segment.node(i)) {
                        *d = a - b;
                    }
                } else {
                    let w = rem as f64 / factor as f64;
                    let (lo, hi) = (segment.node(i), segment.node(i + 1));
                    for c in 0..dim {
                        diff[c] = fine[c] - ((1.0 - w) * lo[c] + w * hi[c]);
                    }
                }
                worst = worst.max(euclidean_norm(&diff));
            }
            Ok(worst)
        }
    }
}

/// Per-sample outcome: `None` when the reference run blew up, otherwise one
/// entry per step size (`None` for a coarse blow-up).
type SampleErrors = Option<Vec<Option<f64>>>;

fn run_sample(
    config: &ExperimentConfig,
    model: &SfdeModel,
    policy: &TruncationPolicy,
    deltas: &[f64],
    index: u64,
) -> Result<SampleErrors> {
    let delta_ref = step_size(config.ref_exp);
    let n_ref = grid_index(config.horizon, delta_ref).expect("validated horizon");
    let noise = Arc::new(
        BrownianGrid::generate(config.base_seed, index, n_ref, delta_ref, model.dim_noise())?,
    );
    let tolerate = |r: Result<SimulatedPath>| -> Result<Option<SimulatedPath>> {
        match r {
            Ok(p) => Ok(Some(p)),
            Err(SfdeError::BlowUp { .. }) if !config.truncate => Ok(None),
            Err(e) => Err(e),
        }
    };
    let reference = match tolerate(simulate(model, policy, delta_ref, config.horizon, noise.clone(), config.truncate))? {
        Some(p) => p,
        None => return Ok(None),
    };
    let mut errors = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let coarse = tolerate(simulate(model, policy, delta, config.horizon, noise.clone(), config.truncate))?;
        errors.push(match coarse {
            Some(c) => Some(segment_error(&reference, &c, config.horizon, config.error_norm)?),
            None => None,
        });
    }
    Ok(Some(errors))
}

/// Estimates `sqrt(E‖X_T - Ȳ_T‖²)` for every coarse step and fits the
/// log-log slope.
///
/// Blow-ups are fatal for truncated runs; for classical EM runs they are
/// counted and the affected samples are left out of the affected rows.
pub fn run_convergence(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    let model = config.validate()?;
    let policy = config.policy(&model)?;
    let deltas = config.deltas();
    let pool = config.pool()?;
    let outcomes: Vec<SampleErrors> = pool.install(|| {
        (0..config.samples as u64)
            .into_par_iter()
            .map(|i| run_sample(config, &model, &policy, &deltas, i))
            .collect::<Result<Vec<_>>>()
    })?;

    let reference_blow_ups = outcomes.iter().filter(|o| o.is_none()).count();
    let mut rows = Vec::with_capacity(deltas.len());
    for (level, &delta) in deltas.iter().enumerate() {
        let squared: Vec<f64> = outcomes
            .iter()
            .flatten()
            .filter_map(|errs| errs[level])
            .map(|e| e * e)
            .collect();
        let blow_ups = outcomes.iter().flatten().filter(|errs| errs[level].is_none()).count();
        let (rms_error, std_err) = rms_with_std_err(&squared);
        rows.push(ConvergenceRow {
            delta,
            rms_error,
            std_err,
            samples_used: squared.len(),
            blow_ups,
        });
    }
    if rows.iter().any(|r| r.samples_used == 0) {
        return Err(SfdeError::BlowUp { step: 0 });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta, r.rms_error)).collect();
    let fit = fit_loglog(&points)?;
    Ok(ConvergenceReport {
        rows,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        reference_blow_ups,
    })
}

/// `(sqrt(mean), se)` where `se = sd(e²)/(2·sqrt(M·mean))` by the delta method.
fn rms_with_std_err(squared: &[f64]) -> (f64, f64) {
    if squared.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = squared.len() as f64;
    let mean = squared.iter().sum::<f64>() / n;
    let rms = mean.sqrt();
    if squared.len() < 2 || mean == 0.0 {
        return (rms, 0.0);
    }
    let var = squared.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se_mean = (var / n).sqrt();
    (rms, se_mean / (2.0 * rms))
}

/// One row of the moment diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub delta: f64,
    /// `max_k` of the sample mean of `|Y(kΔ)|^p` over `k = -m, …, N`.
    pub sup_moment: f64,
    pub samples_used: usize,
    pub blow_ups: usize,
}

/// Renders moment rows as `delta,sup_moment,blow_ups`.
pub fn moments_to_csv(rows: &[MomentRow]) -> String {
    let mut out = String::from("delta,sup_moment,blow_ups\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.delta, r.sup_moment, r.blow_ups);
    }
    out
}

/// Empirical `sup_k E|Y(kΔ)|^p` for every step size of the ladder.
///
/// The reference exponent of `config` is ignored; every sample draws its
/// Brownian path at the finest ladder step. Blow-ups are counted, not raised.
pub fn moment_diagnostic(config: &ExperimentConfig, p_exp: f64) -> Result<Vec<MomentRow>> {
    if !(2.0..=MOMENT_EXPONENT_CAP).contains(&p_exp) {
        return Err(SfdeError::Config(format!(
            "moment exponent {p_exp} must lie in [2, {MOMENT_EXPONENT_CAP}]"
        )));
    }
    let model = config.build_model()?;
    config.validate_ladder(&model)?;
    let policy = config.policy(&model)?;
    let deltas = config.deltas();
    let finest = *deltas.last().unwrap();
    let n_fine = grid_index(config.horizon, finest).expect("validated horizon");
    let pool = config.pool()?;

    let mut sums: Vec<Vec<f64>> = deltas
        .iter()
        .map(|&d| {
            let m = delay_steps(model.tau(), d).expect("validated step");
            vec![0.0; m + grid_index(config.horizon, d).unwrap() + 1]
        })
        .collect();
    let mut used = vec![0usize; deltas.len()];
    let mut blow_ups = vec![0usize; deltas.len()];

    let sample_moments = |i: u64| -> Result<Vec<Option<Vec<f64>>>> {
        let noise = Arc::new(BrownianGrid::generate(config.base_seed, i, n_fine, finest, model.dim_noise())?);
        deltas
            .iter()
            .map(|&delta| match simulate(&model, &policy, delta, config.horizon, noise.clone(), config.truncate) {
                Ok(path) => {
                    let y = path.nodes_y();
                    Ok(Some((0..y.len()).map(|j| euclidean_norm(y.value(j)).powf(p_exp)).collect()))
                }
                Err(SfdeError::BlowUp { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    };

    let samples = config.samples as u64;
    let mut start = 0u64;
    while start < samples {
        let end = (start + MOMENT_BATCH as u64).min(samples);
        let batch: Vec<Vec<Option<Vec<f64>>>> =
            pool.install(|| (start..end).into_par_iter().map(sample_moments).collect::<Result<_>>())?;
        for per_level in batch {
            for (level, moments) in per_level.into_iter().enumerate() {
                match moments {
                    Some(values) => {
                        used[level] += 1;
                        sums[level].iter_mut().zip(values).for_each(|(s, v)| *s += v);
                    }
                    None => blow_ups[level] += 1,
                }
            }
        }
        start = end;
    }

    Ok(deltas
        .iter()
        .enumerate()
        .map(|(level, &delta)| MomentRow {
            delta,
            sup_moment: if used[level] == 0 {
                f64::NAN
            } else {
                sums[level].iter().fold(0.0, |acc: f64, s| acc.max(s / used[level] as f64))
            },
            samples_used: used[level],
            blow_ups: blow_ups[level],
        })
        .collect())
}
