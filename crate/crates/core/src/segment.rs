//! Piecewise-linear segments on `[-τ, 0]`.
//!
//! A segment is stored as `m + 1` equidistant node values; node `i` holds the
//! value at `θ = (i - m)·Δ`, so node `m` is `θ = 0` and node `0` is `θ = -τ`.
//! Between nodes the segment is the linear interpolant, which is exactly the
//! shape of the numerical segment `Y_{kΔ}` produced by the scheme.

use crate::error::{Result, SfdeError};

/// Relative tolerance (in units of `τ`) within which an out-of-range `θ` is
/// clamped onto `[-τ, 0]`.
pub const THETA_TOLERANCE: f64 = 1e-12;

/// Gauss-Legendre nodes and weights on `[-1, 1]` for 1, 2 and 3 points.
const GAUSS_1: [(f64, f64); 1] = [(0.0, 2.0)];
const GAUSS_2: [(f64, f64); 2] = [
    (-0.577_350_269_189_625_8, 1.0),
    (0.577_350_269_189_625_8, 1.0),
];
const GAUSS_3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Gauss-Legendre rule with `ceil((power + 1) / 2)` points, exact for a
/// polynomial of degree `power` on each sub-interval.
fn gauss_rule(power: u32) -> Result<&'static [(f64, f64)]> {
    match power {
        1 => Ok(&GAUSS_1),
        2 | 3 => Ok(&GAUSS_2),
        4 => Ok(&GAUSS_3),
        _ => Err(SfdeError::Config(format!(
            "unsupported integral power {power}; expected 1..=4"
        ))),
    }
}

/// Borrowed segment: `m + 1` nodes of dimension `dim`, stored node-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentView<'a> {
    nodes: &'a [f64],
    delta: f64,
    dim: usize,
}

impl<'a> SegmentView<'a> {
    /// Wraps an already validated flat node buffer.
    pub(crate) fn from_parts(nodes: &'a [f64], delta: f64, dim: usize) -> Self {
        debug_assert!(dim > 0 && nodes.len().is_multiple_of(dim) && nodes.len() >= 2 * dim);
        SegmentView { nodes, delta, dim }
    }

    /// Number of node intervals `m`.
    pub fn m(&self) -> usize {
        self.nodes.len() / self.dim - 1
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The delay `τ = m·Δ`.
    pub fn tau(&self) -> f64 {
        self.m() as f64 * self.delta
    }

    /// Node `i`, the value at `θ = (i - m)·Δ`.
    pub fn node(&self, i: usize) -> &'a [f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    /// The value at `θ = 0`.
    pub fn head(&self) -> &'a [f64] {
        self.node(self.m())
    }

    /// The value at `θ = -τ`.
    pub fn tail(&self) -> &'a [f64] {
        self.node(0)
    }

    pub fn as_flat(&self) -> &'a [f64] {
        self.nodes
    }

    /// Linear interpolation at `theta ∈ [-τ, 0]`. Node values are returned
    /// exactly.
    pub fn eval(&self, theta: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(theta, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, theta: f64, out: &mut [f64]) -> Result<()> {
        let tau = self.tau();
        let tol = THETA_TOLERANCE * tau;
        if !theta.is_finite() || theta < -tau - tol || theta > tol {
            return Err(SfdeError::Domain(format!(
                "theta = {theta} outside [-{tau}, 0]"
            )));
        }
        let m = self.m();
        let u = ((theta + tau) / self.delta).clamp(0.0, m as f64);
        let i = (u.floor() as usize).min(m - 1);
        let w = u - i as f64;
        if w == 0.0 {
            out.copy_from_slice(self.node(i));
        } else if w >= 1.0 {
            out.copy_from_slice(self.node(i + 1));
        } else {
            let (a, b) = (self.node(i), self.node(i + 1));
            for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
                *o = (1.0 - w) * x + w * y;
            }
        }
        Ok(())
    }

    /// Sup-norm `‖ψ‖ = sup_θ |ψ(θ)|`; for a piecewise-linear segment this is
    /// the largest Euclidean node norm.
    pub fn norm(&self) -> f64 {
        self.nodes
            .chunks_exact(self.dim)
            .map(euclidean_norm)
            .fold(0.0, f64::max)
    }

    /// `∫_{-τ}^0 ψ(θ)^power dθ`, exact for the piecewise-linear `ψ`.
    ///
    /// `power = 1` is computed componentwise; powers `2..=4` require a scalar
    /// segment.
    pub fn integral_power(&self, power: u32) -> Result<Vec<f64>> {
        let rule = gauss_rule(power)?;
        if power > 1 && self.dim != 1 {
            return Err(SfdeError::Config(format!(
                "integral power {power} requires a scalar segment, got dim {}",
                self.dim
            )));
        }
        Ok((0..self.dim)
            .map(|c| self.component_integral(c, power, rule))
            .collect())
    }

    /// Scalar shorthand for [`SegmentView::integral_power`].
    pub fn scalar_integral_power(&self, power: u32) -> Result<f64> {
        if self.dim != 1 {
            return Err(SfdeError::Config(format!(
                "scalar integral requested on a segment of dim {}",
                self.dim
            )));
        }
        Ok(self.component_integral(0, power, gauss_rule(power)?))
    }

    fn component_integral(&self, c: usize, power: u32, rule: &[(f64, f64)]) -> f64 {
        if power == 2 {
            return self.component_square_integral(c);
        }
        let half = 0.5 * self.delta;
        let mut total = 0.0;
        let mut prev = self.nodes[c];
        for node in self.nodes.chunks_exact(self.dim).skip(1) {
            let next = node[c];
            let mid = 0.5 * (prev + next);
            let slope = 0.5 * (next - prev);
            let mut acc = 0.0;
            for &(x, w) in rule {
                acc += w * (mid + slope * x).powi(power as i32);
            }
            total += acc;
            prev = next;
        }
        half * total
    }

    // Closed form of the two-point rule for a linear piece: (a² + ab + b²)/3.
    fn component_square_integral(&self, c: usize) -> f64 {
        let mut total = 0.0;
        let mut prev = self.nodes[c];
        for node in self.nodes.chunks_exact(self.dim).skip(1) {
            let next = node[c];
            total += prev * prev + prev * next + next * next;
            prev = next;
        }
        total * self.delta / 3.0
    }

    pub fn to_owned(&self) -> Segment {
        Segment {
            nodes: self.nodes.to_vec(),
            delta: self.delta,
            dim: self.dim,
        }
    }
}

pub(crate) fn euclidean_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Owned piecewise-linear segment on `[-τ, 0]` with `τ = m·Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    nodes: Vec<f64>,
    delta: f64,
    dim: usize,
}

impl Segment {
    /// Builds a segment from its node vectors, ordered from `θ = -τ` to `θ = 0`.
    pub fn new(nodes: Vec<Vec<f64>>, delta: f64) -> Result<Self> {
        let dim = nodes.first().map(Vec::len).unwrap_or(0);
        if nodes.iter().any(|n| n.len() != dim) {
            return Err(SfdeError::Domain("node vectors differ in length".into()));
        }
        Self::from_flat(nodes.concat(), delta, dim)
    }

    /// Builds a scalar segment.
    pub fn scalar(values: &[f64], delta: f64) -> Result<Self> {
        Self::from_flat(values.to_vec(), delta, 1)
    }

    /// Builds a segment from a node-major buffer of length `(m + 1)·dim`.
    pub fn from_flat(nodes: Vec<f64>, delta: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(SfdeError::Domain("segment dimension must be positive".into()));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(SfdeError::Domain(format!("node spacing {delta} must be positive")));
        }
        if !nodes.len().is_multiple_of(dim) || nodes.len() < 2 * dim {
            return Err(SfdeError::Domain(format!(
                "need at least two nodes of dim {dim}, got {} values",
                nodes.len()
            )));
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(SfdeError::Domain("segment nodes must be finite".into()));
        }
        Ok(Segment { nodes, delta, dim })
    }

    /// Samples `f` at the `m + 1` grid points `θ = (i - m)·Δ`.
    pub fn from_fn(m: usize, delta: f64, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(SfdeError::Domain("a segment needs m >= 1".into()));
        }
        let mut nodes = Vec::with_capacity((m + 1) * dim);
        for i in 0..=m {
            let value = f(node_theta(i, m, delta));
            if value.len() != dim {
                return Err(SfdeError::Domain(format!(
                    "function returned {} components, expected {dim}",
                    value.len()
                )));
            }
            nodes.extend_from_slice(&value);
        }
        Self::from_flat(nodes, delta, dim)
    }

    /// The segment that is identically `value`.
    pub fn constant(m: usize, delta: f64, value: &[f64]) -> Result<Self> {
        Self::from_fn(m, delta, value.len(), |_| value.to_vec())
    }

    pub fn zeros(m: usize, delta: f64, dim: usize) -> Result<Self> {
        Self::from_flat(vec![0.0; (m + 1) * dim], delta, dim)
    }

    pub fn view(&self) -> SegmentView<'_> {
        SegmentView::from_parts(&self.nodes, self.delta, self.dim)
    }

    pub fn m(&self) -> usize {
        self.view().m()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tau(&self) -> f64 {
        self.view().tau()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn head(&self) -> &[f64] {
        self.node(self.m())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.nodes
    }

    pub fn eval(&self, theta: f64) -> Result<Vec<f64>> {
        self.view().eval(theta)
    }

    pub fn norm(&self) -> f64 {
        self.view().norm()
    }

    pub fn integral_power(&self, power: u32) -> Result<Vec<f64>> {
        self.view().integral_power(power)
    }

    pub fn scalar_integral_power(&self, power: u32) -> Result<f64> {
        self.view().scalar_integral_power(power)
    }

    /// Drops the oldest node and appends `new_node` at `θ = 0`: the segment
    /// one grid step later.
    pub fn shift_append(&self, new_node: &[f64]) -> Result<Segment> {
        if new_node.len() != self.dim {
            return Err(SfdeError::Domain(format!(
                "appended node has {} components, expected {}",
                new_node.len(),
                self.dim
            )));
        }
        if new_node.iter().any(|v| !v.is_finite()) {
            return Err(SfdeError::Domain("appended node must be finite".into()));
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        nodes.extend_from_slice(&self.nodes[self.dim..]);
        nodes.extend_from_slice(new_node);
        Ok(Segment {
            nodes,
            delta: self.delta,
            dim: self.dim,
        })
    }
}

/// `θ` of node `i` in a segment with `m` intervals of width `delta`.
pub(crate) fn node_theta(i: usize, m: usize, delta: f64) -> f64 {
    -((m - i) as f64) * delta
}

/// A sampled path `{(t_j, v_j)}` starting at `t_0 = -τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

impl GridFunction {
    pub fn new(tau: f64, times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || times.is_empty() || values.len() != times.len() * dim {
            return Err(SfdeError::Domain(format!(
                "grid function with {} times and {} values of dim {dim}",
                times.len(),
                values.len()
            )));
        }
        if (times[0] + tau).abs() > THETA_TOLERANCE * tau.max(1.0) {
            return Err(SfdeError::Domain(format!(
                "grid function must start at -tau = {}, starts at {}",
                -tau, times[0]
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SfdeError::Domain("grid times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SfdeError::Domain("grid values must be finite".into()));
        }
        Ok(GridFunction { times, values, dim })
    }

    pub(crate) fn from_parts_unchecked(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Self {
        GridFunction { times, values, dim }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn values_flat(&self) -> &[f64] {
        &self.values
    }
}
