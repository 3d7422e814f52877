//! Periodic 3-torus discretization, scalar fields and the ε-weighted norms.
//!
//! The domain is the flat torus [0,L)³ sampled on a uniform n×n×n grid,
//! x_i = i·h with h = L/n. All integrals use the trapezoid-exact quadrature
//! weight h³ (spectrally accurate for smooth periodic integrands), and all
//! reductions run in a fixed pairwise order so results are bit-identical
//! for a given grid regardless of how callers schedule work.

use std::fmt;
use std::sync::Arc;

use rustfft::{num_complex::Complex64, Fft, FftPlanner};

use crate::error::{CoreError, Result};

/// Coupled system family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// Klein-Gordon-Maxwell: -ε²Δu + au = (u⁺)^{p-1} + ω²(qv-1)²u,
    /// -Δv + (1+q²u²)v = qu².
    Kgm,
    /// Schrödinger-Maxwell: -ε²Δu + u + ωuv = (u⁺)^{p-1}, -Δv + v = qu².
    Sm,
}

/// Physical and asymptotic parameters of one system instance.
///
/// `c0` is the coefficient of the zeroth-order term in the ε-norm:
/// a - ω² for KGM, 1 for SM. Constructors enforce the admissible ranges
/// (KGM: ω² < a, 4 ≤ p < 6; SM: ω > 0, 4 < p < 6).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub system: SystemKind,
    pub eps: f64,
    pub a: f64,
    pub q: f64,
    pub omega: f64,
    pub p: f64,
    pub c0: f64,
}

impl SystemParams {
    pub fn kgm(eps: f64, a: f64, q: f64, omega: f64, p: f64) -> Result<Self> {
        if !(eps > 0.0) || !(q > 0.0) || !(a > 0.0) {
            return Err(CoreError::InvalidParams(format!(
                "KGM requires eps > 0, a > 0, q > 0 (got eps={eps}, a={a}, q={q})"
            )));
        }
        if !(omega * omega < a) {
            return Err(CoreError::InvalidParams(format!(
                "KGM requires ω² < a (got ω²={}, a={a})",
                omega * omega
            )));
        }
        if !(4.0..6.0).contains(&p) {
            return Err(CoreError::InvalidParams(format!(
                "KGM requires 4 ≤ p < 6 (got p={p})"
            )));
        }
        Ok(Self {
            system: SystemKind::Kgm,
            eps,
            a,
            q,
            omega,
            p,
            c0: a - omega * omega,
        })
    }

    /// SM has unit linear coefficient; `a` is fixed to 1.
    pub fn sm(eps: f64, q: f64, omega: f64, p: f64) -> Result<Self> {
        if !(eps > 0.0) || !(q > 0.0) {
            return Err(CoreError::InvalidParams(format!(
                "SM requires eps > 0, q > 0 (got eps={eps}, q={q})"
            )));
        }
        if !(omega > 0.0) {
            return Err(CoreError::InvalidParams(format!(
                "SM requires ω > 0 (got ω={omega})"
            )));
        }
        if !(p > 4.0 && p < 6.0) {
            return Err(CoreError::InvalidParams(format!(
                "SM requires 4 < p < 6 (got p={p})"
            )));
        }
        Ok(Self {
            system: SystemKind::Sm,
            eps,
            a: 1.0,
            q,
            omega,
            p,
            c0: 1.0,
        })
    }

    /// Same parameters at a different ε.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        match self.system {
            SystemKind::Kgm => Self::kgm(eps, self.a, self.q, self.omega, self.p),
            SystemKind::Sm => Self::sm(eps, self.q, self.omega, self.p),
        }
    }
}

/// A point of the torus, componentwise in [0, L).
pub type Point = [f64; 3];

/// Uniform sample grid on the flat torus [0,L)³.
///
/// Holds the FFT plans for its line length so spectral operators share them.
pub struct TorusGrid {
    n: usize,
    length: f64,
    spacing: f64,
    fft_forward: Arc<dyn Fft<f64>>,
    fft_inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length
    }
}

impl TorusGrid {
    /// `n` points per axis (even, ≥ 16), side length `length`.
    pub fn new(n: usize, length: f64) -> Result<Arc<Self>> {
        if n < 16 || n % 2 != 0 {
            return Err(CoreError::InvalidParams(format!(
                "grid size must be even and ≥ 16 (got n={n})"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(CoreError::InvalidParams(format!(
                "torus side length must be positive and finite (got {length})"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Self {
            n,
            length,
            spacing: length / n as f64,
            fft_forward: planner.plan_fft_forward(n),
            fft_inverse: planner.plan_fft_inverse(n),
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Injectivity radius of the flat torus: L/2 exactly.
    pub fn injectivity_radius(&self) -> f64 {
        self.length / 2.0
    }

    pub fn num_points(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Quadrature weight h³ of one sample.
    pub fn cell_volume(&self) -> f64 {
        self.spacing * self.spacing * self.spacing
    }

    pub(crate) fn fft_forward(&self) -> &Arc<dyn Fft<f64>> {
        &self.fft_forward
    }

    pub(crate) fn fft_inverse(&self) -> &Arc<dyn Fft<f64>> {
        &self.fft_inverse
    }

    /// Row-major linear index of node (i, j, k).
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    /// Coordinates of node (i, j, k).
    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> Point {
        [
            i as f64 * self.spacing,
            j as f64 * self.spacing,
            k as f64 * self.spacing,
        ]
    }

    /// Node indices of the linear index.
    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.n;
        let j = (idx / self.n) % self.n;
        let i = idx / (self.n * self.n);
        (i, j, k)
    }

    /// Componentwise representative of x - ξ in [-L/2, L/2)³; its Euclidean
    /// norm is the geodesic distance on the flat torus.
    pub fn wrap_displacement(&self, x: Point, xi: Point) -> [f64; 3] {
        [
            wrap_coordinate(x[0] - xi[0], self.length),
            wrap_coordinate(x[1] - xi[1], self.length),
            wrap_coordinate(x[2] - xi[2], self.length),
        ]
    }

    /// Geodesic distance between two torus points.
    pub fn distance(&self, x: Point, xi: Point) -> f64 {
        let d = self.wrap_displacement(x, xi);
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

/// Representative of `d` in [-L/2, L/2).
#[inline]
pub fn wrap_coordinate(d: f64, length: f64) -> f64 {
    let mut y = d % length;
    if y < -0.5 * length {
        y += length;
    } else if y >= 0.5 * length {
        y -= length;
    }
    y
}

/// Real scalar field sampled on a [`TorusGrid`], row-major over (i, j, k).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<TorusGrid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<TorusGrid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.num_points()],
        }
    }

    pub fn constant(grid: &Arc<TorusGrid>, value: f64) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![value; grid.num_points()],
        }
    }

    /// Sample `f(x, y, z)` at every node.
    pub fn from_fn(grid: &Arc<TorusGrid>, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let n = grid.n();
        let h = grid.spacing();
        let mut values = Vec::with_capacity(grid.num_points());
        for i in 0..n {
            let x = i as f64 * h;
            for j in 0..n {
                let y = j as f64 * h;
                for k in 0..n {
                    values.push(f(x, y, k as f64 * h));
                }
            }
        }
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn from_values(grid: &Arc<TorusGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_points() {
            return Err(CoreError::InvalidParams(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.num_points()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    fn check_same_grid(&self, other: &Field) {
        assert!(
            self.grid == other.grid,
            "field arithmetic requires a shared grid"
        );
    }

    /// self + alpha·other, in place.
    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        self.check_same_grid(other);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.values {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        self.check_same_grid(other);
        Field {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// h³ Σ u(x): quadrature of ∫u dμ.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * pairwise_map_sum(&self.values, |v| v)
    }

    /// h³ Σ f(u(x)).
    pub fn integral_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.grid.cell_volume() * pairwise_map_sum(&self.values, &f)
    }

    /// h³ Σ u·v.
    pub fn inner(&self, other: &Field) -> f64 {
        self.check_same_grid(other);
        self.grid.cell_volume() * pairwise_dot(&self.values, &other.values)
    }
}

impl std::ops::Add<&Field> for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl std::ops::Sub<&Field> for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

/// Positive-part power w^e with w = max(u, 0); exact zero for u ≤ 0.
#[inline]
pub fn positive_power(u: f64, e: f64) -> f64 {
    if u > 0.0 {
        u.powf(e)
    } else {
        0.0
    }
}

const PAIRWISE_LEAF: usize = 64;

/// Fixed-order pairwise sum; deterministic and compensated by tree shape.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_map_sum(values, |v| v)
}

pub(crate) fn pairwise_map_sum(values: &[f64], f: impl Fn(f64) -> f64 + Copy) -> f64 {
    if values.len() <= PAIRWISE_LEAF {
        let mut acc = 0.0;
        for &v in values {
            acc += f(v);
        }
        acc
    } else {
        let (lo, hi) = values.split_at(values.len() / 2);
        pairwise_map_sum(lo, f) + pairwise_map_sum(hi, f)
    }
}

pub(crate) fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= PAIRWISE_LEAF {
        let mut acc = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            acc += x * y;
        }
        acc
    } else {
        let mid = a.len() / 2;
        pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
    }
}

pub(crate) fn pairwise_complex_norm_sq_weighted(
    values: &[Complex64],
    weight: impl Fn(usize) -> f64 + Copy,
) -> f64 {
    fn go(values: &[Complex64], offset: usize, weight: impl Fn(usize) -> f64 + Copy) -> f64 {
        if values.len() <= PAIRWISE_LEAF {
            let mut acc = 0.0;
            for (idx, v) in values.iter().enumerate() {
                acc += weight(offset + idx) * v.norm_sqr();
            }
            acc
        } else {
            let mid = values.len() / 2;
            go(&values[..mid], offset, weight) + go(&values[mid..], offset + mid, weight)
        }
    }
    go(values, 0, weight)
}

/// ‖u‖_ε² = ε⁻³ (ε² ∫|∇u|² + c₀ ∫u²), with the gradient term evaluated
/// spectrally.
pub fn h_eps_norm_sq(u: &Field, params: &SystemParams) -> f64 {
    h_eps_norm_sq_with(u, params.eps, params.c0)
}

pub fn h_eps_norm_sq_with(u: &Field, eps: f64, c0: f64) -> f64 {
    let grad = crate::spectral::grad_sq_integral(u);
    let mass = u.integral_of(|v| v * v);
    (eps * eps * grad + c0 * mass) / (eps * eps * eps)
}

/// |u|_{ε,p} = (ε⁻³ ∫ w^p)^{1/p} with w = |u| or u⁺ per `positive_part`.
pub fn lp_norm_eps(u: &Field, p: f64, eps: f64, positive_part: bool) -> f64 {
    assert!(p >= 1.0, "lp_norm_eps requires p ≥ 1");
    let integral = if positive_part {
        u.integral_of(|v| positive_power(v, p))
    } else {
        u.integral_of(|v| v.abs().powf(p))
    };
    (integral / (eps * eps * eps)).powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::PI;

    #[test]
    fn grid_rejects_odd_or_small_n() {
        assert!(TorusGrid::new(15, 1.0).is_err());
        assert!(TorusGrid::new(8, 1.0).is_err());
        assert!(TorusGrid::new(16, 0.0).is_err());
        assert!(TorusGrid::new(16, 1.0).is_ok());
    }

    #[test]
    fn injectivity_radius_is_half_length() {
        let grid = TorusGrid::new(16, 3.5).unwrap();
        assert_eq!(grid.injectivity_radius(), 1.75);
    }

    #[test]
    fn wrap_displacement_examples() {
        let grid = TorusGrid::new(16, 1.0).unwrap();
        let d = grid.wrap_displacement([0.3, 0.4, 0.5], [0.3, 0.4, 0.5]);
        assert_eq!(d, [0.0, 0.0, 0.0]);

        // Wrap across the seam.
        let d = grid.wrap_displacement([0.1, 0.0, 0.0], [0.9, 0.0, 0.0]);
        assert_abs_diff_eq!(d[0], 0.2, epsilon = 1e-15);
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn wrap_stays_in_half_open_interval() {
        let l = 2.0;
        for &d in &[-1.0, 1.0, -3.0, 3.0, 0.999999, -0.5, 17.25] {
            let y = wrap_coordinate(d, l);
            assert!((-1.0..1.0).contains(&y), "wrap({d}) = {y}");
        }
        assert_eq!(wrap_coordinate(1.0, 2.0), -1.0);
    }

    #[test]
    fn params_enforce_ranges() {
        assert!(SystemParams::kgm(0.1, 2.0, 1.0, 0.5, 4.0).is_ok());
        assert!(SystemParams::kgm(0.1, 2.0, 1.0, 1.5, 4.0).is_err()); // ω² > a
        assert!(SystemParams::kgm(0.1, 2.0, 1.0, 0.5, 3.9).is_err());
        assert!(SystemParams::kgm(0.1, 2.0, 1.0, 0.5, 6.0).is_err());
        assert!(SystemParams::sm(0.1, 1.0, 0.5, 4.5).is_ok());
        assert!(SystemParams::sm(0.1, 1.0, 0.5, 4.0).is_err()); // p = 4 excluded
        assert!(SystemParams::sm(0.1, 1.0, -0.5, 4.5).is_err());
        let p = SystemParams::kgm(0.1, 2.0, 1.0, 0.5, 4.0).unwrap();
        assert_abs_diff_eq!(p.c0, 1.75);
        let p = SystemParams::sm(0.1, 1.0, 0.5, 4.5).unwrap();
        assert_eq!(p.c0, 1.0);
    }

    #[test]
    fn norm_of_constant_field() {
        let grid = TorusGrid::new(16, 2.0).unwrap();
        let params = SystemParams::kgm(0.5, 2.0, 1.0, 0.5, 4.0).unwrap();
        let u = Field::constant(&grid, 3.0);
        let expected = params.c0 * 9.0 * 8.0 / 0.125; // c0 c² L³ / ε³
        assert_relative_eq!(h_eps_norm_sq(&u, &params), expected, max_relative = 1e-12);
        assert_eq!(h_eps_norm_sq(&Field::zeros(&grid), &params), 0.0);
    }

    #[test]
    fn norm_of_single_mode() {
        // u = sin(2πx/L), c0 = 1, L = 2π, ε = 1 → ‖u‖² = 8π³.
        let grid = TorusGrid::new(32, 2.0 * PI).unwrap();
        let u = Field::from_fn(&grid, |x, _, _| x.sin());
        let got = h_eps_norm_sq_with(&u, 1.0, 1.0);
        assert_relative_eq!(got, 8.0 * PI.powi(3), max_relative = 1e-12);
    }

    #[test]
    fn lp_norm_examples() {
        let grid = TorusGrid::new(16, 2.0).unwrap();
        let one = Field::constant(&grid, 1.0);
        // |1|_{1,4} = (L³)^{1/4}
        assert_relative_eq!(
            lp_norm_eps(&one, 4.0, 1.0, false),
            8.0f64.powf(0.25),
            max_relative = 1e-13
        );
        let neg = Field::constant(&grid, -1.0);
        assert_eq!(lp_norm_eps(&neg, 4.0, 1.0, true), 0.0);
    }

    #[test]
    fn positive_power_is_zero_for_nonpositive() {
        assert_eq!(positive_power(-2.0, 3.0), 0.0);
        assert_eq!(positive_power(0.0, 3.0), 0.0);
        assert_relative_eq!(positive_power(2.0, 3.0), 8.0);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_smooth_data() {
        let data: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let naive: f64 = data.iter().sum();
        assert_relative_eq!(pairwise_sum(&data), naive, max_relative = 1e-12);
    }
}
