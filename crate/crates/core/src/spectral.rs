//! FFT-based operators on torus fields.
//!
//! Fourier modes use the standard FFT ordering k = 0, 1, …, n/2-1, -n/2, …, -1
//! per axis, with angular wavenumber 2πk/L. The forward transform is
//! unnormalized; the inverse carries the 1/n³ factor, so round trips are
//! exact to round-off. Derivative multipliers zero the Nyquist mode; even
//! multipliers (Laplacian, Helmholtz inverses) keep it.

use rustfft::num_complex::Complex64;
use std::sync::Arc;

use crate::grid::{pairwise_complex_norm_sq_weighted, Field, TorusGrid};

/// Fourier coefficients of a real field, same (i, j, k) layout as the field.
pub struct Spectrum {
    grid: Arc<TorusGrid>,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    /// Forward 3-D FFT of `u`.
    pub fn of(u: &Field) -> Spectrum {
        let grid = Arc::clone(u.grid());
        let mut coeffs: Vec<Complex64> = u
            .values()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fft3_in_place(&grid, &mut coeffs, Direction::Forward);
        Spectrum { grid, coeffs }
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    /// Assemble from raw FFT-ordered coefficients.
    pub(crate) fn from_parts(grid: &Arc<TorusGrid>, coeffs: Vec<Complex64>) -> Spectrum {
        debug_assert_eq!(coeffs.len(), grid.num_points());
        Spectrum {
            grid: Arc::clone(grid),
            coeffs,
        }
    }

    /// Inverse transform back to a real field (imaginary round-off dropped).
    pub fn into_field(mut self) -> Field {
        fft3_in_place(&self.grid, &mut self.coeffs, Direction::Inverse);
        let scale = 1.0 / self.grid.num_points() as f64;
        let values = self.coeffs.iter().map(|c| c.re * scale).collect();
        Field::from_values(&self.grid, values).expect("spectrum has grid-sized buffer")
    }

    /// Multiply each coefficient by `m(|k|²)` where |k|² is the squared
    /// angular wavenumber 2π|k_int|/L summed over axes.
    pub fn apply_symbol(mut self, m: impl Fn(f64) -> f64) -> Spectrum {
        let n = self.grid.n();
        let ksq = axis_wavenumbers_sq(&self.grid);
        let mut idx = 0;
        for i in 0..n {
            let ki = ksq[i];
            for j in 0..n {
                let kij = ki + ksq[j];
                for k in 0..n {
                    let factor = m(kij + ksq[k]);
                    self.coeffs[idx] *= factor;
                    idx += 1;
                }
            }
        }
        self
    }

    /// Parseval value of ∫|∇u|² dμ for the field this spectrum came from.
    pub fn grad_sq_integral(&self) -> f64 {
        let n = self.grid.n();
        let ksq = axis_wavenumbers_sq(&self.grid);
        let l3 = self.grid.length().powi(3);
        let n6 = (self.grid.num_points() as f64).powi(2);
        let weight = move |idx: usize| {
            let k = idx % n;
            let j = (idx / n) % n;
            let i = idx / (n * n);
            ksq[i] + ksq[j] + ksq[k]
        };
        pairwise_complex_norm_sq_weighted(&self.coeffs, &weight) * l3 / n6
    }
}

/// Squared angular wavenumbers (2πk/L)² per axis index.
fn axis_wavenumbers_sq(grid: &TorusGrid) -> Vec<f64> {
    let n = grid.n();
    let base = 2.0 * std::f64::consts::PI / grid.length();
    (0..n)
        .map(|i| {
            let k = if i <= n / 2 {
                i as f64
            } else {
                i as f64 - n as f64
            };
            (base * k) * (base * k)
        })
        .collect()
}

/// Signed angular wavenumbers with the Nyquist mode zeroed (odd symbol).
fn axis_wavenumbers_odd(grid: &TorusGrid) -> Vec<f64> {
    let n = grid.n();
    let base = 2.0 * std::f64::consts::PI / grid.length();
    (0..n)
        .map(|i| {
            if i == n / 2 {
                0.0
            } else if i < n / 2 {
                base * i as f64
            } else {
                base * (i as f64 - n as f64)
            }
        })
        .collect()
}

enum Direction {
    Forward,
    Inverse,
}

/// In-place 3-D FFT: contiguous-axis batch along k, per-slab transposed
/// batches along j, full-cube transposed batch along i.
fn fft3_in_place(grid: &TorusGrid, buf: &mut [Complex64], dir: Direction) {
    let n = grid.n();
    debug_assert_eq!(buf.len(), n * n * n);
    let fft = match dir {
        Direction::Forward => grid.fft_forward().clone(),
        Direction::Inverse => grid.fft_inverse().clone(),
    };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];

    // Axis k: lines already contiguous.
    fft.process_with_scratch(buf, &mut scratch);

    // Axis j: per i-slab, transpose the n×n (j,k) plane so j-lines become
    // contiguous, batch transform, transpose back.
    let mut plane = vec![Complex64::default(); n * n];
    for slab in buf.chunks_exact_mut(n * n) {
        for j in 0..n {
            for k in 0..n {
                plane[k * n + j] = slab[j * n + k];
            }
        }
        fft.process_with_scratch(&mut plane, &mut scratch);
        for k in 0..n {
            for j in 0..n {
                slab[j * n + k] = plane[k * n + j];
            }
        }
    }

    // Axis i: transpose (i, m) → (m, i) with m = j·n + k, batch transform,
    // transpose back.
    let mut cube = vec![Complex64::default(); n * n * n];
    let plane_len = n * n;
    for i in 0..n {
        for m in 0..plane_len {
            cube[m * n + i] = buf[i * plane_len + m];
        }
    }
    fft.process_with_scratch(&mut cube, &mut scratch);
    for m in 0..plane_len {
        for i in 0..n {
            buf[i * plane_len + m] = cube[m * n + i];
        }
    }
}

/// Spectral Laplacian Δu; exact for band-limited fields.
pub fn laplacian(u: &Field) -> Field {
    Spectrum::of(u).apply_symbol(|ksq| -ksq).into_field()
}

/// (κ(-Δ) + mass)⁻¹ u via spectral division. Requires mass > 0 or κ, mass
/// not both vanishing on any mode; with mass > 0 the symbol never vanishes.
pub fn helmholtz_inverse(u: &Field, kappa: f64, mass: f64) -> Field {
    debug_assert!(mass > 0.0);
    Spectrum::of(u)
        .apply_symbol(|ksq| 1.0 / (kappa * ksq + mass))
        .into_field()
}

/// ∫|∇u|² dμ by Parseval.
pub fn grad_sq_integral(u: &Field) -> f64 {
    Spectrum::of(u).grad_sq_integral()
}

/// Spectral partial derivative ∂u/∂x_axis (Nyquist mode zeroed).
pub fn derivative(u: &Field, axis: usize) -> Field {
    assert!(axis < 3);
    let grid = Arc::clone(u.grid());
    let n = grid.n();
    let kd = axis_wavenumbers_odd(&grid);
    let mut spec = Spectrum::of(u);
    let mut idx = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let w = match axis {
                    0 => kd[i],
                    1 => kd[j],
                    _ => kd[k],
                };
                spec.coeffs[idx] *= Complex64::new(0.0, w);
                idx += 1;
            }
        }
    }
    spec.into_field()
}

/// Trigonometric interpolation of `u` onto a grid with `factor`× points per
/// axis (zero padding in Fourier space). Used to re-audit residuals at
/// higher resolution.
pub fn upsample(u: &Field, factor: usize) -> Field {
    assert!(factor >= 1);
    if factor == 1 {
        return u.clone();
    }
    let grid = u.grid();
    let n = grid.n();
    let m = n * factor;
    let fine = TorusGrid::new(m, grid.length()).expect("upsampled grid is valid");
    let spec = Spectrum::of(u);
    let mut coeffs = vec![Complex64::default(); m * m * m];
    // FFT-ordered index in the fine grid carrying the same wavenumber.
    // Coarse Nyquist modes (±n/2 ambiguous) are dropped, which keeps the
    // interpolant real; the fields audited this way are band-limited well
    // below Nyquist.
    let map_index = |src: usize| -> Option<usize> {
        if src < n / 2 {
            Some(src)
        } else if src == n / 2 {
            None
        } else {
            Some(src + (m - n))
        }
    };
    for i in 0..n {
        let Some(fi) = map_index(i) else { continue };
        for j in 0..n {
            let Some(fj) = map_index(j) else { continue };
            for k in 0..n {
                let Some(fk) = map_index(k) else { continue };
                coeffs[(fi * m + fj) * m + fk] = spec.coeffs[(i * n + j) * n + k];
            }
        }
    }
    let mut fine_spec = Spectrum {
        grid: fine,
        coeffs,
    };
    let scale = (factor * factor * factor) as f64;
    for c in &mut fine_spec.coeffs {
        *c *= scale;
    }
    fine_spec.into_field()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::PI;

    fn grid(n: usize, l: f64) -> Arc<TorusGrid> {
        TorusGrid::new(n, l).unwrap()
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = grid(16, 2.0);
        let u = Field::constant(&g, 5.0);
        let lap = laplacian(&u);
        assert!(lap.sup_norm() < 1e-12);
    }

    #[test]
    fn laplacian_of_single_mode() {
        // Δ sin(2πx/L) = -(2π/L)² sin(2πx/L)
        let l = 3.0;
        let g = grid(32, l);
        let k = 2.0 * PI / l;
        let u = Field::from_fn(&g, |x, _, _| (k * x).sin());
        let lap = laplacian(&u);
        for (got, want) in lap.values().iter().zip(u.values()) {
            assert_abs_diff_eq!(*got, -k * k * want, epsilon = 1e-10);
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let g = grid(16, 1.0);
        let u = Field::from_fn(&g, |x, y, z| (3.1 * x).sin() + (2.0 * y).cos() * z);
        let back = Spectrum::of(&u).apply_symbol(|_| 1.0).into_field();
        for (a, b) in u.values().iter().zip(back.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_mode_matches_analytic() {
        let l = 2.0 * PI;
        let g = grid(32, l);
        let u = Field::from_fn(&g, |_, y, _| (2.0 * y).sin());
        let dy = derivative(&u, 1);
        let want = Field::from_fn(&g, |_, y, _| 2.0 * (2.0 * y).cos());
        for (a, b) in dy.values().iter().zip(want.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn parseval_matches_pointwise_gradient() {
        let g = grid(24, 2.0 * PI);
        let u = Field::from_fn(&g, |x, y, z| {
            (x).sin() * (2.0 * y).cos() + 0.3 * (3.0 * z).sin()
        });
        let spectral = grad_sq_integral(&u);
        let pointwise: f64 = (0..3)
            .map(|axis| {
                let d = derivative(&u, axis);
                d.integral_of(|v| v * v)
            })
            .sum();
        assert_relative_eq!(spectral, pointwise, max_relative = 1e-12);
    }

    #[test]
    fn helmholtz_inverse_solves_screened_poisson() {
        // (-Δ + m) ψ = f with f a single mode has ψ = f/(k² + m).
        let l = 2.0 * PI;
        let g = grid(32, l);
        let f = Field::from_fn(&g, |x, y, _| (x).cos() * (y).sin());
        let psi = helmholtz_inverse(&f, 1.0, 2.5);
        // k² = 1 + 1 = 2 for this mode.
        for (a, b) in psi.values().iter().zip(f.values()) {
            assert_abs_diff_eq!(*a, b / 4.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn upsample_reproduces_band_limited_field() {
        let g = grid(16, 2.0 * PI);
        let u = Field::from_fn(&g, |x, y, z| (x).sin() + (2.0 * y).cos() * (z).sin());
        let fine = upsample(&u, 2);
        let gf = fine.grid();
        assert_eq!(gf.n(), 32);
        let want = Field::from_fn(gf, |x, y, z| (x).sin() + (2.0 * y).cos() * (z).sin());
        for (a, b) in fine.values().iter().zip(want.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }
}
