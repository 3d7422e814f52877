//! Nehari-constrained descent and multi-seed orchestration.
//!
//! Each iteration takes an H_ε-preconditioned gradient step, rescales the
//! positive part to unit ε-weighted L^p norm, and reprojects onto the
//! manifold. Armijo backtracking runs on the energy along the projected
//! path. Convergence is declared on the H_ε dual norm of the full free
//! gradient at the projected point, which near low energy controls the
//! constrained gradient as well.

use std::sync::Arc;

use rayon::prelude::*;

use crate::energy::{
    gradient, phi_seed, precondition_gradient, project_nehari_warm, NehariPoint,
};
use crate::error::Result;
use crate::grid::{h_eps_norm_sq, lp_norm_eps, Field, Point, SystemParams, TorusGrid};
use crate::ground_state::RadialProfile;

const ARMIJO_C: f64 = 1e-4;
const PROJECTION_TOL: f64 = 1e-10;
const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Stopping threshold on the preconditioned-gradient ε-norm.
    pub grad_tol: f64,
    pub step0: f64,
    /// Backtracking factor in (0, 1).
    pub backtrack: f64,
    pub seed_id: usize,
    /// Nehari norm floor ρ₀; collapse is declared below ρ₀/2. When absent,
    /// calibrated as half the seed's own ‖u‖_ε².
    pub nehari_floor: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-8,
            step0: 1.0,
            backtrack: 0.5,
            seed_id: 0,
            nehari_floor: None,
        }
    }
}

impl SolveOptions {
    fn validate(&self) {
        assert!(self.max_iters >= 1);
        assert!(self.grad_tol > 0.0);
        assert!(self.step0 > 0.0);
        assert!(self.backtrack > 0.0 && self.backtrack < 1.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    /// ‖u‖_ε² fell below the Nehari floor; the iterate left the manifold
    /// neighborhood the theory guarantees.
    Collapsed,
}

/// One accepted iteration: energy, gradient norm at the step's start, the
/// fiber scalar of the reprojection and the accepted step length.
#[derive(Debug, Clone, Copy)]
pub struct IterTrace {
    pub energy: f64,
    pub grad_norm: f64,
    pub t: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub point: NehariPoint,
    pub iterations: usize,
    pub grad_norm_history: Vec<f64>,
    pub trace: Vec<IterTrace>,
    pub status: SolveStatus,
}

/// Constrained descent from a projected seed.
pub fn minimize(seed: NehariPoint, params: &SystemParams, opts: &SolveOptions) -> Result<SolveResult> {
    opts.validate();
    let floor = opts
        .nehari_floor
        .unwrap_or_else(|| 0.5 * h_eps_norm_sq(&seed.u, params));

    let mut current = seed;
    let mut history = Vec::new();
    let mut trace = Vec::new();

    for iter in 0..opts.max_iters {
        let residual = gradient(&current.u, &current.psi, params);
        let direction = precondition_gradient(&residual, params);
        let g_sq = crate::energy::first_variation(&residual, &direction, params.eps).max(0.0);
        let g_norm = g_sq.sqrt();
        history.push(g_norm);

        if g_norm <= opts.grad_tol {
            return Ok(SolveResult {
                point: current,
                iterations: iter,
                grad_norm_history: history,
                trace,
                status: SolveStatus::Converged,
            });
        }

        // Floating-point slack so Armijo stays meaningful once the required
        // decrease drops below the energy's resolution.
        let slack = 1e-14 * current.energy.abs().max(1.0);
        let mut step = opts.step0;
        let mut accepted: Option<(NehariPoint, f64)> = None;
        let mut best: Option<(NehariPoint, f64)> = None;

        while step >= MIN_STEP {
            let mut candidate = current.u.clone();
            candidate.axpy(-step, &direction);
            let pp = lp_norm_eps(&candidate, params.p, params.eps, true);
            if pp > 0.0 {
                candidate.scale(1.0 / pp);
                let projected =
                    project_nehari_warm(&candidate, params, PROJECTION_TOL, Some(&current.psi))?;
                debug_assert!(projected.h_second < 0.0);
                if projected.energy <= current.energy - ARMIJO_C * step * g_sq + slack {
                    accepted = Some((projected, step));
                    break;
                }
                if best
                    .as_ref()
                    .map(|(b, _)| projected.energy < b.energy)
                    .unwrap_or(true)
                {
                    best = Some((projected, step));
                }
            }
            step *= opts.backtrack;
        }

        let (next, used_step) = match accepted {
            Some(x) => x,
            None => match best {
                // Keep the trace nonincreasing even when the Armijo model
                // fails at floating-point scale.
                Some((b, s)) if b.energy <= current.energy + slack => (b, s),
                _ => {
                    return Ok(SolveResult {
                        point: current,
                        iterations: iter,
                        grad_norm_history: history,
                        trace,
                        status: SolveStatus::MaxIters,
                    });
                }
            },
        };

        trace.push(IterTrace {
            energy: next.energy,
            grad_norm: g_norm,
            t: next.t,
            step: used_step,
        });
        current = next;

        if h_eps_norm_sq(&current.u, params) < 0.5 * floor {
            return Ok(SolveResult {
                point: current,
                iterations: iter + 1,
                grad_norm_history: history,
                trace,
                status: SolveStatus::Collapsed,
            });
        }
    }

    Ok(SolveResult {
        point: current,
        iterations: opts.max_iters,
        grad_norm_history: history,
        trace,
        status: SolveStatus::MaxIters,
    })
}

/// Seed each ξ through the bump projection, calibrate the shared Nehari
/// floor, and minimize independently. Output order follows input order
/// regardless of the parallel schedule; per-seed failures are recorded,
/// never fatal for the batch.
pub fn multi_start(
    xis: &[Point],
    params: &SystemParams,
    profile: &RadialProfile,
    grid: &Arc<TorusGrid>,
    opts: &SolveOptions,
) -> Vec<Result<SolveResult>> {
    let seeds = seed_batch(xis, params, profile, grid);
    let floor = shared_floor(&seeds, params);
    minimize_batch(seeds, params, opts, floor)
}

/// Projection of every seed point, in input order.
pub fn seed_batch(
    xis: &[Point],
    params: &SystemParams,
    profile: &RadialProfile,
    grid: &Arc<TorusGrid>,
) -> Vec<Result<NehariPoint>> {
    xis.par_iter()
        .map(|&xi| phi_seed(xi, params, profile, grid))
        .collect()
}

/// ρ₀ = half the minimum seed norm, when any seed succeeded.
pub fn shared_floor(seeds: &[Result<NehariPoint>], params: &SystemParams) -> Option<f64> {
    seeds
        .iter()
        .filter_map(|s| s.as_ref().ok())
        .map(|pt| h_eps_norm_sq(&pt.u, params))
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.min(v)))
        })
        .map(|min| 0.5 * min)
}

/// Minimize a batch of already-projected seeds with a common floor.
pub fn minimize_batch(
    seeds: Vec<Result<NehariPoint>>,
    params: &SystemParams,
    opts: &SolveOptions,
    floor: Option<f64>,
) -> Vec<Result<SolveResult>> {
    seeds
        .into_par_iter()
        .enumerate()
        .map(|(idx, seed)| {
            let seed = seed?;
            let seed_opts = SolveOptions {
                seed_id: idx,
                nehari_floor: floor.or(opts.nehari_floor),
                ..*opts
            };
            minimize(seed, params, &seed_opts)
        })
        .collect()
}

/// Translate a field by a whole number of grid cells per axis.
pub fn translate_field(u: &Field, cells: [i64; 3]) -> Field {
    let grid = Arc::clone(u.grid());
    let n = grid.n() as i64;
    let src = u.values();
    let mut values = vec![0.0; src.len()];
    for i in 0..grid.n() {
        let si = ((i as i64 - cells[0]).rem_euclid(n)) as usize;
        for j in 0..grid.n() {
            let sj = ((j as i64 - cells[1]).rem_euclid(n)) as usize;
            for k in 0..grid.n() {
                let sk = ((k as i64 - cells[2]).rem_euclid(n)) as usize;
                values[grid.index(i, j, k)] = src[grid.index(si, sj, sk)];
            }
        }
    }
    Field::from_values(&grid, values).expect("translation preserves size")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[should_panic]
    fn options_validate_backtrack_range() {
        let opts = SolveOptions {
            backtrack: 1.5,
            ..Default::default()
        };
        opts.validate();
    }

    #[test]
    fn translate_by_zero_is_identity() {
        let grid = TorusGrid::new(16, 1.0).unwrap();
        let u = Field::from_fn(&grid, |x, y, z| x + 2.0 * y + 3.0 * z);
        let v = translate_field(&u, [0, 0, 0]);
        assert_eq!(u.values(), v.values());
    }

    #[test]
    fn translate_moves_values_forward() {
        let grid = TorusGrid::new(16, 1.0).unwrap();
        let u = Field::from_fn(&grid, |x, _, _| x);
        let v = translate_field(&u, [3, 0, 0]);
        // Node (3,0,0) of the translate holds the value from node (0,0,0).
        assert_eq!(v.values()[grid.index(3, 0, 0)], u.values()[grid.index(0, 0, 0)]);
        assert_eq!(v.values()[grid.index(0, 0, 0)], u.values()[grid.index(13, 0, 0)]);
    }
}
