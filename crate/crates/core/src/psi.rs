//! The auxiliary electrostatic map ψ(u) and its directional derivative.
//!
//! ψ(u) solves the second equation of the system given the matter field u:
//!
//!   KGM:  -Δψ + (1 + q²u²)ψ = qu²
//!   SM:   -Δψ + ψ = qu²
//!
//! The SM operator is constant-coefficient, so the solve is one spectral
//! division. The KGM operator is symmetric positive definite; it is solved
//! by conjugate gradients preconditioned with the constant-coefficient
//! inverse (-Δ + 1 + q²·mean(u²))⁻¹ applied spectrally.
//!
//! The derivative V_u(h) = ψ'(u)[h] solves
//!
//!   KGM:  -ΔV + (1 + q²u²)V = 2qu(1 - qψ(u))h
//!   SM:   -ΔV + V = 2quh

use crate::error::{CoreError, Result};
use crate::grid::{pairwise_dot, Field, SystemKind, SystemParams};
use crate::spectral::{helmholtz_inverse, laplacian};

/// Default relative residual for ψ solves; sits far below the optimization
/// tolerances that consume ψ.
pub const DEFAULT_PSI_TOL: f64 = 1e-10;

const MAX_CG_ITERS: usize = 600;

/// Solve for ψ(u) to relative residual `tol`.
pub fn solve_psi(u: &Field, params: &SystemParams, tol: f64) -> Result<Field> {
    solve_psi_warm(u, params, tol, None)
}

/// Same as [`solve_psi`] with an optional warm-start iterate (KGM only;
/// the SM solve is direct).
pub fn solve_psi_warm(
    u: &Field,
    params: &SystemParams,
    tol: f64,
    warm: Option<&Field>,
) -> Result<Field> {
    let rhs = u.map(|v| params.q * v * v);
    match params.system {
        SystemKind::Sm => Ok(helmholtz_inverse(&rhs, 1.0, 1.0)),
        SystemKind::Kgm => {
            let coeff = u.map(|v| 1.0 + params.q * params.q * v * v);
            variable_helmholtz_solve(&coeff, &rhs, tol, warm)
        }
    }
}

/// Solve for V_u(h) given a consistent ψ = ψ(u).
pub fn solve_v(
    u: &Field,
    h: &Field,
    psi: &Field,
    params: &SystemParams,
    tol: f64,
) -> Result<Field> {
    solve_v_warm(u, h, psi, params, tol, None)
}

pub fn solve_v_warm(
    u: &Field,
    h: &Field,
    psi: &Field,
    params: &SystemParams,
    tol: f64,
    warm: Option<&Field>,
) -> Result<Field> {
    let q = params.q;
    match params.system {
        SystemKind::Sm => {
            let rhs = u.zip_map(h, |uv, hv| 2.0 * q * uv * hv);
            Ok(helmholtz_inverse(&rhs, 1.0, 1.0))
        }
        SystemKind::Kgm => {
            let mut rhs = u.zip_map(h, |uv, hv| 2.0 * q * uv * hv);
            for (r, &pv) in rhs.values_mut().iter_mut().zip(psi.values()) {
                *r *= 1.0 - q * pv;
            }
            let coeff = u.map(|v| 1.0 + q * q * v * v);
            variable_helmholtz_solve(&coeff, &rhs, tol, warm)
        }
    }
}

/// PCG for (-Δ + coeff(x))·x = b with coeff ≥ 1 pointwise, preconditioned
/// by (-Δ + mean(coeff))⁻¹.
fn variable_helmholtz_solve(
    coeff: &Field,
    b: &Field,
    tol: f64,
    warm: Option<&Field>,
) -> Result<Field> {
    let b_norm = pairwise_dot(b.values(), b.values()).sqrt();
    if b_norm == 0.0 {
        return Ok(Field::zeros(b.grid()));
    }
    let mean_coeff = coeff.integral() / coeff.grid().length().powi(3);

    let apply_a = |x: &Field| -> Field {
        let mut ax = laplacian(x);
        ax.scale(-1.0);
        for ((av, &xv), &cv) in ax
            .values_mut()
            .iter_mut()
            .zip(x.values())
            .zip(coeff.values())
        {
            *av += cv * xv;
        }
        ax
    };
    let apply_m_inv = |r: &Field| helmholtz_inverse(r, 1.0, mean_coeff);

    let mut x = match warm {
        Some(w) => w.clone(),
        None => Field::zeros(b.grid()),
    };
    let mut r = b - &apply_a(&x);
    let mut res_norm = pairwise_dot(r.values(), r.values()).sqrt();
    if res_norm <= tol * b_norm {
        return Ok(x);
    }
    let mut z = apply_m_inv(&r);
    let mut p = z.clone();
    let mut rz = pairwise_dot(r.values(), z.values());

    for iter in 1..=MAX_CG_ITERS {
        let ap = apply_a(&p);
        let pap = pairwise_dot(p.values(), ap.values());
        if !(pap > 0.0) {
            return Err(CoreError::NoConvergence {
                iterations: iter,
                residual: res_norm / b_norm,
            });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        res_norm = pairwise_dot(r.values(), r.values()).sqrt();
        if res_norm <= tol * b_norm {
            return Ok(x);
        }
        z = apply_m_inv(&r);
        let rz_new = pairwise_dot(r.values(), z.values());
        let beta = rz_new / rz;
        rz = rz_new;
        let mut p_next = z.clone();
        p_next.axpy(beta, &p);
        p = p_next;
    }
    Err(CoreError::NoConvergence {
        iterations: MAX_CG_ITERS,
        residual: res_norm / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn zero_field_maps_to_zero() {
        let grid = TorusGrid::new(16, 2.0).unwrap();
        let u = Field::zeros(&grid);
        let kgm = SystemParams::kgm(0.2, 2.0, 1.0, 0.5, 4.0).unwrap();
        let sm = SystemParams::sm(0.2, 1.0, 0.5, 4.5).unwrap();
        assert_eq!(solve_psi(&u, &kgm, 1e-10).unwrap().sup_norm(), 0.0);
        assert_eq!(solve_psi(&u, &sm, 1e-10).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn constant_field_has_algebraic_psi() {
        let grid = TorusGrid::new(16, 2.0).unwrap();
        let u = Field::constant(&grid, 1.0);

        // KGM, q = c = 1: ψ ≡ qc²/(1+q²c²) = 1/2 ≤ 1/q.
        let kgm = SystemParams::kgm(0.2, 2.0, 1.0, 0.5, 4.0).unwrap();
        let psi = solve_psi(&u, &kgm, 1e-12).unwrap();
        for &v in psi.values() {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-10);
        }

        // SM: ψ ≡ qc².
        let sm = SystemParams::sm(0.2, 2.0, 0.5, 4.5).unwrap();
        let psi = solve_psi(&u, &sm, 1e-12).unwrap();
        for &v in psi.values() {
            assert_abs_diff_eq!(v, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn kgm_constant_with_general_q() {
        let grid = TorusGrid::new(16, 2.0).unwrap();
        let c = 1.7;
        let u = Field::constant(&grid, c);
        let q = 0.6;
        let kgm = SystemParams::kgm(0.2, 2.0, q, 0.5, 4.0).unwrap();
        let psi = solve_psi(&u, &kgm, 1e-12).unwrap();
        let expected = q * c * c / (1.0 + q * q * c * c);
        for &v in psi.values() {
            assert_abs_diff_eq!(v, expected, epsilon = 1e-10);
        }
        assert!(expected <= 1.0 / q);
    }

    #[test]
    fn zero_direction_maps_to_zero_v() {
        let grid = TorusGrid::new(16, 2.0).unwrap();
        let u = Field::from_fn(&grid, |x, _, _| 1.0 + 0.3 * (3.1415 * x).sin());
        let kgm = SystemParams::kgm(0.2, 2.0, 1.0, 0.5, 4.0).unwrap();
        let psi = solve_psi(&u, &kgm, 1e-10).unwrap();
        let v = solve_v(&u, &Field::zeros(&grid), &psi, &kgm, 1e-10).unwrap();
        assert_eq!(v.sup_norm(), 0.0);
    }

    #[test]
    fn kgm_solve_meets_residual_contract() {
        let grid = TorusGrid::new(24, 2.0 * std::f64::consts::PI).unwrap();
        let u = Field::from_fn(&grid, |x, y, z| {
            1.5 * (x.sin() * (2.0 * y).cos() + (z + 0.3 * x).sin()).abs()
        });
        let params = SystemParams::kgm(0.2, 2.0, 1.0, 0.5, 4.0).unwrap();
        let tol = 1e-10;
        let psi = solve_psi(&u, &params, tol).unwrap();

        let rhs = u.map(|v| params.q * v * v);
        let mut residual = laplacian(&psi);
        residual.scale(-1.0);
        for ((rv, &pv), &uv) in residual
            .values_mut()
            .iter_mut()
            .zip(psi.values())
            .zip(u.values())
        {
            *rv += (1.0 + params.q * params.q * uv * uv) * pv;
        }
        let diff = &residual - &rhs;
        let rel = pairwise_dot(diff.values(), diff.values()).sqrt()
            / pairwise_dot(rhs.values(), rhs.values()).sqrt();
        assert!(rel <= tol * 1.01, "relative residual {rel}");
    }
}
