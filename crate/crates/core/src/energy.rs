//! The reduced energy functional, its first variation, the Nehari residual
//! and the fiber projection onto the Nehari manifold.
//!
//! With ψ = ψ(u) from the auxiliary solve, the functional is
//!
//!   KGM:  I_ε(u) = ½‖u‖_ε² + (ω²/2)·(q/ε³)∫u²ψ − (1/p)|u⁺|_{ε,p}^p
//!   SM:   I_ε(u) = ½‖u‖_ε² + (ω/4)·(1/ε³)∫u²ψ − (1/p)|u⁺|_{ε,p}^p
//!
//! and the chain rule through ψ collapses so that the first variation pairs
//! against the strong-form residual
//!
//!   KGM:  R = -ε²Δu + au − (u⁺)^{p−1} − ω²(1−qψ)²u
//!   SM:   R = -ε²Δu + u + ωψu − (u⁺)^{p−1}
//!
//! via I'_ε(u)[φ] = ε⁻³∫Rφ. The Nehari residual is N_ε(u) = I'_ε(u)[u];
//! along a fiber t ↦ I_ε(tu) the root of H'(t) is unique and concave
//! (H''(t_ε) < 0), which the projection verifies.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::grid::{h_eps_norm_sq, Field, Point, SystemKind, SystemParams, TorusGrid};
use crate::ground_state::{bump_field, RadialProfile};
use crate::psi::{solve_psi, solve_psi_warm, solve_v, DEFAULT_PSI_TOL};
use crate::spectral::{helmholtz_inverse, laplacian};

/// A field on the Nehari manifold together with its fiber data.
#[derive(Debug, Clone)]
pub struct NehariPoint {
    /// The projected field t·u.
    pub u: Field,
    /// Electrostatic potential ψ(t·u) consistent with `u`.
    pub psi: Field,
    /// Projection scalar applied to the input field.
    pub t: f64,
    /// I_ε at the projected field.
    pub energy: f64,
    /// N_ε at the projected field; tiny after a successful projection.
    pub nehari_residual: f64,
    /// H''(t) at the root; strictly negative.
    pub h_second: f64,
}

/// (u⁺)^e with cheap paths for the integer exponents that dominate runs.
#[inline]
fn pospow(u: f64, e: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if e == 3.0 {
        u * u * u
    } else if e == 4.0 {
        let s = u * u;
        s * s
    } else {
        u.powf(e)
    }
}

/// ε⁻³ ∫ (u⁺)^p.
pub fn positive_part_mass(u: &Field, p: f64, eps: f64) -> f64 {
    u.integral_of(|v| pospow(v, p)) / (eps * eps * eps)
}

/// I_ε(u) given a consistent ψ = ψ(u).
pub fn energy(u: &Field, psi: &Field, params: &SystemParams) -> f64 {
    let eps3 = params.eps.powi(3);
    let norm_sq = h_eps_norm_sq(u, params);
    let g_int = u.zip_map(psi, |uv, pv| uv * uv * pv).integral() / eps3;
    let mass_p = positive_part_mass(u, params.p, params.eps);
    let coupling = match params.system {
        SystemKind::Kgm => 0.5 * params.omega * params.omega * params.q * g_int,
        SystemKind::Sm => 0.25 * params.omega * g_int,
    };
    0.5 * norm_sq + coupling - mass_p / params.p
}

/// Strong-form residual R with I'_ε(u)[φ] = ε⁻³∫Rφ.
pub fn gradient(u: &Field, psi: &Field, params: &SystemParams) -> Field {
    let eps_sq = params.eps * params.eps;
    let mut r = laplacian(u);
    r.scale(-eps_sq);
    let pm1 = params.p - 1.0;
    match params.system {
        SystemKind::Kgm => {
            let (a, q, om2) = (params.a, params.q, params.omega * params.omega);
            for ((rv, &uv), &pv) in r
                .values_mut()
                .iter_mut()
                .zip(u.values())
                .zip(psi.values())
            {
                let s = 1.0 - q * pv;
                *rv += a * uv - pospow(uv, pm1) - om2 * s * s * uv;
            }
        }
        SystemKind::Sm => {
            let om = params.omega;
            for ((rv, &uv), &pv) in r
                .values_mut()
                .iter_mut()
                .zip(u.values())
                .zip(psi.values())
            {
                *rv += uv + om * pv * uv - pospow(uv, pm1);
            }
        }
    }
    r
}

/// H_ε-preconditioned descent direction (ε²(−Δ) + c₀)⁻¹ R.
pub fn precondition_gradient(r: &Field, params: &SystemParams) -> Field {
    helmholtz_inverse(r, params.eps * params.eps, params.c0)
}

/// I'_ε(u)[h] from the strong residual: ε⁻³∫R·h.
pub fn first_variation(residual: &Field, direction: &Field, eps: f64) -> f64 {
    residual.inner(direction) / (eps * eps * eps)
}

/// H_ε dual norm of the gradient, √(ε⁻³∫P·R) with P the preconditioned
/// direction.
pub fn preconditioned_grad_norm(residual: &Field, precond: &Field, eps: f64) -> f64 {
    (first_variation(residual, precond, eps)).max(0.0).sqrt()
}

/// Coupling part of the Nehari residual:
/// KGM (qω²/ε³)∫(2−qψ)ψu², SM (ω/ε³)∫ψu².
fn nehari_coupling(u: &Field, psi: &Field, params: &SystemParams) -> f64 {
    let eps3 = params.eps.powi(3);
    match params.system {
        SystemKind::Kgm => {
            let q = params.q;
            let integral = u
                .zip_map(psi, |uv, pv| (2.0 - q * pv) * pv * uv * uv)
                .integral();
            params.q * params.omega * params.omega * integral / eps3
        }
        SystemKind::Sm => {
            let integral = u.zip_map(psi, |uv, pv| pv * uv * uv).integral();
            params.omega * integral / eps3
        }
    }
}

/// N_ε(u) = I'_ε(u)[u] = ‖u‖_ε² − |u⁺|_{ε,p}^p + coupling.
pub fn nehari_residual(u: &Field, psi: &Field, params: &SystemParams) -> f64 {
    h_eps_norm_sq(u, params) - positive_part_mass(u, params.p, params.eps)
        + nehari_coupling(u, psi, params)
}

/// Finds the unique t > 0 placing t·u on the Nehari manifold.
///
/// Works for any u with u⁺ ≢ 0; callers that normalize |u⁺|_{ε,p} = 1 get
/// the textbook fiber scalar. `tol` is the relative tolerance on t.
pub fn project_nehari(u: &Field, params: &SystemParams, tol: f64) -> Result<NehariPoint> {
    project_nehari_warm(u, params, tol, None)
}

/// [`project_nehari`] with a warm-start guess for the inner ψ solves.
pub fn project_nehari_warm(
    u: &Field,
    params: &SystemParams,
    tol: f64,
    psi_seed: Option<&Field>,
) -> Result<NehariPoint> {
    let mass_p = positive_part_mass(u, params.p, params.eps);
    if mass_p == 0.0 {
        return Err(CoreError::ZeroPositivePart);
    }
    let norm_sq = h_eps_norm_sq(u, params);
    let p = params.p;

    // Decoupled root; the coupling is nonnegative, so the true root is ≥ it.
    let t_scale = (norm_sq / mass_p).powf(1.0 / (p - 2.0));

    // SM coupling is exactly quartic in t through ψ(tu) = t²ψ(u); KGM
    // re-solves ψ(tu) per evaluation with warm starts.
    let sm_g1 = match params.system {
        SystemKind::Sm if params.omega != 0.0 => {
            let psi0 = solve_psi_warm(u, params, DEFAULT_PSI_TOL, psi_seed)?;
            let g1 = u.zip_map(&psi0, |uv, pv| uv * uv * pv).integral() / params.eps.powi(3);
            Some((psi0, g1))
        }
        _ => None,
    };
    let mut psi_cache: Option<Field> = psi_seed.cloned();

    let mut eval_g = |t: f64| -> Result<f64> {
        let coupling = if params.omega == 0.0 {
            0.0
        } else {
            match params.system {
                SystemKind::Sm => {
                    let (_, g1) = sm_g1.as_ref().expect("precomputed for coupled SM");
                    params.omega * t * t * g1
                }
                SystemKind::Kgm => {
                    let tu = u.scaled(t);
                    let psi_t = solve_psi_warm(&tu, params, DEFAULT_PSI_TOL, psi_cache.as_ref())?;
                    let q = params.q;
                    let integral = u
                        .zip_map(&psi_t, |uv, pv| (2.0 - q * pv) * pv * uv * uv)
                        .integral();
                    psi_cache = Some(psi_t);
                    q * params.omega * params.omega * integral / params.eps.powi(3)
                }
            }
        };
        Ok(t.powf(p - 2.0) * mass_p - norm_sq - coupling)
    };

    // Bracket [lo, hi] with g(lo) ≤ 0 < g(hi).
    let mut lo = t_scale;
    let mut g_lo = eval_g(lo)?;
    let mut shrink = 0;
    while g_lo > 0.0 {
        lo *= 0.5;
        g_lo = eval_g(lo)?;
        shrink += 1;
        if shrink > 80 {
            return Err(CoreError::NoRoot(
                "fiber function positive down to t ≈ 0".into(),
            ));
        }
    }
    let mut hi = 2.0 * lo;
    let mut g_hi = eval_g(hi)?;
    let mut doublings = 0;
    while g_hi <= 0.0 {
        hi *= 2.0;
        g_hi = eval_g(hi)?;
        doublings += 1;
        if doublings > 60 {
            return Err(CoreError::NoRoot(format!(
                "no sign change up to t = {hi}; configuration outside the \
                 admissible exponent range"
            )));
        }
    }

    let t = brent_root(&mut eval_g, lo, g_lo, hi, g_hi, tol.min(1e-10))?;

    // Assemble the projected point.
    let u_out = u.scaled(t);
    let psi_out = match params.system {
        SystemKind::Sm => match &sm_g1 {
            // ψ is exactly quadratic under scaling for SM.
            Some((psi0, _)) => psi0.scaled(t * t),
            None => solve_psi(&u_out, params, DEFAULT_PSI_TOL)?,
        },
        SystemKind::Kgm => solve_psi_warm(&u_out, params, DEFAULT_PSI_TOL, psi_cache.as_ref())?,
    };
    let residual = nehari_residual(&u_out, &psi_out, params);
    let norm_out = h_eps_norm_sq(&u_out, params);
    if residual.abs() > 1e-8 * norm_out.max(1.0) {
        return Err(CoreError::NoRoot(format!(
            "projection left Nehari residual {residual:.3e} (‖u‖² = {norm_out:.3e})"
        )));
    }

    let h_second = fiber_second_derivative(u, &u_out, &psi_out, t, norm_sq, mass_p, params)?;
    if !(h_second < 0.0) {
        return Err(CoreError::NoRoot(format!(
            "fiber not strictly concave at the root (H'' = {h_second:.3e})"
        )));
    }

    let energy_val = energy(&u_out, &psi_out, params);
    Ok(NehariPoint {
        u: u_out,
        psi: psi_out,
        t,
        energy: energy_val,
        nehari_residual: residual,
        h_second,
    })
}

/// H''(t) at the fiber root, for the fiber of the (unscaled) input u.
fn fiber_second_derivative(
    u: &Field,
    u_out: &Field,
    psi_out: &Field,
    t: f64,
    norm_sq: f64,
    mass_p: f64,
    params: &SystemParams,
) -> Result<f64> {
    let p = params.p;
    let eps3 = params.eps.powi(3);
    let base = norm_sq - (p - 1.0) * t.powf(p - 2.0) * mass_p;
    match params.system {
        SystemKind::Sm => {
            if params.omega == 0.0 {
                return Ok(base);
            }
            // ψ(tu) = t²ψ(u): coupling in H is (ω/4)t⁴G₁, so H'' gains 3ωG₁t².
            let g1_t = u_out
                .zip_map(psi_out, |uv, pv| uv * uv * pv)
                .integral()
                / eps3; // = t⁴ G₁
            Ok(base + 3.0 * params.omega * g1_t / (t * t))
        }
        SystemKind::Kgm => {
            if params.omega == 0.0 {
                return Ok(base);
            }
            let q = params.q;
            let om2 = params.omega * params.omega;
            // ∫(2−qψ_t)ψ_t u² with ψ_t = ψ(tu), u the fiber base field.
            let c_int = u
                .zip_map(psi_out, |uv, pv| (2.0 - q * pv) * pv * uv * uv)
                .integral();
            // V_{tu}(u) solves the linearized equation at tu in direction u.
            let v = solve_v(u_out, u, psi_out, params, DEFAULT_PSI_TOL)?;
            let v_int = {
                let mut acc = u.zip_map(&v, |uv, vv| uv * uv * vv);
                for (av, &pv) in acc.values_mut().iter_mut().zip(psi_out.values()) {
                    *av *= 1.0 - q * pv;
                }
                acc.integral()
            };
            Ok(base + q * om2 * c_int / eps3 + 2.0 * q * om2 * t * v_int / eps3)
        }
    }
}

/// Seed map: project the transplanted bump at ξ onto the Nehari manifold.
/// The recorded `t` is the fiber scalar of the bump itself.
pub fn phi_seed(
    xi: Point,
    params: &SystemParams,
    profile: &RadialProfile,
    grid: &Arc<TorusGrid>,
) -> Result<NehariPoint> {
    let w = bump_field(xi, params, profile, grid)?;
    project_nehari(&w, params, 1e-10)
}

/// Brent's method on a bracketed root; `f` may fail (propagated).
fn brent_root(
    f: &mut impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut fa: f64,
    mut b: f64,
    mut fb: f64,
    rel_tol: f64,
) -> Result<f64> {
    debug_assert!(fa * fb <= 0.0);
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut mflag = true;
    let mut d = a;

    for _ in 0..200 {
        if fb == 0.0 {
            return Ok(b);
        }
        let tol = rel_tol * b.abs() + f64::MIN_POSITIVE;
        if (b - a).abs() <= tol {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            // Inverse quadratic interpolation.
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };

        let lo = (3.0 * a + b) / 4.0;
        let cond = !((lo.min(b) < s && s < lo.max(b))
            && (!mflag || (s - b).abs() < 0.5 * (b - c).abs())
            && (mflag || (s - b).abs() < 0.5 * (c - d).abs()));
        if cond {
            s = 0.5 * (a + b);
            mflag = true;
        } else {
            mflag = false;
        }

        let fs = f(s)?;
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{lp_norm_eps, TorusGrid};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn kgm(eps: f64) -> SystemParams {
        SystemParams::kgm(eps, 2.0, 1.0, 0.5, 4.0).unwrap()
    }

    #[test]
    fn energy_of_zero_field_vanishes() {
        let grid = TorusGrid::new(16, 2.0).unwrap();
        let u = Field::zeros(&grid);
        let psi = Field::zeros(&grid);
        assert_eq!(energy(&u, &psi, &kgm(0.2)), 0.0);
        assert_eq!(nehari_residual(&u, &psi, &kgm(0.2)), 0.0);
    }

    #[test]
    fn kgm_constant_energy_closed_form() {
        let grid = TorusGrid::new(16, 2.0).unwrap();
        let params = kgm(0.5);
        let c: f64 = 1.3;
        let u = Field::constant(&grid, c);
        let psi = crate::psi::solve_psi(&u, &params, 1e-12).unwrap();
        let v_eps = grid.length().powi(3) / params.eps.powi(3);
        let (q, om2, p) = (params.q, params.omega * params.omega, params.p);
        let psi_c = q * c * c / (1.0 + q * q * c * c);
        let expected = 0.5 * params.c0 * c * c * v_eps
            + 0.5 * om2 * (q * c * c * psi_c) * v_eps
            - c.powf(p) / p * v_eps;
        assert_relative_eq!(
            energy(&u, &psi, &params),
            expected,
            max_relative = 1e-9
        );
    }

    #[test]
    fn nonpositive_fields_have_linear_gradient() {
        let grid = TorusGrid::new(16, 2.0 * std::f64::consts::PI).unwrap();
        let params = kgm(0.3);
        let u = Field::from_fn(&grid, |x, y, _| -1.0 - 0.4 * (x.sin() * y.cos()).abs());
        let psi = crate::psi::solve_psi(&u, &params, 1e-12).unwrap();
        let r = gradient(&u, &psi, &params);
        // Independent assembly of the linear operator at the same ψ.
        let mut lin = laplacian(&u);
        lin.scale(-params.eps * params.eps);
        for ((lv, &uv), &pv) in lin
            .values_mut()
            .iter_mut()
            .zip(u.values())
            .zip(psi.values())
        {
            let s = 1.0 - params.q * pv;
            *lv += params.a * uv - params.omega * params.omega * s * s * uv;
        }
        for (a, b) in r.values().iter().zip(lin.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_pairing_is_definitional() {
        let grid = TorusGrid::new(16, 2.0 * std::f64::consts::PI).unwrap();
        for params in [
            kgm(0.4),
            SystemParams::sm(0.4, 1.0, 0.7, 4.5).unwrap(),
        ] {
            let u = Field::from_fn(&grid, |x, y, z| {
                0.8 * (x.sin() + (y + z).cos()) + 0.3
            });
            let psi = crate::psi::solve_psi(&u, &params, 1e-12).unwrap();
            let r = gradient(&u, &psi, &params);
            let lhs = nehari_residual(&u, &psi, &params);
            let rhs = first_variation(&r, &u, params.eps);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn decoupled_projection_matches_closed_form() {
        let grid = TorusGrid::new(16, 2.0 * std::f64::consts::PI).unwrap();
        let params = SystemParams::kgm(0.35, 2.0, 1.0, 0.0, 4.0).unwrap();
        let raw = Field::from_fn(&grid, |x, y, z| 0.5 + (x.sin() * y.cos() * z.sin()).abs());
        let norm = lp_norm_eps(&raw, params.p, params.eps, true);
        let u = raw.scaled(1.0 / norm);
        let point = project_nehari(&u, &params, 1e-12).unwrap();
        let closed = h_eps_norm_sq(&u, &params).powf(1.0 / (params.p - 2.0));
        assert_relative_eq!(point.t, closed, max_relative = 1e-10);
        assert!(point.h_second < 0.0);
        assert!(point.nehari_residual.abs() <= 1e-8);
    }

    #[test]
    fn zero_positive_part_is_rejected() {
        let grid = TorusGrid::new(16, 2.0).unwrap();
        let u = Field::constant(&grid, -1.0);
        assert!(matches!(
            project_nehari(&u, &kgm(0.2), 1e-10),
            Err(CoreError::ZeroPositivePart)
        ));
    }
}
