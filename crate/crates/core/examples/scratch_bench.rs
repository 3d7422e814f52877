use std::sync::Arc;
use std::time::Instant;

use kgm_core::*;

fn main() {
    // Ground state sanity: c0 = 1, p = 4 (cubic in 3D).
    let t0 = Instant::now();
    let profile = shoot_ground_state(1.0, 4.0, 1e-8, 40.0).unwrap();
    println!(
        "shoot c0=1 p=4: U(0) = {:.6}, m_inf = {:.6}, decay = {:.4}, identity = {:.2e}, {:?}",
        profile.u0,
        profile.m_inf,
        profile.decay_rate,
        profile.nehari_identity_residual(),
        t0.elapsed()
    );
    let t0 = Instant::now();
    let p2 = shoot_ground_state(1.75, 4.0, 1e-8, 40.0 / 1.75f64.sqrt()).unwrap();
    println!(
        "shoot c0=1.75 p=4: U(0) = {:.6}, m_inf = {:.6}, norm_a = {:.6} ({:?})",
        p2.u0,
        p2.m_inf,
        p2.norm_a_sq(),
        t0.elapsed()
    );
    println!(
        "scaling check: m_inf(1.75)/m_inf(1) = {:.6} vs sqrt(1.75) = {:.6}",
        p2.m_inf / profile.m_inf,
        1.75f64.sqrt()
    );

    // FFT timing at acceptance scale.
    let grid: Arc<TorusGrid> = TorusGrid::new(48, 2.0 * std::f64::consts::PI).unwrap();
    let u = random_band_limited(&grid, 8, 1.5, 1);
    let t0 = Instant::now();
    let reps = 20;
    let mut acc = 0.0;
    for _ in 0..reps {
        let lap = laplacian(&u);
        acc += lap.values()[0];
    }
    println!(
        "laplacian n=48: {:.2} ms each (acc {acc:.3e})",
        t0.elapsed().as_secs_f64() * 1e3 / reps as f64
    );

    // ψ solve timing, KGM cold start.
    let params = SystemParams::kgm(0.1, 2.0, 1.0, 0.5, 4.0).unwrap();
    let pos = random_smooth_positive(&grid, 6, 2.0, 3);
    let t0 = Instant::now();
    let psi = solve_psi(&pos, &params, 1e-10).unwrap();
    println!(
        "psi solve n=48 cold: {:?}, range [{:.3e}, {:.3e}]",
        t0.elapsed(),
        psi.min_value(),
        psi.max_value()
    );

    // Bump + projection at the acceptance parameters.
    let l = grid.length();
    let eps = l / 64.0;
    let params = SystemParams::kgm(eps, 2.0, 1.0, 0.5, 4.0).unwrap();
    let t0 = Instant::now();
    let w = bump_field([0.0, 0.0, 0.0], &params, &p2, &grid).unwrap();
    println!("bump n=48: {:?}, W(xi) = {:.4}", t0.elapsed(), w.max_value());
    let t0 = Instant::now();
    let seed = phi_seed([0.0, 0.0, 0.0], &params, &p2, &grid).unwrap();
    println!(
        "phi_seed eps=L/64: {:?}, t = {:.6}, I = {:.6} (m_inf {:.6}), N = {:.2e}, H'' = {:.3}",
        t0.elapsed(),
        seed.t,
        seed.energy,
        p2.m_inf,
        seed.nehari_residual,
        seed.h_second
    );
    for n in [48usize, 96, 144] {
        let grid: Arc<TorusGrid> = TorusGrid::new(n, l).unwrap();
        for div in [16.0, 32.0, 64.0] {
            let eps = l / div;
            let params = SystemParams::kgm(eps, 2.0, 1.0, 0.5, 4.0).unwrap();
            let w = bump_field([0.0, 0.0, 0.0], &params, &p2, &grid).unwrap();
            let norm = h_eps_norm_sq(&w, &params);
            let mass_p = positive_part_mass(&w, params.p, params.eps);
            let t0 = Instant::now();
            let seed = phi_seed([0.0, 0.0, 0.0], &params, &p2, &grid).unwrap();
            println!(
                "n={n} eps=L/{div}: norm={norm:.4} massP={mass_p:.4} t={:.6} |t-1|={:.4e} gap={:+.4e} ({:?})",
                seed.t,
                (seed.t - 1.0).abs(),
                (seed.energy - p2.m_inf) / p2.m_inf,
                t0.elapsed()
            );
        }
    }
}
