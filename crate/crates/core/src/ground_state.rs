//! Ground state of the limit problem -ΔU + c₀U = U^{p-1} in ℝ³ and the
//! cutoff bumps it seeds on the torus.
//!
//! The radial profile solves U'' + (2/r)U' = c₀U - U^{p-1} with U'(0) = 0,
//! U > 0, U decaying. Shooting on U(0) separates two behaviors: too large
//! an initial value makes the trajectory cross zero at finite radius, too
//! small makes it turn around (U' > 0) and settle towards the constant
//! equilibrium c₀^{1/(p-2)}. Bisection pins the separatrix; the tail beyond
//! the trackable region is extended analytically by A·e^{-√c₀ r}/r.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::grid::{wrap_coordinate, Field, Point, SystemParams, TorusGrid};

/// Number of uniform radial samples stored in a profile.
const PROFILE_SAMPLES: usize = 4097;

/// Radial ground-state profile on a uniform mesh [0, r_max].
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub r_max: f64,
    pub r_samples: Vec<f64>,
    pub u_samples: Vec<f64>,
    /// dU/dr at the sample radii (Hermite slopes for interpolation).
    pub u_prime_samples: Vec<f64>,
    pub c0: f64,
    pub p: f64,
    /// U(0), the shooting value at the separatrix.
    pub u0: f64,
    /// Limit energy (1/2 - 1/p)·∫(|∇U|² + c₀U²).
    pub m_inf: f64,
    /// Least-squares slope of -log U over [r_max/2, r_max].
    pub decay_rate: f64,
    /// Amplitude of the analytic tail A·e^{-√c₀ r}/r used beyond r_max;
    /// absent for profiles built from bare sample tables.
    pub tail_amplitude: Option<f64>,
}

/// Integrator controls; `shoot_ground_state` uses the defaults, refinement
/// oracles tighten them.
#[derive(Debug, Clone, Copy)]
pub struct ShootOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

/// Computes the radial ground state by bisection on U(0).
///
/// Returns a profile whose stored samples satisfy U(r_max) < tol·U(0),
/// strictly positive and strictly decreasing.
pub fn shoot_ground_state(c0: f64, p: f64, tol: f64, r_max: f64) -> Result<RadialProfile> {
    shoot_ground_state_with(c0, p, tol, r_max, ShootOptions::default())
}

pub fn shoot_ground_state_with(
    c0: f64,
    p: f64,
    tol: f64,
    r_max: f64,
    opts: ShootOptions,
) -> Result<RadialProfile> {
    if !(c0 > 0.0) {
        return Err(CoreError::InvalidParams(format!("c0 must be > 0, got {c0}")));
    }
    if !(4.0..6.0).contains(&p) {
        return Err(CoreError::InvalidParams(format!(
            "ground state exponent must satisfy 4 ≤ p < 6, got {p}"
        )));
    }
    if !(tol > 0.0 && tol < 1e-2) {
        return Err(CoreError::InvalidParams(format!(
            "decay tolerance must be in (0, 1e-2), got {tol}"
        )));
    }
    if !(r_max > 4.0 / c0.sqrt()) {
        return Err(CoreError::InvalidParams(format!(
            "r_max = {r_max} too small to contain the profile core (need > {})",
            4.0 / c0.sqrt()
        )));
    }

    let ode = RadialOde { c0, p };

    // The constant equilibrium undershoots: U''(0) = (c₀s - s^{p-1})/3 < 0
    // exactly when s^{p-2} > c₀, so the separatrix start lies above it.
    let equilibrium = c0.powf(1.0 / (p - 2.0));
    let mut lo = equilibrium;
    if classify(&ode, lo, r_max, opts) == Shot::TooLarge {
        return Err(CoreError::BracketNotFound(format!(
            "constant equilibrium {lo} unexpectedly overshoots"
        )));
    }
    let mut hi = 2.0 * equilibrium.max(1.0);
    let mut doublings = 0;
    while classify(&ode, hi, r_max, opts) == Shot::TooSmall {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(CoreError::BracketNotFound(format!(
                "no overshoot found doubling up to U(0) = {hi}"
            )));
        }
    }

    for _ in 0..200 {
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match classify(&ode, mid, r_max, opts) {
            Shot::TooLarge => hi = mid,
            Shot::TooSmall => lo = mid,
        }
    }
    let s = 0.5 * (lo + hi);

    build_profile(&ode, s, tol, r_max, opts)
}

/// Limit energy m_∞ = (1/2 - 1/p)·4π ∫ (U'² + c₀U²) r² dr from the stored
/// samples.
pub fn m_infinity(profile: &RadialProfile) -> f64 {
    let norm_sq = profile.norm_a_sq();
    (0.5 - 1.0 / profile.p) * norm_sq
}

impl RadialProfile {
    fn dr(&self) -> f64 {
        self.r_max / (self.r_samples.len() - 1) as f64
    }

    /// 4π ∫ (U'² + c₀U²) r² dr over the sampled range.
    pub fn norm_a_sq(&self) -> f64 {
        let f: Vec<f64> = self
            .r_samples
            .iter()
            .zip(self.u_samples.iter().zip(&self.u_prime_samples))
            .map(|(&r, (&u, &du))| (du * du + self.c0 * u * u) * r * r)
            .collect();
        4.0 * std::f64::consts::PI * simpson_uniform(&f, self.dr())
    }

    /// 4π ∫ U^t r² dr over the sampled range.
    pub fn lp_mass(&self, t: f64) -> f64 {
        let f: Vec<f64> = self
            .r_samples
            .iter()
            .zip(&self.u_samples)
            .map(|(&r, &u)| u.powf(t) * r * r)
            .collect();
        4.0 * std::f64::consts::PI * simpson_uniform(&f, self.dr())
    }

    /// Smallest radius containing `fraction` of ∫ U^t r² dr.
    pub fn radius_containing(&self, fraction: f64, t: f64) -> f64 {
        assert!((0.0..1.0).contains(&fraction));
        let weights: Vec<f64> = self
            .r_samples
            .iter()
            .zip(&self.u_samples)
            .map(|(&r, &u)| u.powf(t) * r * r)
            .collect();
        let dr = self.dr();
        let total: f64 = crate::grid::pairwise_sum(&weights) * dr;
        let target = fraction * total;
        let mut cum = 0.0;
        for (idx, w) in weights.iter().enumerate() {
            cum += w * dr;
            if cum >= target {
                return self.r_samples[idx];
            }
        }
        self.r_max
    }

    /// Evaluate U at radius ρ ≥ 0 by monotone cubic Hermite interpolation,
    /// switching to the analytic tail beyond r_max.
    pub fn eval(&self, rho: f64) -> Result<f64> {
        let rho = rho.abs();
        if rho <= self.r_max {
            Ok(self.eval_inside(rho))
        } else {
            let amp = self.tail_amplitude.ok_or_else(|| {
                CoreError::ProfileRange(format!(
                    "radius {rho} beyond sampled range {} and no tail extension available",
                    self.r_max
                ))
            })?;
            let arg = self.c0.sqrt() * rho;
            if arg > 700.0 {
                return Ok(0.0);
            }
            Ok(amp * (-arg).exp() / rho)
        }
    }

    fn eval_inside(&self, rho: f64) -> f64 {
        let dr = self.dr();
        let cell = ((rho / dr) as usize).min(self.r_samples.len() - 2);
        let r0 = self.r_samples[cell];
        let t = (rho - r0) / dr;
        let (y0, y1) = (self.u_samples[cell], self.u_samples[cell + 1]);
        let delta = (y1 - y0) / dr;
        // Slope limiting keeps the cubic monotone on the cell.
        let clamp = |d: f64| {
            if delta == 0.0 {
                0.0
            } else if d / delta < 0.0 {
                0.0
            } else if (d / delta).abs() > 3.0 {
                3.0 * delta
            } else {
                d
            }
        };
        let d0 = clamp(self.u_prime_samples[cell]);
        let d1 = clamp(self.u_prime_samples[cell + 1]);
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        h00 * y0 + h10 * dr * d0 + h01 * y1 + h11 * dr * d1
    }

    /// Relative residual of the Nehari identity ∫|∇U|² + c₀U² = ∫U^p.
    pub fn nehari_identity_residual(&self) -> f64 {
        let lhs = self.norm_a_sq();
        let rhs = self.lp_mass(self.p);
        (lhs - rhs).abs() / rhs
    }

    /// Plain-text dump: `# key=value` headers then `r U(r)` rows.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# c0={:.17e}", self.c0)?;
        writeln!(w, "# p={:.17e}", self.p)?;
        writeln!(w, "# m_inf={:.17e}", self.m_inf)?;
        writeln!(w, "# u0={:.17e}", self.u0)?;
        writeln!(w, "# decay_rate={:.17e}", self.decay_rate)?;
        if let Some(a) = self.tail_amplitude {
            writeln!(w, "# tail_amplitude={:.17e}", a)?;
        }
        for (r, u) in self.r_samples.iter().zip(&self.u_samples) {
            writeln!(w, "{:.17e} {:.17e}", r, u)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a text dump written by [`write_text`]. Sample slopes are rebuilt
    /// by finite differences on the uniform mesh.
    pub fn read_text(path: &Path) -> Result<RadialProfile> {
        let reader = BufReader::new(File::open(path)?);
        let mut headers: std::collections::HashMap<String, f64> = Default::default();
        let mut r_samples = Vec::new();
        let mut u_samples = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((key, value)) = rest.trim().split_once('=') {
                    let v: f64 = value.trim().parse().map_err(|_| {
                        CoreError::Format(format!("bad profile header value: {line}"))
                    })?;
                    headers.insert(key.trim().to_string(), v);
                }
                continue;
            }
            let mut cols = line.split_whitespace();
            let (r, u) = (cols.next(), cols.next());
            match (r, u) {
                (Some(r), Some(u)) => {
                    r_samples.push(r.parse().map_err(|_| {
                        CoreError::Format(format!("bad profile radius: {line}"))
                    })?);
                    u_samples.push(u.parse().map_err(|_| {
                        CoreError::Format(format!("bad profile value: {line}"))
                    })?);
                }
                _ => return Err(CoreError::Format(format!("bad profile row: {line}"))),
            }
        }
        if r_samples.len() < 16 {
            return Err(CoreError::Format("profile table too short".into()));
        }
        let need = |k: &str| {
            headers
                .get(k)
                .copied()
                .ok_or_else(|| CoreError::Format(format!("profile header missing {k}")))
        };
        let r_max = *r_samples.last().unwrap();
        let dr = r_max / (r_samples.len() - 1) as f64;
        let u_prime_samples = fd_slopes(&u_samples, dr);
        Ok(RadialProfile {
            r_max,
            r_samples,
            u_samples,
            u_prime_samples,
            c0: need("c0")?,
            p: need("p")?,
            u0: need("u0")?,
            m_inf: need("m_inf")?,
            decay_rate: need("decay_rate")?,
            tail_amplitude: headers.get("tail_amplitude").copied(),
        })
    }
}

/// C¹ cosine-ramp cutoff: 1 on [0, r/2], 0 on [r, ∞), ½(1 + cos(2π(s-r/2)/r))
/// between.
pub fn cutoff_chi(s: f64, r: f64) -> f64 {
    if s <= 0.5 * r {
        1.0
    } else if s >= r {
        0.0
    } else {
        0.5 * (1.0 + (2.0 * std::f64::consts::PI * (s - 0.5 * r) / r).cos())
    }
}

/// Transplanted bump W_{ε,ξ}(x) = U(|x-ξ|_g / ε)·χ_r(|x-ξ|_g), zero outside
/// the geodesic ball of radius r = L/2.
///
/// Displacements are computed by nearest-node decomposition, so bumps at
/// node-aligned centers are exact grid translates of each other (sub-cell
/// offsets below h·1e-12 are treated as node-aligned).
pub fn bump_field(
    xi: Point,
    params: &SystemParams,
    profile: &RadialProfile,
    grid: &Arc<TorusGrid>,
) -> Result<Field> {
    let r = grid.injectivity_radius();
    if !(params.eps < 0.25 * r) {
        return Err(CoreError::InvalidParams(format!(
            "bump requires ε < r/4 = {} (got ε = {})",
            0.25 * r,
            params.eps
        )));
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    if rel(profile.c0, params.c0) > 1e-9 || rel(profile.p, params.p) > 1e-9 {
        return Err(CoreError::InvalidParams(format!(
            "profile (c0={}, p={}) does not match params (c0={}, p={})",
            profile.c0, profile.p, params.c0, params.p
        )));
    }
    if profile.r_max < r / params.eps && profile.tail_amplitude.is_none() {
        return Err(CoreError::ProfileRange(format!(
            "cutoff support needs radii up to {} but profile ends at {} with no tail",
            r / params.eps,
            profile.r_max
        )));
    }

    let n = grid.n();
    let h = grid.spacing();
    let l = grid.length();
    let axis_disp = |coord: f64| -> Vec<f64> {
        let near = (coord / h).round();
        let mut frac = coord - near * h;
        if frac.abs() < 1e-12 * h {
            frac = 0.0;
        }
        let near = (near as i64).rem_euclid(n as i64);
        (0..n)
            .map(|i| {
                let mut m = (i as i64 - near).rem_euclid(n as i64);
                if m >= n as i64 / 2 {
                    m -= n as i64;
                }
                let mut d = m as f64 * h - frac;
                d = wrap_coordinate(d, l);
                d
            })
            .collect()
    };
    let dx = axis_disp(xi[0]);
    let dy = axis_disp(xi[1]);
    let dz = axis_disp(xi[2]);

    let mut values = Vec::with_capacity(grid.num_points());
    for &a in &dx {
        let aa = a * a;
        for &b in &dy {
            let ab = aa + b * b;
            for &c in &dz {
                let s = (ab + c * c).sqrt();
                let chi = cutoff_chi(s, r);
                if chi == 0.0 {
                    values.push(0.0);
                } else {
                    let u = profile
                        .eval(s / params.eps)
                        .expect("tail availability checked upfront");
                    values.push(u * chi);
                }
            }
        }
    }
    Field::from_values(grid, values)
}

// ---------------------------------------------------------------------------
// Shooting internals
// ---------------------------------------------------------------------------

struct RadialOde {
    c0: f64,
    p: f64,
}

impl RadialOde {
    /// Odd-extended nonlinearity keeps the vector field smooth through 0.
    #[inline]
    fn nonlinearity(&self, u: f64) -> f64 {
        u.signum() * u.abs().powf(self.p - 1.0)
    }

    #[inline]
    fn rhs(&self, r: f64, u: f64, v: f64) -> (f64, f64) {
        (v, self.c0 * u - self.nonlinearity(u) - 2.0 * v / r)
    }

    /// Series start away from the coordinate singularity:
    /// U(r) ≈ s + (c₀s - s^{p-1}) r²/6.
    fn series_start(&self, s: f64, r0: f64) -> (f64, f64) {
        let f0 = self.c0 * s - self.nonlinearity(s);
        (s + f0 * r0 * r0 / 6.0, f0 * r0 / 3.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    /// Crossed zero at finite radius: U(0) too large.
    TooLarge,
    /// Turned around while positive (or never left the equilibrium):
    /// U(0) too small.
    TooSmall,
}

fn classify(ode: &RadialOde, s: f64, r_end: f64, opts: ShootOptions) -> Shot {
    let mut stepper = Rk45::start(ode, s, opts);
    while stepper.r < r_end {
        if stepper.advance(ode, r_end).is_err() {
            // Step-control failure this deep in the tail behaves like a
            // turn-around for bracketing purposes.
            return Shot::TooSmall;
        }
        if stepper.u <= 0.0 {
            return Shot::TooLarge;
        }
        if stepper.v > 0.0 {
            return Shot::TooSmall;
        }
    }
    Shot::TooSmall
}

fn build_profile(
    ode: &RadialOde,
    s: f64,
    tol: f64,
    r_max: f64,
    opts: ShootOptions,
) -> Result<RadialProfile> {
    let count = PROFILE_SAMPLES;
    let dr = r_max / (count - 1) as f64;
    let threshold = tol * s;

    let mut r_samples = Vec::with_capacity(count);
    let mut u_samples = Vec::with_capacity(count);
    let mut u_prime_samples = Vec::with_capacity(count);
    r_samples.push(0.0);
    u_samples.push(s);
    u_prime_samples.push(0.0);

    let mut stepper = Rk45::start(ode, s, opts);
    let mut next = 1usize;
    'outer: while next < count {
        let (r_prev, u_prev, v_prev) = (stepper.r, stepper.u, stepper.v);
        let (du_prev, dv_prev) = ode.rhs(r_prev, u_prev, v_prev);
        stepper.advance(ode, r_max).map_err(|_| {
            CoreError::ResolutionError(format!(
                "step control failed at r = {r_prev} (U = {u_prev})"
            ))
        })?;
        let (r_now, u_now, v_now) = (stepper.r, stepper.u, stepper.v);
        let (du_now, dv_now) = ode.rhs(r_now, u_now, v_now);

        // Fill every mesh point inside the accepted step by Hermite
        // interpolation of U and U'.
        while next < count {
            let rm = next as f64 * dr;
            if rm > r_now {
                break;
            }
            let span = r_now - r_prev;
            let t = ((rm - r_prev) / span).clamp(0.0, 1.0);
            let u = hermite(t, span, u_prev, du_prev, u_now, du_now);
            let v = hermite(t, span, v_prev, dv_prev, v_now, dv_now);
            r_samples.push(rm);
            u_samples.push(u);
            u_prime_samples.push(v);
            next += 1;
            if u <= threshold {
                break 'outer;
            }
        }

        if u_now <= 0.0 || v_now > 0.0 {
            return Err(CoreError::ResolutionError(format!(
                "separatrix lost at r = {r_now} before reaching decay {tol} \
                 (U/U0 = {:.3e}); increase tolerance or lower tol",
                u_now / s
            )));
        }
    }

    // The stored tail must certify U(r_max) < tol·U(0).
    if *u_samples.last().unwrap() > threshold {
        return Err(CoreError::ResolutionError(format!(
            "profile did not decay below tol·U(0) within r_max = {r_max}"
        )));
    }

    // Anchor the analytic tail at the last integrated sample and fill the
    // remaining mesh from it.
    let sqc = ode.c0.sqrt();
    let (r_anchor, u_anchor) = (*r_samples.last().unwrap(), *u_samples.last().unwrap());
    let amp = u_anchor * r_anchor * (sqc * r_anchor).exp();
    while r_samples.len() < count {
        let rm = r_samples.len() as f64 * dr;
        let u = amp * (-sqc * rm).exp() / rm;
        let v = -amp * (-sqc * rm).exp() * (sqc * rm + 1.0) / (rm * rm);
        r_samples.push(rm);
        u_samples.push(u);
        u_prime_samples.push(v);
    }

    for w in u_samples.windows(2) {
        if !(w[1] > 0.0 && w[1] < w[0]) {
            return Err(CoreError::ResolutionError(
                "profile samples not strictly positive decreasing".into(),
            ));
        }
    }

    let decay_rate = tail_log_slope(&r_samples, &u_samples);

    let mut profile = RadialProfile {
        r_max,
        r_samples,
        u_samples,
        u_prime_samples,
        c0: ode.c0,
        p: ode.p,
        u0: s,
        m_inf: 0.0,
        decay_rate,
        tail_amplitude: Some(amp),
    };
    profile.m_inf = m_infinity(&profile);

    let identity = profile.nehari_identity_residual();
    if identity > 1e-6 {
        return Err(CoreError::ResolutionError(format!(
            "Nehari identity residual {identity:.3e} exceeds 1e-6; shooting inaccurate"
        )));
    }
    Ok(profile)
}

/// Least-squares slope of -ln U over the outer half of the mesh.
fn tail_log_slope(r: &[f64], u: &[f64]) -> f64 {
    let start = r.len() / 2;
    let rs = &r[start..];
    let ys: Vec<f64> = u[start..].iter().map(|&v| -v.ln()).collect();
    let n = rs.len() as f64;
    let rbar = rs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&ri, &yi) in rs.iter().zip(&ys) {
        num += (ri - rbar) * (yi - ybar);
        den += (ri - rbar) * (ri - rbar);
    }
    num / den
}

#[inline]
fn hermite(t: f64, span: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
    let h10 = t * (1.0 - t) * (1.0 - t);
    let h01 = t * t * (3.0 - 2.0 * t);
    let h11 = t * t * (t - 1.0);
    h00 * y0 + h10 * span * d0 + h01 * y1 + h11 * span * d1
}

/// Central finite-difference slopes on a uniform mesh (one-sided at ends).
fn fd_slopes(u: &[f64], dr: f64) -> Vec<f64> {
    let n = u.len();
    let mut d = vec![0.0; n];
    d[0] = (u[1] - u[0]) / dr;
    d[n - 1] = (u[n - 1] - u[n - 2]) / dr;
    for i in 1..n - 1 {
        d[i] = (u[i + 1] - u[i - 1]) / (2.0 * dr);
    }
    d
}

fn simpson_uniform(f: &[f64], dr: f64) -> f64 {
    assert!(f.len() >= 3);
    let mut total = 0.0;
    let mut i = 0;
    // Composite Simpson over pairs of cells; trapezoid for a trailing cell.
    while i + 2 < f.len() {
        total += dr / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
        i += 2;
    }
    if i + 1 < f.len() {
        total += 0.5 * dr * (f[i] + f[i + 1]);
    }
    total
}

/// Dormand–Prince 4(5) with PI-free step control, specialized to the
/// two-component radial state.
struct Rk45 {
    r: f64,
    u: f64,
    v: f64,
    h: f64,
    rtol: f64,
    atol: f64,
    steps: usize,
    max_steps: usize,
}

impl Rk45 {
    fn start(ode: &RadialOde, s: f64, opts: ShootOptions) -> Self {
        let r0 = 1e-4 / ode.c0.sqrt();
        let (u, v) = ode.series_start(s, r0);
        Rk45 {
            r: r0,
            u,
            v,
            h: 1e-3 / ode.c0.sqrt(),
            rtol: opts.rtol,
            atol: opts.atol * s.max(1.0),
            steps: 0,
            max_steps: opts.max_steps,
        }
    }

    /// One accepted adaptive step, clipped to end at `r_end`.
    fn advance(&mut self, ode: &RadialOde, r_end: f64) -> std::result::Result<(), ()> {
        loop {
            self.steps += 1;
            if self.steps > self.max_steps || self.h < 1e-14 {
                return Err(());
            }
            let h = self.h.min(r_end - self.r).max(1e-14);
            let (r, u, v) = (self.r, self.u, self.v);

            let (k1u, k1v) = ode.rhs(r, u, v);
            let (k2u, k2v) = ode.rhs(r + h / 5.0, u + h * k1u / 5.0, v + h * k1v / 5.0);
            let (k3u, k3v) = ode.rhs(
                r + 3.0 * h / 10.0,
                u + h * (3.0 * k1u + 9.0 * k2u) / 40.0,
                v + h * (3.0 * k1v + 9.0 * k2v) / 40.0,
            );
            let (k4u, k4v) = ode.rhs(
                r + 4.0 * h / 5.0,
                u + h * (44.0 / 45.0 * k1u - 56.0 / 15.0 * k2u + 32.0 / 9.0 * k3u),
                v + h * (44.0 / 45.0 * k1v - 56.0 / 15.0 * k2v + 32.0 / 9.0 * k3v),
            );
            let (k5u, k5v) = ode.rhs(
                r + 8.0 * h / 9.0,
                u + h
                    * (19372.0 / 6561.0 * k1u - 25360.0 / 2187.0 * k2u
                        + 64448.0 / 6561.0 * k3u
                        - 212.0 / 729.0 * k4u),
                v + h
                    * (19372.0 / 6561.0 * k1v - 25360.0 / 2187.0 * k2v
                        + 64448.0 / 6561.0 * k3v
                        - 212.0 / 729.0 * k4v),
            );
            let (k6u, k6v) = ode.rhs(
                r + h,
                u + h
                    * (9017.0 / 3168.0 * k1u - 355.0 / 33.0 * k2u + 46732.0 / 5247.0 * k3u
                        + 49.0 / 176.0 * k4u
                        - 5103.0 / 18656.0 * k5u),
                v + h
                    * (9017.0 / 3168.0 * k1v - 355.0 / 33.0 * k2v + 46732.0 / 5247.0 * k3v
                        + 49.0 / 176.0 * k4v
                        - 5103.0 / 18656.0 * k5v),
            );
            let u5 = u + h
                * (35.0 / 384.0 * k1u + 500.0 / 1113.0 * k3u + 125.0 / 192.0 * k4u
                    - 2187.0 / 6784.0 * k5u
                    + 11.0 / 84.0 * k6u);
            let v5 = v + h
                * (35.0 / 384.0 * k1v + 500.0 / 1113.0 * k3v + 125.0 / 192.0 * k4v
                    - 2187.0 / 6784.0 * k5v
                    + 11.0 / 84.0 * k6v);
            let (k7u, k7v) = ode.rhs(r + h, u5, v5);
            let u4 = u + h
                * (5179.0 / 57600.0 * k1u + 7571.0 / 16695.0 * k3u + 393.0 / 640.0 * k4u
                    - 92097.0 / 339200.0 * k5u
                    + 187.0 / 2100.0 * k6u
                    + k7u / 40.0);
            let v4 = v + h
                * (5179.0 / 57600.0 * k1v + 7571.0 / 16695.0 * k3v + 393.0 / 640.0 * k4v
                    - 92097.0 / 339200.0 * k5v
                    + 187.0 / 2100.0 * k6v
                    + k7v / 40.0);

            let scale_u = self.atol + self.rtol * u.abs().max(u5.abs());
            let scale_v = self.atol + self.rtol * v.abs().max(v5.abs());
            let err = (((u5 - u4) / scale_u).powi(2) + ((v5 - v4) / scale_v).powi(2))
                .sqrt()
                / std::f64::consts::SQRT_2;

            if err <= 1.0 {
                self.r = r + h;
                self.u = u5;
                self.v = v5;
                let grow = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                self.h = (self.h * grow).min(0.25);
                return Ok(());
            }
            self.h = (self.h * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0)).max(1e-15);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn cutoff_shape() {
        let r = 2.0;
        assert_eq!(cutoff_chi(0.0, r), 1.0);
        assert_eq!(cutoff_chi(1.0, r), 1.0);
        assert_abs_diff_eq!(cutoff_chi(1.5, r), 0.5, epsilon = 1e-15);
        assert_eq!(cutoff_chi(2.0, r), 0.0);
        assert_eq!(cutoff_chi(5.0, r), 0.0);
        // C¹ at both junctions: symmetric difference slopes vanish.
        for s in [1.0, 2.0] {
            let d = 1e-6;
            let slope = (cutoff_chi(s + d, r) - cutoff_chi(s - d, r)) / (2.0 * d);
            assert_abs_diff_eq!(slope, 0.0, epsilon = 1e-5);
        }
        for s in [0.3, 1.2, 1.7, 1.99] {
            let v = cutoff_chi(s, r);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn shooting_start_exceeds_equilibrium() {
        for &(c0, p) in &[(1.0, 4.0), (2.0, 4.0), (1.0, 5.0), (2.0, 5.0)] {
            let profile = shoot_ground_state(c0, p, 1e-8, 40.0 / c0.sqrt()).unwrap();
            assert!(
                profile.u0.powf(p - 2.0) > c0,
                "U(0)^{{p-2}} must exceed c0 (got U0 = {})",
                profile.u0
            );
        }
    }

    #[test]
    fn profile_is_positive_decreasing_and_decayed() {
        let profile = shoot_ground_state(1.0, 4.0, 1e-8, 40.0).unwrap();
        assert!(profile
            .u_samples
            .windows(2)
            .all(|w| w[1] > 0.0 && w[1] < w[0]));
        assert!(*profile.u_samples.last().unwrap() < 1e-8 * profile.u0);
        assert!(profile.nehari_identity_residual() < 1e-6);
    }

    #[test]
    fn decay_rate_tracks_sqrt_c0() {
        for &c0 in &[1.0, 2.0] {
            let profile = shoot_ground_state(c0, 4.0, 1e-8, 40.0 / c0.sqrt()).unwrap();
            let rel = (profile.decay_rate - c0.sqrt()).abs() / c0.sqrt();
            assert!(
                rel < 0.05,
                "decay rate {} vs √c0 {} (rel {rel})",
                profile.decay_rate,
                c0.sqrt()
            );
        }
    }

    #[test]
    fn interpolation_matches_samples_and_tail() {
        let profile = shoot_ground_state(1.0, 4.0, 1e-8, 40.0).unwrap();
        for idx in [0usize, 100, 2048, 4096] {
            let got = profile.eval(profile.r_samples[idx]).unwrap();
            assert_relative_eq!(got, profile.u_samples[idx], max_relative = 1e-12);
        }
        // Tail continues smoothly past r_max.
        let inside = profile.eval(profile.r_max * 0.9999).unwrap();
        let outside = profile.eval(profile.r_max * 1.0001).unwrap();
        assert!(outside < inside);
        assert!(outside > 0.0);
        // Extreme radii underflow to zero rather than erroring.
        assert_eq!(profile.eval(1e6).unwrap(), 0.0);
    }

    #[test]
    fn missing_tail_is_reported() {
        let mut profile = shoot_ground_state(1.0, 4.0, 1e-8, 40.0).unwrap();
        profile.tail_amplitude = None;
        assert!(matches!(
            profile.eval(profile.r_max * 2.0),
            Err(CoreError::ProfileRange(_))
        ));
    }

    #[test]
    fn text_dump_round_trips() {
        let profile = shoot_ground_state(1.0, 4.0, 1e-6, 20.0).unwrap();
        let mut path = std::env::temp_dir();
        path.push(format!("profile_test_{}.txt", std::process::id()));
        profile.write_text(&path).unwrap();
        let back = RadialProfile::read_text(&path).unwrap();
        assert_eq!(back.u_samples.len(), profile.u_samples.len());
        assert_relative_eq!(back.u0, profile.u0, max_relative = 1e-15);
        assert_relative_eq!(back.m_inf, profile.m_inf, max_relative = 1e-15);
        for (a, b) in back.u_samples.iter().zip(&profile.u_samples) {
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(shoot_ground_state(-1.0, 4.0, 1e-8, 40.0).is_err());
        assert!(shoot_ground_state(1.0, 3.0, 1e-8, 40.0).is_err());
        assert!(shoot_ground_state(1.0, 4.0, -1.0, 40.0).is_err());
        assert!(shoot_ground_state(1.0, 4.0, 1e-8, 1.0).is_err());
    }
}
