//! Post-solve diagnostics: barycenter, peak structure, the maximum-value
//! certificate, profile residual against the transplanted bump, and
//! clustering of solution records.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::grid::{positive_power, wrap_coordinate, Field, Point, SystemParams, TorusGrid};
use crate::ground_state::{bump_field, RadialProfile};
use crate::minimize::SolveResult;

/// Post-analysis summary of one solve.
#[derive(Debug, Clone)]
pub struct SolutionRecord {
    pub energy: f64,
    pub barycenter: Point,
    pub peak_point: Point,
    pub peak_value: f64,
    pub num_peaks: usize,
    /// u(P)^{p-2} - c₀ at the global maximum; positive for true solutions.
    pub maxval_margin: f64,
    /// sup |u - W_{ε,P}| against the bump at the peak node.
    pub profile_sup_error: f64,
    pub t_at_projection: f64,
    pub grad_norm: f64,
    pub cluster_id: usize,
}

/// p-th-power mass centroid via the per-axis circular mean, the seam-free
/// replacement for the ambient average on a torus. Reduces to the plain
/// centroid for mass supported in a small ball.
pub fn barycenter(u: &Field, p: f64) -> Result<Point> {
    let grid = u.grid();
    let n = grid.n();
    let weights: Vec<f64> = u.values().iter().map(|&v| positive_power(v, p)).collect();
    let total = crate::grid::pairwise_sum(&weights);
    if total <= 0.0 {
        return Err(CoreError::ZeroPositivePart);
    }

    let two_pi = 2.0 * std::f64::consts::PI;
    let phase: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let theta = two_pi * i as f64 / n as f64;
            (theta.cos(), theta.sin())
        })
        .collect();

    let mut out = [0.0; 3];
    for axis in 0..3 {
        let component = |idx: usize| -> (f64, f64) {
            let (i, j, k) = grid.unravel(idx);
            let node = match axis {
                0 => i,
                1 => j,
                _ => k,
            };
            let (c, s) = phase[node];
            (weights[idx] * c, weights[idx] * s)
        };
        let re = pairwise_indexed(weights.len(), |idx| component(idx).0);
        let im = pairwise_indexed(weights.len(), |idx| component(idx).1);
        let modulus = (re * re + im * im).sqrt() / total;
        if modulus < 1e-12 {
            return Err(CoreError::DegenerateMean { axis, modulus });
        }
        let mut coord = im.atan2(re) * grid.length() / two_pi;
        if coord < 0.0 {
            coord += grid.length();
        }
        if coord >= grid.length() {
            coord -= grid.length();
        }
        out[axis] = coord;
    }
    Ok(out)
}

fn pairwise_indexed(len: usize, f: impl Fn(usize) -> f64 + Copy) -> f64 {
    fn go(lo: usize, hi: usize, f: impl Fn(usize) -> f64 + Copy) -> f64 {
        if hi - lo <= 64 {
            let mut acc = 0.0;
            for idx in lo..hi {
                acc += f(idx);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, f) + go(mid, hi, f)
        }
    }
    go(0, len, f)
}

/// All strict 26-neighbor local maxima with value ≥ rel_threshold·max(u),
/// sorted by value descending (index ascending on ties).
pub fn find_peaks(u: &Field, rel_threshold: f64) -> Vec<(Point, f64)> {
    assert!(
        rel_threshold > 0.0 && rel_threshold < 1.0,
        "relative threshold must lie in (0, 1)"
    );
    let grid = u.grid();
    let n = grid.n();
    let values = u.values();
    let cutoff = rel_threshold * u.max_value();

    let mut peaks: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        let im = (i + n - 1) % n;
        let ip = (i + 1) % n;
        for j in 0..n {
            let jm = (j + n - 1) % n;
            let jp = (j + 1) % n;
            for k in 0..n {
                let idx = grid.index(i, j, k);
                let v = values[idx];
                if v < cutoff {
                    continue;
                }
                let km = (k + n - 1) % n;
                let kp = (k + 1) % n;
                let mut strict_max = true;
                'scan: for &ii in &[im, i, ip] {
                    for &jj in &[jm, j, jp] {
                        for &kk in &[km, k, kp] {
                            if ii == i && jj == j && kk == k {
                                continue;
                            }
                            if values[grid.index(ii, jj, kk)] >= v {
                                strict_max = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if strict_max {
                    peaks.push((idx, v));
                }
            }
        }
    }
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    peaks
        .into_iter()
        .map(|(idx, v)| {
            let (i, j, k) = grid.unravel(idx);
            (grid.node(i, j, k), v)
        })
        .collect()
}

/// u(P)^{p-2} - c₀ at the global maximum node P.
pub fn maxval_certificate(u: &Field, params: &SystemParams) -> f64 {
    let max = u.max_value();
    positive_power(max, params.p - 2.0) - params.c0
}

/// sup_x |u(x) - W_{ε,peak}(x)|.
pub fn profile_residual(
    u: &Field,
    profile: &RadialProfile,
    params: &SystemParams,
    peak: Point,
) -> Result<f64> {
    let w = bump_field(peak, params, profile, u.grid())?;
    Ok((u - &w).sup_norm())
}

/// ε⁻³ ∫_{B(center, radius)} (u⁺)^p over the geodesic ball.
pub fn concentrated_mass(u: &Field, center: Point, radius: f64, p: f64, eps: f64) -> f64 {
    let grid = u.grid();
    let n = grid.n();
    let h = grid.spacing();
    let l = grid.length();
    let axis_delta = |c: f64| -> Vec<f64> {
        (0..n)
            .map(|i| wrap_coordinate(i as f64 * h - c, l))
            .collect()
    };
    let dx = axis_delta(center[0]);
    let dy = axis_delta(center[1]);
    let dz = axis_delta(center[2]);
    let r_sq = radius * radius;
    let values = u.values();
    let contribution = |idx: usize| -> f64 {
        let (i, j, k) = grid.unravel(idx);
        let d = dx[i] * dx[i] + dy[j] * dy[j] + dz[k] * dz[k];
        if d <= r_sq {
            positive_power(values[idx], p)
        } else {
            0.0
        }
    };
    grid.cell_volume() * pairwise_indexed(values.len(), contribution) / (eps * eps * eps)
}

/// Sample coefficient of variation (σ/mean) of the field values; low-energy
/// solutions at small ε are sharply non-constant.
pub fn coefficient_of_variation(u: &Field) -> f64 {
    let n = u.values().len() as f64;
    let mean = crate::grid::pairwise_sum(u.values()) / n;
    let var =
        crate::grid::pairwise_map_sum(u.values(), |v| (v - mean) * (v - mean)) / n;
    var.sqrt() / mean.abs().max(f64::MIN_POSITIVE)
}

/// Build a record from a finished solve. `peak_threshold` is the relative
/// peak-detection threshold (0.5 by default upstream).
pub fn solution_record(
    result: &SolveResult,
    params: &SystemParams,
    profile: &RadialProfile,
    peak_threshold: f64,
) -> Result<SolutionRecord> {
    let u = &result.point.u;
    let peaks = find_peaks(u, peak_threshold);
    let (peak_point, peak_value) = *peaks.first().ok_or_else(|| {
        CoreError::InvalidParams("field has no strict local maximum".into())
    })?;
    let bary = barycenter(u, params.p)?;
    let sup_err = profile_residual(u, profile, params, peak_point)?;
    Ok(SolutionRecord {
        energy: result.point.energy,
        barycenter: bary,
        peak_point,
        peak_value,
        num_peaks: peaks.len(),
        maxval_margin: maxval_certificate(u, params),
        profile_sup_error: sup_err,
        t_at_projection: result.point.t,
        grad_norm: result.grad_norm_history.last().copied().unwrap_or(f64::NAN),
        cluster_id: 0,
    })
}

/// Single-linkage clustering: records join a cluster when both their
/// barycenter torus distance is ≤ dist_tol and their energy gap is
/// ≤ energy_tol. Cluster ids are dense from 0 in order of first appearance.
pub fn cluster_solutions(
    mut records: Vec<SolutionRecord>,
    dist_tol: f64,
    energy_tol: f64,
    grid: &Arc<TorusGrid>,
) -> Vec<SolutionRecord> {
    let n = records.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let d = grid.distance(records[i].barycenter, records[j].barycenter);
            let de = (records[i].energy - records[j].energy).abs();
            if d <= dist_tol && de <= energy_tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = (ri.min(rj), ri.max(rj));
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut ids: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        let root = find(&mut parent, i);
        let id = match ids[root] {
            Some(id) => id,
            None => {
                let id = next;
                ids[root] = Some(id);
                next += 1;
                id
            }
        };
        records[i].cluster_id = id;
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_grid() -> Arc<TorusGrid> {
        TorusGrid::new(16, 2.0).unwrap()
    }

    fn gaussian_bump(grid: &Arc<TorusGrid>, center: Point, width: f64, amp: f64) -> Field {
        let g = Arc::clone(grid);
        Field::from_fn(grid, move |x, y, z| {
            let d = g.wrap_displacement([x, y, z], center);
            let r_sq = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            amp * (-r_sq / (2.0 * width * width)).exp()
        })
    }

    #[test]
    fn barycenter_of_node_centered_bump() {
        let grid = small_grid();
        let center = grid.node(4, 9, 2);
        let u = gaussian_bump(&grid, center, 0.2, 1.0);
        let b = barycenter(&u, 4.0).unwrap();
        for axis in 0..3 {
            let d = wrap_coordinate(b[axis] - center[axis], grid.length());
            assert!(
                d.abs() <= 0.5 * grid.spacing(),
                "axis {axis}: barycenter {b:?} vs center {center:?}"
            );
        }
    }

    #[test]
    fn barycenter_translates_with_field() {
        let grid = small_grid();
        let u = gaussian_bump(&grid, grid.node(3, 3, 3), 0.25, 1.0);
        let v = crate::minimize::translate_field(&u, [5, 2, 9]);
        let bu = barycenter(&u, 4.0).unwrap();
        let bv = barycenter(&v, 4.0).unwrap();
        let h = grid.spacing();
        let shift = [5.0 * h, 2.0 * h, 9.0 * h];
        for axis in 0..3 {
            let want = wrap_coordinate(bu[axis] + shift[axis], grid.length());
            let got = wrap_coordinate(bv[axis], grid.length());
            let d = wrap_coordinate(got - want, grid.length());
            assert_abs_diff_eq!(d, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn antipodal_bumps_have_degenerate_mean() {
        let grid = small_grid();
        let c1 = grid.node(0, 4, 4);
        let c2 = grid.node(8, 4, 4); // L/2 apart along x
        let u1 = gaussian_bump(&grid, c1, 0.2, 1.0);
        let u2 = gaussian_bump(&grid, c2, 0.2, 1.0);
        let u = &u1 + &u2;
        match barycenter(&u, 4.0) {
            Err(CoreError::DegenerateMean { axis, .. }) => assert_eq!(axis, 0),
            other => panic!("expected degenerate mean, got {other:?}"),
        }
    }

    #[test]
    fn zero_positive_part_is_reported() {
        let grid = small_grid();
        let u = Field::constant(&grid, -1.0);
        assert!(matches!(
            barycenter(&u, 4.0),
            Err(CoreError::ZeroPositivePart)
        ));
    }

    #[test]
    fn single_bump_has_single_peak() {
        let grid = small_grid();
        let center = grid.node(5, 5, 5);
        let u = gaussian_bump(&grid, center, 0.3, 2.0);
        let peaks = find_peaks(&u, 0.5);
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].0, center);
        assert_abs_diff_eq!(peaks[0].1, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn two_separated_bumps_give_two_peaks() {
        let grid = small_grid();
        let u1 = gaussian_bump(&grid, grid.node(2, 2, 2), 0.15, 2.0);
        let u2 = gaussian_bump(&grid, grid.node(10, 10, 10), 0.15, 1.8);
        let u = &u1 + &u2;
        let peaks = find_peaks(&u, 0.5);
        assert_eq!(peaks.len(), 2);
        assert!(peaks[0].1 >= peaks[1].1);
    }

    #[test]
    fn constant_field_has_no_strict_peaks() {
        let grid = small_grid();
        let u = Field::constant(&grid, 1.0);
        assert!(find_peaks(&u, 0.5).is_empty());
    }

    #[test]
    fn maxval_margin_at_exact_boundary() {
        let grid = small_grid();
        let params = SystemParams::kgm(0.2, 2.0, 1.0, 0.5, 4.0).unwrap();
        // c^{p-2} = c0 exactly → margin 0.
        let c = params.c0.powf(1.0 / (params.p - 2.0));
        let u = Field::constant(&grid, c);
        assert_abs_diff_eq!(maxval_certificate(&u, &params), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn clustering_merges_identical_and_splits_distant() {
        let grid = small_grid();
        let rec = |bary: Point, energy: f64| SolutionRecord {
            energy,
            barycenter: bary,
            peak_point: bary,
            peak_value: 1.0,
            num_peaks: 1,
            maxval_margin: 0.1,
            profile_sup_error: 0.0,
            t_at_projection: 1.0,
            grad_norm: 0.0,
            cluster_id: 0,
        };
        let a = rec([0.1, 0.1, 0.1], 1.0);
        let b = rec([0.1, 0.1, 0.1], 1.0);
        let out = cluster_solutions(vec![a.clone(), b], 0.05, 1e-6, &grid);
        assert_eq!(out[0].cluster_id, 0);
        assert_eq!(out[1].cluster_id, 0);

        let far = rec([0.1 + 1.0, 0.1, 0.1], 1.0); // L/2 away
        let out = cluster_solutions(vec![a, far], 0.4, 1e-6, &grid);
        assert_eq!(out[0].cluster_id, 0);
        assert_eq!(out[1].cluster_id, 1);
    }

    #[test]
    fn concentrated_mass_of_compact_bump_is_total_mass() {
        let grid = small_grid();
        let center = grid.node(8, 8, 8);
        let u = gaussian_bump(&grid, center, 0.1, 1.0);
        let eps = 0.2;
        let all = concentrated_mass(&u, center, grid.injectivity_radius(), 4.0, eps);
        let total = u.integral_of(|v| positive_power(v, 4.0)) / eps.powi(3);
        assert_abs_diff_eq!(all, total, epsilon = 1e-12 * total.abs());
    }
}
