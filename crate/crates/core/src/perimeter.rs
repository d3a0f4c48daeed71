//! Fractional perimeters of cell sets, exhaustive minimal-set search,
//! level-set minimality checks, and qualitative regularity ratios.

use serde::{Deserialize, Serialize};

use crate::domain::{indicator_field, level_set, CellSet, Field, Mesh};
use crate::kernel::{Side, WeightTable};
use crate::{Error, Result};

/// Fractional perimeter of a cell set: the `(s,1)` energy of its indicator,
/// evaluated directly on the membership flags (per-side far membership is
/// fine here).
pub fn frac_perimeter(mesh: &Mesh, e: &CellSet, s: f64, w: &WeightTable) -> Result<f64> {
    w.check_alpha(s, 1.0)?;
    e.check_shape(mesh)?;
    let n = mesh.n_interior;
    let m = mesh.n_window_per_side;
    let chi = |b: bool| if b { 1.0 } else { 0.0 };
    let mut per = 0.0;
    for i in 0..n {
        let gi = mesh.gi_interior(i);
        let ci = chi(e.interior[i]);
        for j in (i + 1)..n {
            per += w.pair(gi, mesh.gi_interior(j)) * (ci - chi(e.interior[j])).abs();
        }
        for jw in 0..m {
            per += w.pair(gi, mesh.gi_window(Side::Left, jw))
                * (ci - chi(e.window_left[jw])).abs();
            per += w.pair(gi, mesh.gi_window(Side::Right, jw))
                * (ci - chi(e.window_right[jw])).abs();
        }
        if mesh.far_region() == crate::domain::FarRegion::Unbounded {
            let far = w.far(gi);
            per += far[0] * (ci - chi(e.far_left)).abs();
            per += far[1] * (ci - chi(e.far_right)).abs();
        }
    }
    Ok(per)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinSetResult {
    pub minimizers: Vec<CellSet>,
    pub min_value: f64,
}

pub const MAX_BRUTEFORCE_CELLS: usize = 20;

/// Exhaustive minimization of the fractional perimeter over all interior
/// subsets with the given exterior trace. Returns every argmin.
pub fn min_set_bruteforce(
    mesh: &Mesh,
    trace: &CellSet,
    s: f64,
    w: &WeightTable,
) -> Result<MinSetResult> {
    let n = mesh.n_interior;
    if n > MAX_BRUTEFORCE_CELLS {
        return Err(Error::TooLarge(format!(
            "subset enumeration handles up to {MAX_BRUTEFORCE_CELLS} interior cells, got {n}"
        )));
    }
    let mut min_value = f64::INFINITY;
    let mut argmins: Vec<(usize, f64)> = Vec::new();
    for mask in 0..(1usize << n) {
        let e = trace.with_interior((0..n).map(|i| (mask >> i) & 1 == 1).collect());
        let val = frac_perimeter(mesh, &e, s, w)?;
        if val < min_value - 1e-12 * (1.0 + min_value.abs()) {
            min_value = val;
            argmins.clear();
            argmins.push((mask, val));
        } else if val <= min_value + 1e-12 * (1.0 + min_value.abs()) {
            min_value = min_value.min(val);
            argmins.push((mask, val));
        }
    }
    let minimizers = argmins
        .into_iter()
        .filter(|(_, v)| *v <= min_value + 1e-12 * (1.0 + min_value.abs()))
        .map(|(mask, _)| trace.with_interior((0..n).map(|i| (mask >> i) & 1 == 1).collect()))
        .collect();
    Ok(MinSetResult { minimizers, min_value })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelCheck {
    pub lambda: f64,
    pub perimeter: f64,
    pub min_value: f64,
    pub pass: bool,
}

/// For each level strictly between consecutive distinct values of `u`,
/// check that the superlevel set attains the brute-force perimeter minimum
/// among all interior subsets with the matching exterior trace.
pub fn level_set_check(
    mesh: &Mesh,
    u: &Field,
    s: f64,
    w: &WeightTable,
    tol: f64,
) -> Result<Vec<LevelCheck>> {
    if mesh.n_interior > 10 {
        return Err(Error::TooLarge("level-set check enumerates subsets, needs n <= 10".into()));
    }
    u.check_shape(mesh)?;
    let mut vals = u.interior.clone();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + a.abs()));
    let mut out = Vec::new();
    for pair in vals.windows(2) {
        let lambda = 0.5 * (pair[0] + pair[1]);
        let e = level_set(u, lambda);
        let per = frac_perimeter(mesh, &e, s, w)?;
        let best = min_set_bruteforce(mesh, &e, s, w)?;
        out.push(LevelCheck {
            lambda,
            perimeter: per,
            min_value: best.min_value,
            pass: per <= best.min_value + tol,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityReport {
    pub sup_bound_ratio: f64,
    pub inf_bound_ratio: f64,
    pub bv_ratio: f64,
}

/// Measured local-boundedness and local-BV ratios of a minimizer on a
/// compactly contained subinterval. The contract is finiteness and
/// stability under refinement, never a specific constant.
pub fn regularity_report(
    mesh: &Mesh,
    u: &Field,
    omega_prime: (f64, f64),
) -> Result<RegularityReport> {
    u.check_shape(mesh)?;
    let (lo, hi) = omega_prime;
    let h = mesh.cell_width();
    if !(lo < hi) || lo <= mesh.omega_lo || hi >= mesh.omega_hi {
        return Err(Error::Domain("omega_prime must be compactly contained".into()));
    }
    let align = |x: f64| ((x - mesh.omega_lo) / h).round() * h + mesh.omega_lo;
    if (align(lo) - lo).abs() > 1e-9 * h || (align(hi) - hi).abs() > 1e-9 * h {
        return Err(Error::Domain("omega_prime must be cell-aligned".into()));
    }
    let i_lo = ((lo - mesh.omega_lo) / h).round() as usize;
    let i_hi = ((hi - mesh.omega_lo) / h).round() as usize;
    let dist = (lo - mesh.omega_lo).min(mesh.omega_hi - hi);
    let sup = u.interior[i_lo..i_hi].iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let inf = u.interior[i_lo..i_hi].iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let l1_pos: f64 = u.interior.iter().map(|&v| h * v.max(0.0)).sum();
    let l1_neg: f64 = u.interior.iter().map(|&v| h * (-v).max(0.0)).sum();
    let l1: f64 = u.interior.iter().map(|&v| h * v.abs()).sum();
    let ratio = |num: f64, den: f64| {
        if num <= 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        }
    };
    let sup_bound_ratio = ratio(sup.max(0.0) * dist, l1_pos);
    let inf_bound_ratio = ratio((-inf).max(0.0) * dist, l1_neg);
    // jump mass strictly inside omega_prime
    let mut bv = 0.0;
    for k in (i_lo + 1)..i_hi {
        bv += (u.interior[k] - u.interior[k - 1]).abs();
    }
    let bv_ratio = ratio(bv, l1);
    Ok(RegularityReport { sup_bound_ratio, inf_bound_ratio, bv_ratio })
}

/// Total variation of the field over the closed domain: interior jumps plus
/// the jumps onto the adjacent window traces.
pub fn bv_closure(mesh: &Mesh, u: &Field) -> f64 {
    let mut tv = 0.0;
    for k in 1..mesh.n_interior {
        tv += (u.interior[k] - u.interior[k - 1]).abs();
    }
    if mesh.n_window_per_side > 0 {
        tv += (u.interior[0] - *u.exterior.window_left.last().unwrap()).abs();
        tv += (u.interior[mesh.n_interior - 1] - u.exterior.window_right[0]).abs();
    }
    tv
}
