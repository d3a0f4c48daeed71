//! Exact evaluation of the nonlocal `(s,p)` energy, seminorms, tails, the
//! renormalized energy difference, and the quantitative inequalities used
//! by the test batteries.
//!
//! All sums are exact for piecewise-constant fields: the kernel integrals
//! live in the weight table, values factor out per cell pair. Pairs with
//! both endpoints in the exterior never enter.

use serde::{Deserialize, Serialize};

use crate::domain::{ExteriorData, FarRegion, Field, Mesh};
use crate::kernel::{far_moment, pair_weight, Side, WeightTable};
use crate::{Error, Result};

/// Split of the energy into interior, window-cross, and far contributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub s: f64,
    pub p: f64,
    pub interior_term: f64,
    pub cross_term: f64,
    pub far_term: f64,
    pub total: f64,
}

/// Visit every unordered interaction pair with at least one interior cell:
/// `f(weight, u_value, other_value)`.
fn for_q_pairs(mesh: &Mesh, u: &Field, w: &WeightTable, mut f: impl FnMut(PairKind, f64, f64, f64)) {
    let n = mesh.n_interior;
    let m = mesh.n_window_per_side;
    for i in 0..n {
        let gi = mesh.gi_interior(i);
        let ui = u.interior[i];
        for j in (i + 1)..n {
            f(PairKind::Interior, w.pair(gi, mesh.gi_interior(j)), ui, u.interior[j]);
        }
        for jw in 0..m {
            f(
                PairKind::Cross,
                w.pair(gi, mesh.gi_window(Side::Left, jw)),
                ui,
                u.exterior.window_left[jw],
            );
            f(
                PairKind::Cross,
                w.pair(gi, mesh.gi_window(Side::Right, jw)),
                ui,
                u.exterior.window_right[jw],
            );
        }
        if mesh.far_region() == FarRegion::Unbounded {
            let (fl, fr) = u.far_values();
            let far = w.far(gi);
            f(PairKind::Far, far[0], ui, fl);
            f(PairKind::Far, far[1], ui, fr);
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PairKind {
    Interior,
    Cross,
    Far,
}

/// The `(s,p)` energy of a field, split per region.
///
/// The interior term carries the `1/(2p)` factor over ordered pairs (hence
/// `1/p` over unordered ones); cross and far terms carry `1/p`.
pub fn energy_breakdown(
    mesh: &Mesh,
    u: &Field,
    s: f64,
    p: f64,
    w: &WeightTable,
) -> Result<EnergyBreakdown> {
    u.check_shape(mesh)?;
    w.check_alpha(s, p)?;
    if p < 1.0 {
        return Err(Error::Domain(format!("p must be >= 1, got {p}")));
    }
    let mut interior = 0.0;
    let mut cross = 0.0;
    let mut far = 0.0;
    for_q_pairs(mesh, u, w, |kind, we, a, b| {
        let v = we * (a - b).abs().powf(p);
        match kind {
            PairKind::Interior => interior += v,
            PairKind::Cross => cross += v,
            PairKind::Far => far += v,
        }
    });
    let inv_p = 1.0 / p;
    let (interior_term, cross_term, far_term) = (interior * inv_p, cross * inv_p, far * inv_p);
    Ok(EnergyBreakdown {
        s,
        p,
        interior_term,
        cross_term,
        far_term,
        total: interior_term + cross_term + far_term,
    })
}

/// Gagliardo seminorm over the domain only: ordered interior pairs, no
/// `1/(2p)` factor, `p`-th root taken.
pub fn seminorm(mesh: &Mesh, u: &Field, s: f64, p: f64, w: &WeightTable) -> Result<f64> {
    u.check_shape(mesh)?;
    w.check_alpha(s, p)?;
    Ok(seminorm_pth_power(mesh, u, p, w).powf(1.0 / p))
}

fn seminorm_pth_power(mesh: &Mesh, u: &Field, p: f64, w: &WeightTable) -> f64 {
    let n = mesh.n_interior;
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += w.pair(mesh.gi_interior(i), mesh.gi_interior(j))
                * (u.interior[i] - u.interior[j]).abs().powf(p);
        }
    }
    2.0 * sum
}

/// Per-cell tail of the exterior datum and its width-weighted `L^1` norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    /// Cell averages of the tail over each interior cell.
    pub values: Vec<f64>,
    pub l1_norm: f64,
}

/// Cell-averaged tails of `phi` against the exterior, exactly integrated.
/// Works directly from the mesh so that huge diagnostic windows never
/// require a full weight table.
pub fn tail_report(mesh: &Mesh, phi: &ExteriorData, s: f64, p: f64) -> Result<TailReport> {
    phi.check_shape(mesh)?;
    let alpha = s * p;
    crate::kernel::check_alpha(alpha)?;
    let h = mesh.cell_width();
    let m = mesh.n_window_per_side;
    let mut values = Vec::with_capacity(mesh.n_interior);
    let mut l1 = 0.0;
    let (fl, fr) = phi.far_field.values();
    let (le, re) = mesh.far_edges();
    for i in 0..mesh.n_interior {
        let ci = mesh.interior_cell(i);
        let mut cell_integral = 0.0;
        for jw in 0..m {
            cell_integral += pair_weight(ci, mesh.window_cell(Side::Left, jw), alpha)?
                * phi.window_left[jw].abs().powf(p);
            cell_integral += pair_weight(ci, mesh.window_cell(Side::Right, jw), alpha)?
                * phi.window_right[jw].abs().powf(p);
        }
        if mesh.far_region() == FarRegion::Unbounded {
            cell_integral += far_moment(ci, le, Side::Left, alpha)? * fl.abs().powf(p);
            cell_integral += far_moment(ci, re, Side::Right, alpha)? * fr.abs().powf(p);
        }
        l1 += cell_integral;
        values.push(cell_integral / h);
    }
    Ok(TailReport { values, l1_norm: l1 })
}

/// Growing-window partial quantities are declared divergent once some stage
/// exceeds this multiple of the first stage.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

pub fn partials_diverge(partials: &[f64]) -> bool {
    match partials.first() {
        Some(&first) if first > 0.0 => {
            partials.iter().any(|&v| v > DIVERGENCE_FACTOR * first)
        }
        _ => false,
    }
}

/// Tail-integrability report over a family of growing windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailSupReport {
    /// Cellwise sup over the `p` grid stays integrable along the stages.
    pub cond_i: bool,
    /// Sup over the grid of the tail norms stays bounded along the stages.
    pub cond_ii: bool,
    /// Both the `p = 1` and the `p = q` tails stay integrable.
    pub cond_iii: bool,
    pub sup_cellwise_partials: Vec<f64>,
    pub sup_norm_partials: Vec<f64>,
    pub t1_partials: Vec<f64>,
    pub tq_partials: Vec<f64>,
}

/// Evaluate the three equivalent tail conditions on a growing-window family
/// (a single stage is fine for ordinary data). The sup over the open `p`
/// range is discretized as a cellwise max over `p_grid`.
pub fn tail_sup_check(
    family: &[(Mesh, ExteriorData)],
    s: f64,
    q: f64,
    p_grid: &[f64],
) -> Result<TailSupReport> {
    if p_grid.iter().any(|&p| p <= 1.0 || p >= q) {
        return Err(Error::Param("p_grid must lie strictly inside (1, q)".into()));
    }
    let mut sup_cell = Vec::new();
    let mut sup_norm = Vec::new();
    let mut t1 = Vec::new();
    let mut tq = Vec::new();
    for (mesh, phi) in family {
        let h = mesh.cell_width();
        let reports: Vec<TailReport> = p_grid
            .iter()
            .map(|&p| tail_report(mesh, phi, s, p))
            .collect::<Result<_>>()?;
        let mut cellwise = 0.0;
        for i in 0..mesh.n_interior {
            let sup = reports.iter().fold(0.0f64, |m, r| m.max(r.values[i]));
            cellwise += h * sup;
        }
        sup_cell.push(cellwise);
        sup_norm.push(reports.iter().fold(0.0f64, |m, r| m.max(r.l1_norm)));
        t1.push(tail_report(mesh, phi, s, 1.0)?.l1_norm);
        tq.push(tail_report(mesh, phi, s, q)?.l1_norm);
    }
    Ok(TailSupReport {
        cond_i: !partials_diverge(&sup_cell),
        cond_ii: !partials_diverge(&sup_norm),
        cond_iii: !partials_diverge(&t1) && !partials_diverge(&tq),
        sup_cellwise_partials: sup_cell,
        sup_norm_partials: sup_norm,
        t1_partials: t1,
        tq_partials: tq,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Embedding inequality between the `(sigma,1)` and `(s,p)` seminorms with
/// its explicit one-dimensional constants: `C = 2 |Omega|` from the kernel
/// shell measure and `diam(Omega)^(s-sigma)` from the distance bound.
pub fn embedding_check(
    mesh: &Mesh,
    u: &Field,
    s: f64,
    sigma: f64,
    p: f64,
    w_sp: &WeightTable,
    w_sigma: &WeightTable,
) -> Result<InequalityReport> {
    if !(0.0 < sigma && sigma < s && s < 1.0) {
        return Err(Error::Domain(format!("need 0 < sigma < s < 1, got sigma={sigma}, s={s}")));
    }
    if p <= 1.0 {
        return Err(Error::Domain(format!("need p > 1, got {p}")));
    }
    w_sp.check_alpha(s, p)?;
    w_sigma.check_alpha(sigma, 1.0)?;
    let lhs = seminorm_pth_power(mesh, u, 1.0, w_sigma);
    let sem_sp = seminorm_pth_power(mesh, u, p, w_sp).powf(1.0 / p);
    let c_n_omega = 2.0 * mesh.diam();
    let factor = (c_n_omega * (p - 1.0) / (p * (s - sigma))).powf((p - 1.0) / p);
    let rhs = factor * mesh.diam().powf(s - sigma) * sem_sp;
    Ok(InequalityReport { lhs, rhs, holds: lhs <= rhs + 1e-12 })
}

/// The p- and s-independent constant of the a priori minimizer bound,
/// specialized to one dimension: `2` bounds `2^(1/p)` from the seminorm
/// side, and the Poincare chain gives `2 sup_s (2d)^s sup_p ((2d)/|...|)^(1/p)`
/// with `|Omega_d \ Omega| = 2d`.
pub fn apriori_c0(mesh: &Mesh) -> f64 {
    let d = mesh.diam();
    2.0 + 2.0 * (2.0 * d).max(1.0)
}

/// A priori norm bound for solver outputs: `W^{s,p}` norm of the minimizer
/// against `c0 (1 + tail)`.
pub fn apriori_check(
    mesh: &Mesh,
    u_min: &Field,
    phi: &ExteriorData,
    s: f64,
    p: f64,
) -> Result<InequalityReport> {
    let w = crate::kernel::assemble_weights(mesh, s * p)?;
    let sem = seminorm(mesh, u_min, s, p, &w)?;
    let h = mesh.cell_width();
    let lp: f64 = u_min
        .interior
        .iter()
        .map(|v| h * v.abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p);
    let lhs = sem + lp;
    let tail = tail_report(mesh, phi, s, p)?.l1_norm;
    let rhs = apriori_c0(mesh) * (1.0 + tail);
    Ok(InequalityReport { lhs, rhs, holds: lhs <= rhs + 1e-12 })
}

/// Renormalized difference of two fields sharing exterior data: the ordered
/// interaction sum of `|du| - |dv|`, equal to `2 (E1(u) - E1(v))` on a
/// finite mesh.
pub fn renormalized_diff(
    mesh: &Mesh,
    u: &Field,
    v: &Field,
    s: f64,
    w: &WeightTable,
) -> Result<f64> {
    u.check_shape(mesh)?;
    v.check_shape(mesh)?;
    w.check_alpha(s, 1.0)?;
    if !u.exterior.values_same(&v.exterior) {
        return Err(Error::ExteriorMismatch);
    }
    let mut diff = 0.0;
    for_q_pairs(mesh, u, w, |_, we, a, b| diff += we * (a - b).abs());
    for_q_pairs(mesh, v, w, |_, we, a, b| diff -= we * (a - b).abs());
    Ok(2.0 * diff)
}

/// Both sides of the discrete generalized coarea identity at `p = 1`:
/// the weighted variation sum and its layer-cake evaluation over the sorted
/// distinct values.
pub fn coarea_sides(mesh: &Mesh, u: &Field, s: f64, w: &WeightTable) -> Result<(f64, f64)> {
    u.check_shape(mesh)?;
    w.check_alpha(s, 1.0)?;
    let mut lhs = 0.0;
    for_q_pairs(mesh, u, w, |_, we, a, b| lhs += we * (a - b).abs());

    let mut values: Vec<f64> = u.interior.clone();
    values.extend_from_slice(&u.exterior.window_left);
    values.extend_from_slice(&u.exterior.window_right);
    if mesh.far_region() == FarRegion::Unbounded {
        let (fl, fr) = u.far_values();
        values.push(fl);
        values.push(fr);
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    let mut rhs = 0.0;
    for band in values.windows(2) {
        let (lo, hi) = (band[0], band[1]);
        let t = 0.5 * (lo + hi);
        let mut per = 0.0;
        for_q_pairs(mesh, u, w, |_, we, a, b| {
            let ca = if a > t { 1.0 } else { 0.0 };
            let cb = if b > t { 1.0 } else { 0.0 };
            per += we * (ca - cb).abs();
        });
        rhs += (hi - lo) * per;
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_mesh, FarField, MeshSpec};
    use crate::kernel::assemble_weights;

    fn step_setup() -> (Mesh, Field, WeightTable) {
        // global 0/1 step across x = 1/2 on omega = (0,1)
        let mesh = build_mesh(&MeshSpec {
            omega: (0.0, 1.0),
            n_interior: 4,
            window_halfwidth: 0.5,
            n_window_per_side: 2,
            far: FarRegion::Unbounded,
        })
        .unwrap();
        let u = Field {
            interior: vec![0.0, 0.0, 1.0, 1.0],
            exterior: ExteriorData {
                window_left: vec![0.0, 0.0],
                window_right: vec![1.0, 1.0],
                far_field: FarField::Sides { left: 0.0, right: 1.0 },
            },
        };
        let w = assemble_weights(&mesh, 0.5).unwrap();
        (mesh, u, w)
    }

    #[test]
    fn constant_field_zero_energy() {
        let mesh = build_mesh(&MeshSpec {
            omega: (0.0, 1.0),
            n_interior: 3,
            window_halfwidth: 1.0,
            n_window_per_side: 3,
            far: FarRegion::Unbounded,
        })
        .unwrap();
        let w = assemble_weights(&mesh, 0.75).unwrap();
        let u = Field::constant(&mesh, 2.5);
        let e = energy_breakdown(&mesh, &u, 0.5, 1.5, &w).unwrap();
        assert_eq!(e.total, 0.0);
        assert_eq!(seminorm(&mesh, &u, 0.5, 1.5, &w).unwrap(), 0.0);
    }

    #[test]
    fn step_energy_is_four() {
        let (mesh, u, w) = step_setup();
        let e = energy_breakdown(&mesh, &u, 0.5, 1.0, &w).unwrap();
        let sqrt2 = 2.0f64.sqrt();
        assert!((e.interior_term - 4.0 * (sqrt2 - 1.0)).abs() < 1e-12, "{}", e.interior_term);
        assert!((e.cross_term + e.far_term - (8.0 - 4.0 * sqrt2)).abs() < 1e-12);
        assert!((e.total - 4.0).abs() < 1e-12, "total {}", e.total);
        // seminorm at p = 1 doubles the interior term
        let sn = seminorm(&mesh, &u, 0.5, 1.0, &w).unwrap();
        assert!((sn - 8.0 * (sqrt2 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn p_homogeneity() {
        let (mesh, u, w) = step_setup();
        for p in [1.0, 1.5, 2.0] {
            let wp = assemble_weights(&mesh, 0.5 * p).unwrap();
            let lam = -2.3;
            let scaled = Field {
                interior: u.interior.iter().map(|v| lam * v).collect(),
                exterior: ExteriorData {
                    window_left: u.exterior.window_left.iter().map(|v| lam * v).collect(),
                    window_right: u.exterior.window_right.iter().map(|v| lam * v).collect(),
                    far_field: u.exterior.far_field.map(|v| lam * v),
                },
            };
            let e1 = energy_breakdown(&mesh, &u, 0.5, p, &wp).unwrap().total;
            let e2 = energy_breakdown(&mesh, &scaled, 0.5, p, &wp).unwrap().total;
            assert!((e2 - lam.abs().powf(p) * e1).abs() < 1e-10 * e2.abs().max(1.0));
        }
    }

    #[test]
    fn alpha_mismatch_rejected() {
        let (mesh, u, w) = step_setup();
        assert!(matches!(
            energy_breakdown(&mesh, &u, 0.5, 1.5, &w),
            Err(Error::AlphaMismatch { .. })
        ));
    }

    #[test]
    fn tail_of_unit_exterior_is_eight() {
        let mesh = build_mesh(&MeshSpec {
            omega: (0.0, 1.0),
            n_interior: 4,
            window_halfwidth: 1.0,
            n_window_per_side: 4,
            far: FarRegion::Unbounded,
        })
        .unwrap();
        let phi = ExteriorData::constant(&mesh, 1.0);
        let rep = tail_report(&mesh, &phi, 0.5, 1.0).unwrap();
        assert!((rep.l1_norm - 8.0).abs() < 1e-11, "{}", rep.l1_norm);
        let zero = tail_report(&mesh, &ExteriorData::zero(&mesh), 0.5, 1.0).unwrap();
        assert_eq!(zero.l1_norm, 0.0);
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn renormalized_diff_identity() {
        let (mesh, u, w) = step_setup();
        let mut v = u.clone();
        v.interior = vec![0.3, -0.1, 0.9, 0.4];
        let rd = renormalized_diff(&mesh, &u, &v, 0.5, &w).unwrap();
        let eu = energy_breakdown(&mesh, &u, 0.5, 1.0, &w).unwrap().total;
        let ev = energy_breakdown(&mesh, &v, 0.5, 1.0, &w).unwrap().total;
        assert!((rd - 2.0 * (eu - ev)).abs() < 1e-12);
        assert_eq!(renormalized_diff(&mesh, &u, &u, 0.5, &w).unwrap(), 0.0);
        // mismatched exterior rejected
        let mut other = v.clone();
        other.exterior.window_left[0] = 9.0;
        assert!(matches!(
            renormalized_diff(&mesh, &u, &other, 0.5, &w),
            Err(Error::ExteriorMismatch)
        ));
    }

    #[test]
    fn coarea_identity_on_step() {
        let (mesh, u, w) = step_setup();
        let (lhs, rhs) = coarea_sides(&mesh, &u, 0.5, &w).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
    }

    #[test]
    fn truncation_never_increases_energy() {
        let (mesh, mut u, w) = step_setup();
        u.interior = vec![3.0, -2.0, 5.0, 0.5];
        let e0 = energy_breakdown(&mesh, &u, 0.5, 1.0, &w).unwrap().total;
        for m in [0.0, 0.5, 1.0, 2.0, 4.0, 10.0] {
            let t = crate::domain::truncate_field(&u, m);
            let et = energy_breakdown(&mesh, &t, 0.5, 1.0, &w).unwrap().total;
            assert!(et <= e0 + 1e-12);
        }
    }
}
