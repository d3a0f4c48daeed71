//! Exact singular-kernel interactions between mesh cells.
//!
//! All weights are double integrals of `|x-y|^(-(1+alpha))` over cell pairs
//! or cell-times-halfline regions, evaluated in closed form. The primitive
//! `G(r) = r^(1-alpha) / (alpha (1-alpha))` gives the pair weight by
//! inclusion-exclusion over the four corner distances; a midpoint series
//! takes over for well-separated cells where the corner form cancels
//! catastrophically.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Mesh;
use crate::{Error, Result};

/// Admissible band for the kernel exponent parameter `alpha = s*p`.
/// Outside it the `1/(alpha(1-alpha))` factor in the primitive amplifies
/// rounding beyond what the closed form can honor.
pub const ALPHA_MIN: f64 = 1e-6;
pub const ALPHA_MAX: f64 = 1.0 - 1e-6;

/// Half-open interval `[lo, hi)` of the real line backing one mesh cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lo: f64,
    pub hi: f64,
}

impl Cell {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Domain("cell endpoints must be finite".into()));
        }
        if !(lo < hi) {
            return Err(Error::Domain(format!("cell needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Cell { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Which side of a cell a far region lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha < ALPHA_MIN || alpha > ALPHA_MAX {
        return Err(Error::Domain(format!(
            "alpha must lie in [{ALPHA_MIN}, {ALPHA_MAX}], got {alpha}"
        )));
    }
    Ok(())
}

/// Double primitive of the kernel: `G(r) = r^(1-alpha) / (alpha(1-alpha))`.
fn g_prim(r: f64, alpha: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r.powf(1.0 - alpha) / (alpha * (1.0 - alpha))
    }
}

/// Weight of a disjoint cell pair: the exact integral of the kernel over
/// `a x b`.
///
/// Touching cells are fine (the corner singularity is integrable for
/// `alpha < 1`); overlapping or coinciding cells are rejected because the
/// diagonal integral diverges.
pub fn pair_weight(a: Cell, b: Cell, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let (l, r) = if a.hi <= b.lo {
        (a, b)
    } else if b.hi <= a.lo {
        (b, a)
    } else {
        return Err(Error::SingularPair);
    };
    let h1 = 0.5 * l.width();
    let h2 = 0.5 * r.width();
    let r0 = r.mid() - l.mid();
    let sigma = h1 + h2;
    // Separated by more than a cell-width sum: the corner form loses
    // ~ (r0/sigma)^2 digits, the midpoint series none.
    if sigma <= 0.5 * r0 {
        return Ok(separated_pair_series(r0, h1, h2, alpha));
    }
    // Corner distances, largest pair first so that each bracket subtracts
    // values of adjacent magnitude.
    let r1 = r.hi - l.lo; // largest, sign -
    let r4 = r.lo - l.hi; // smallest (the gap), sign -
    let (r2, r3) = {
        let u = r.lo - l.lo;
        let v = r.hi - l.hi;
        if u >= v {
            (u, v)
        } else {
            (v, u)
        }
    };
    let w = (g_prim(r2, alpha) - g_prim(r1, alpha)) + (g_prim(r3, alpha) - g_prim(r4, alpha));
    Ok(w.max(0.0))
}

/// Midpoint expansion of the pair weight for well-separated cells:
/// sum over even orders of the kernel derivatives at the midpoint distance.
/// Converges geometrically with ratio `((h1+h2)/r0)^2`.
fn separated_pair_series(r0: f64, h1: f64, h2: f64, alpha: f64) -> f64 {
    let sigma = h1 + h2;
    let delta = (h1 - h2).abs();
    let mut sum = 0.0f64;
    // m runs over even orders; term_m = 2 * prod_{j=1}^{m-2}(alpha+j) / m!
    //   * r0^(1-alpha-m) * (sigma^m - delta^m)
    let mut coeff = 1.0f64; // prod(alpha+j, j=1..m-2) / m!  at m = 2 -> 1/2!
    let mut m = 2u32;
    let mut sig_pow = sigma * sigma;
    let mut del_pow = delta * delta;
    coeff /= 2.0;
    let mut r_pow = r0.powf(1.0 - alpha - 2.0);
    loop {
        let term = 2.0 * coeff * r_pow * (sig_pow - del_pow);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || m > 400 {
            break;
        }
        // advance m -> m+2
        coeff *= (alpha + (m - 1) as f64) * (alpha + m as f64)
            / (((m + 1) as f64) * ((m + 2) as f64));
        sig_pow *= sigma * sigma;
        del_pow *= delta * delta;
        r_pow /= r0 * r0;
        m += 2;
    }
    sum
}

/// Interaction of a cell with the constant-data halfline beyond `edge`:
/// the exact integral of the kernel over `c x (edge, inf)` (or the left
/// mirror). Finite for every `alpha` in the admissible band; touching
/// edges are allowed, overlap is not.
pub fn far_moment(c: Cell, edge: f64, side: Side, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !edge.is_finite() {
        return Ok(0.0);
    }
    // Reflect the left case onto the right one.
    let (cell, e) = match side {
        Side::Right => (c, edge),
        Side::Left => (Cell { lo: -c.hi, hi: -c.lo }, -edge),
    };
    if e < cell.hi {
        return Err(Error::Domain(format!(
            "far edge {edge} intersects cell [{}, {}]",
            c.lo, c.hi
        )));
    }
    let h = 0.5 * cell.width();
    let d0 = e - cell.mid(); // >= h
    if h <= 0.25 * d0 {
        return Ok(far_series(d0, h, alpha));
    }
    Ok((g_prim(e - cell.lo, alpha) - g_prim(e - cell.hi, alpha)).max(0.0))
}

/// Midpoint expansion of the far moment for a cell well inside the halfline
/// shadow: even-order Taylor terms of `(e-x)^(-alpha)/alpha` around the cell
/// midpoint.
fn far_series(d0: f64, h: f64, alpha: f64) -> f64 {
    let mut sum = 0.0f64;
    // term_k = (2 / alpha) * prod_{j=0}^{2k-1}(alpha+j) * d0^(-alpha-2k)
    //   * h^(2k+1) / (2k+1)!
    let mut coeff = 1.0f64 / alpha; // k = 0
    let mut d_pow = d0.powf(-alpha);
    let mut h_pow = h;
    let mut k = 0u32;
    loop {
        let term = 2.0 * coeff * d_pow * h_pow;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || k > 200 {
            break;
        }
        let two_k = (2 * k) as f64;
        coeff *= (alpha + two_k) * (alpha + two_k + 1.0)
            / ((two_k + 2.0) * (two_k + 3.0));
        d_pow /= d0 * d0;
        h_pow *= h * h;
        k += 1;
    }
    sum
}

/// All pairwise kernel weights and far moments for one mesh at one exponent.
///
/// Immutable after construction; share freely across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightTable {
    pub alpha: f64,
    n_cells: usize,
    /// Dense symmetric matrix over interior-and-window cells, row-major.
    /// The diagonal is zero and never read.
    pair: Vec<f64>,
    /// Per cell: integral against the far halflines (left edge, right edge).
    /// Zero when the mesh has an empty far region.
    far: Vec<[f64; 2]>,
}

impl WeightTable {
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Weight of the unordered cell pair `(i, j)` in global cell indexing.
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.pair[i * self.n_cells + j]
    }

    /// Far moments of global cell `i`: `[left, right]`.
    pub fn far(&self, i: usize) -> [f64; 2] {
        self.far[i]
    }

    pub fn check_alpha(&self, s: f64, p: f64) -> Result<()> {
        let want = s * p;
        if (self.alpha - want).abs() > 1e-14 {
            return Err(Error::AlphaMismatch { table: self.alpha, requested: want });
        }
        Ok(())
    }
}

/// Populate the full weight table of a mesh: every unordered pair of
/// distinct cells (interior and window) plus both far moments per cell.
/// Parallel over rows; the result does not depend on the schedule.
pub fn assemble_weights(mesh: &Mesh, alpha: f64) -> Result<WeightTable> {
    check_alpha(alpha)?;
    let cells = mesh.all_cells();
    let n = cells.len();
    let rows: Vec<(Vec<f64>, [f64; 2])> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            for j in 0..n {
                if j != i {
                    // both orientations evaluate the same ordered form
                    row[j] = pair_weight(cells[i], cells[j], alpha).expect("mesh cells disjoint");
                }
            }
            let far = match mesh.far_region() {
                crate::domain::FarRegion::Empty => [0.0, 0.0],
                crate::domain::FarRegion::Unbounded => {
                    let (le, re) = mesh.far_edges();
                    [
                        far_moment(cells[i], le, Side::Left, alpha).expect("far edge outside"),
                        far_moment(cells[i], re, Side::Right, alpha).expect("far edge outside"),
                    ]
                }
            };
            (row, far)
        })
        .collect();
    let mut pair = Vec::with_capacity(n * n);
    let mut far = Vec::with_capacity(n);
    for (row, f) in rows {
        pair.extend_from_slice(&row);
        far.push(f);
    }
    Ok(WeightTable { alpha, n_cells: n, pair, far })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::quad_weight_oracle;

    fn cell(lo: f64, hi: f64) -> Cell {
        Cell::new(lo, hi).unwrap()
    }

    #[test]
    fn unit_cells_touching() {
        // closed form: 8 - 4 sqrt(2)
        let w = pair_weight(cell(0.0, 1.0), cell(1.0, 2.0), 0.5).unwrap();
        let expect = 8.0 - 4.0 * 2.0f64.sqrt();
        assert!((w - expect).abs() < 1e-13, "{w} vs {expect}");
    }

    #[test]
    fn unit_cells_separated() {
        // closed form: 8 sqrt(10) - 12 - 4 sqrt(11)
        let w = pair_weight(cell(0.0, 1.0), cell(10.0, 11.0), 0.5).unwrap();
        let expect = 8.0 * 10.0f64.sqrt() - 12.0 - 4.0 * 11.0f64.sqrt();
        assert!((w - expect).abs() < 1e-12 * expect.abs().max(1.0), "{w} vs {expect}");
    }

    #[test]
    fn coincident_cells_singular() {
        let e = pair_weight(cell(0.0, 1.0), cell(0.0, 1.0), 0.5);
        assert!(matches!(e, Err(Error::SingularPair)));
        let e = pair_weight(cell(0.0, 1.0), cell(0.5, 1.5), 0.5);
        assert!(matches!(e, Err(Error::SingularPair)));
    }

    #[test]
    fn alpha_band_enforced() {
        assert!(pair_weight(cell(0.0, 1.0), cell(1.0, 2.0), 1e-9).is_err());
        assert!(pair_weight(cell(0.0, 1.0), cell(1.0, 2.0), 1.0 - 1e-9).is_err());
        assert!(pair_weight(cell(0.0, 1.0), cell(1.0, 2.0), 1.5).is_err());
    }

    #[test]
    fn far_moment_values() {
        let m = far_moment(cell(0.0, 1.0), 2.0, Side::Right, 0.5).unwrap();
        let expect = 4.0 * (2.0f64.sqrt() - 1.0);
        assert!((m - expect).abs() < 1e-13);
        // touching edge
        let m = far_moment(cell(0.0, 1.0), 1.0, Side::Right, 0.5).unwrap();
        assert!((m - 4.0).abs() < 1e-13);
        // mirrored
        let m = far_moment(cell(0.0, 1.0), -1.0, Side::Left, 0.5).unwrap();
        let expect = 4.0 * (2.0f64.sqrt() - 1.0);
        assert!((m - expect).abs() < 1e-13);
        // receding edge vanishes
        let m = far_moment(cell(0.0, 1.0), 1e12, Side::Right, 0.5).unwrap();
        assert!(m < 1e-5);
        assert!(far_moment(cell(0.0, 1.0), 0.5, Side::Right, 0.5).is_err());
    }

    #[test]
    fn far_moment_monotone_in_edge() {
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let e = 1.0 + 0.5 * k as f64;
            let m = far_moment(cell(0.0, 1.0), e, Side::Right, 0.37).unwrap();
            assert!(m < prev);
            prev = m;
        }
    }

    #[test]
    fn pair_additivity_under_split() {
        let a = cell(0.0, 1.0);
        for (blo, bhi, alpha) in [(1.5, 3.0, 0.5), (2.0, 2.5, 0.8), (40.0, 41.0, 0.3)] {
            let mid = 0.5 * (blo + bhi);
            let whole = pair_weight(a, cell(blo, bhi), alpha).unwrap();
            let parts = pair_weight(a, cell(blo, mid), alpha).unwrap()
                + pair_weight(a, cell(mid, bhi), alpha).unwrap();
            assert!((whole - parts).abs() <= 1e-12 * whole.abs());
        }
    }

    #[test]
    fn pair_monotone_in_gap() {
        let a = cell(0.0, 1.0);
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let lo = 1.0 + 0.25 * k as f64;
            let w = pair_weight(a, cell(lo, lo + 1.0), 0.6).unwrap();
            assert!(w < prev, "weight must strictly decrease as the gap grows");
            prev = w;
        }
    }

    #[test]
    fn closed_form_matches_quadrature() {
        // deterministic sample spanning touching, near, and separated pairs
        let mut rng = crate::instances::rng(42);
        use rand::Rng;
        for _ in 0..100 {
            let alpha = rng.gen_range(0.05..0.95);
            let alo = rng.gen_range(-2.0..2.0);
            let aw = rng.gen_range(0.05..1.5);
            let gap = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..8.0) };
            let bw = rng.gen_range(0.05..1.5);
            let a = cell(alo, alo + aw);
            let b = cell(a.hi + gap, a.hi + gap + bw);
            let w = pair_weight(a, b, alpha).unwrap();
            let q = quad_weight_oracle(a, b, alpha).unwrap();
            assert!(
                (w - q).abs() <= 1e-10 * q.abs().max(1e-300),
                "alpha={alpha} a=[{},{}] b=[{},{}]: {w} vs {q}",
                a.lo, a.hi, b.lo, b.hi
            );
        }
    }

    #[test]
    fn far_moment_matches_receding_tiling() {
        // far moment = sum of pair weights over a tiling plus remainder
        let c = cell(0.0, 1.0);
        let alpha = 0.55;
        let edge = 1.5;
        let total = far_moment(c, edge, Side::Right, alpha).unwrap();
        let mut sum = 0.0;
        let mut lo = edge;
        for k in 0..500 {
            let w = 0.1 * 1.1f64.powi(k);
            sum += pair_weight(c, cell(lo, lo + w), alpha).unwrap();
            lo += w;
        }
        sum += far_moment(c, lo, Side::Right, alpha).unwrap();
        assert!((total - sum).abs() <= 1e-10 * total);
    }
}
