//! Meshes over the domain and its exterior, piecewise-constant fields with
//! exterior data, and cell sets.
//!
//! Geometry convention: the domain `(a, b)` carries `n_interior` uniform
//! cells; the exterior window `(a-L, a) u (b, b+L)` carries
//! `n_window_per_side` cells per side at the same width; everything beyond
//! the window is the far region, either the two unbounded halflines or
//! empty (the latter is used by growing-window diagnostics).
//!
//! Global cell indexing, used by `WeightTable` and the solvers, is sorted:
//! left window cells ascending, then interior, then right window.

use serde::{Deserialize, Serialize};

use crate::kernel::Cell;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarRegion {
    /// The two halflines beyond the window carry (constant) data.
    Unbounded,
    /// The mesh is truncated at the window; far moments are zero.
    Empty,
}

/// Uniform 1D mesh: interior cells, exterior window, far-region descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub n_interior: usize,
    pub window_halfwidth: f64,
    pub n_window_per_side: usize,
    pub far: FarRegion,
}

/// Parameters accepted by [`build_mesh`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshSpec {
    pub omega: (f64, f64),
    pub n_interior: usize,
    pub window_halfwidth: f64,
    pub n_window_per_side: usize,
    #[serde(default = "default_far")]
    pub far: FarRegion,
}

fn default_far() -> FarRegion {
    FarRegion::Unbounded
}

pub fn build_mesh(spec: &MeshSpec) -> Result<Mesh> {
    let (a, b) = spec.omega;
    if !(a.is_finite() && b.is_finite() && spec.window_halfwidth.is_finite()) {
        return Err(Error::Spec("mesh coordinates must be finite".into()));
    }
    if !(a < b) {
        return Err(Error::Spec(format!("omega needs lo < hi, got ({a}, {b})")));
    }
    if spec.n_interior == 0 {
        return Err(Error::Spec("n_interior must be at least 1".into()));
    }
    if spec.window_halfwidth < 0.0 {
        return Err(Error::Spec("window_halfwidth must be nonnegative".into()));
    }
    let h = (b - a) / spec.n_interior as f64;
    let l = spec.window_halfwidth;
    let m = spec.n_window_per_side;
    if (l == 0.0) != (m == 0) {
        return Err(Error::Spec(
            "window_halfwidth and n_window_per_side must be zero together".into(),
        ));
    }
    if m > 0 {
        let wh = l / m as f64;
        if (wh - h).abs() > 1e-12 * h {
            return Err(Error::Spec(format!(
                "window cells must tile the window at the interior width: L/M = {wh}, h = {h}"
            )));
        }
    }
    Ok(Mesh {
        omega_lo: a,
        omega_hi: b,
        n_interior: spec.n_interior,
        window_halfwidth: l,
        n_window_per_side: m,
        far: spec.far,
    })
}

impl Mesh {
    pub fn cell_width(&self) -> f64 {
        (self.omega_hi - self.omega_lo) / self.n_interior as f64
    }

    pub fn diam(&self) -> f64 {
        self.omega_hi - self.omega_lo
    }

    pub fn far_region(&self) -> FarRegion {
        self.far
    }

    /// Outer window edges `(a - L, b + L)`; the far halflines start there.
    pub fn far_edges(&self) -> (f64, f64) {
        (self.omega_lo - self.window_halfwidth, self.omega_hi + self.window_halfwidth)
    }

    pub fn interior_cell(&self, i: usize) -> Cell {
        let h = self.cell_width();
        Cell {
            lo: self.omega_lo + i as f64 * h,
            hi: self.omega_lo + (i + 1) as f64 * h,
        }
    }

    /// Window cell `j` on the given side, `j` ascending with position.
    pub fn window_cell(&self, side: crate::kernel::Side, j: usize) -> Cell {
        let h = self.cell_width();
        let m = self.n_window_per_side as f64;
        match side {
            crate::kernel::Side::Left => Cell {
                lo: self.omega_lo - (m - j as f64) * h,
                hi: self.omega_lo - (m - 1.0 - j as f64) * h,
            },
            crate::kernel::Side::Right => Cell {
                lo: self.omega_hi + j as f64 * h,
                hi: self.omega_hi + (j + 1) as f64 * h,
            },
        }
    }

    /// All cells in global index order: left window, interior, right window.
    pub fn all_cells(&self) -> Vec<Cell> {
        let m = self.n_window_per_side;
        let mut cells = Vec::with_capacity(self.n_interior + 2 * m);
        for j in 0..m {
            cells.push(self.window_cell(crate::kernel::Side::Left, j));
        }
        for i in 0..self.n_interior {
            cells.push(self.interior_cell(i));
        }
        for j in 0..m {
            cells.push(self.window_cell(crate::kernel::Side::Right, j));
        }
        cells
    }

    /// Global index of interior cell `i`.
    pub fn gi_interior(&self, i: usize) -> usize {
        self.n_window_per_side + i
    }

    /// Global index of window cell `j` on `side`.
    pub fn gi_window(&self, side: crate::kernel::Side, j: usize) -> usize {
        match side {
            crate::kernel::Side::Left => j,
            crate::kernel::Side::Right => self.n_window_per_side + self.n_interior + j,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_interior + 2 * self.n_window_per_side
    }

    /// Refine by an integer factor: same geometry, `factor`-times the cells.
    pub fn refine(&self, factor: usize) -> Mesh {
        Mesh {
            n_interior: self.n_interior * factor,
            n_window_per_side: self.n_window_per_side * factor,
            ..self.clone()
        }
    }
}

/// Constant far-field data. `Sides` covers data that differ between the two
/// halflines (a global step, for instance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarField {
    Zero,
    Constant(f64),
    Sides { left: f64, right: f64 },
}

impl FarField {
    pub fn values(&self) -> (f64, f64) {
        match *self {
            FarField::Zero => (0.0, 0.0),
            FarField::Constant(c) => (c, c),
            FarField::Sides { left, right } => (left, right),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FarField {
        let (l, r) = self.values();
        let (fl, fr) = (f(l), f(r));
        if fl == fr {
            if fl == 0.0 {
                FarField::Zero
            } else {
                FarField::Constant(fl)
            }
        } else {
            FarField::Sides { left: fl, right: fr }
        }
    }
}

/// Exterior datum: one value per window cell (left block then right block,
/// each ascending in position) plus the far field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorData {
    pub window_left: Vec<f64>,
    pub window_right: Vec<f64>,
    pub far_field: FarField,
}

impl ExteriorData {
    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        let m = mesh.n_window_per_side;
        ExteriorData {
            window_left: vec![c; m],
            window_right: vec![c; m],
            far_field: if c == 0.0 { FarField::Zero } else { FarField::Constant(c) },
        }
    }

    pub fn zero(mesh: &Mesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    /// Sample a profile at window-cell midpoints; the far field takes the
    /// supplied constants.
    pub fn from_profile(mesh: &Mesh, f: impl Fn(f64) -> f64, far: FarField) -> Self {
        let m = mesh.n_window_per_side;
        let sample = |side, j: usize| f(mesh.window_cell(side, j).mid());
        ExteriorData {
            window_left: (0..m).map(|j| sample(crate::kernel::Side::Left, j)).collect(),
            window_right: (0..m).map(|j| sample(crate::kernel::Side::Right, j)).collect(),
            far_field: far,
        }
    }

    pub fn check_shape(&self, mesh: &Mesh) -> Result<()> {
        let m = mesh.n_window_per_side;
        if self.window_left.len() != m || self.window_right.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "exterior data has {}/{} window values, mesh wants {m} per side",
                self.window_left.len(),
                self.window_right.len()
            )));
        }
        Ok(())
    }

    /// Joint max magnitude of window values and (when present) far values.
    pub fn sup_abs(&self, mesh: &Mesh) -> f64 {
        let mut m = 0.0f64;
        for v in self.window_left.iter().chain(&self.window_right) {
            m = m.max(v.abs());
        }
        if mesh.far == FarRegion::Unbounded {
            let (l, r) = self.far_field.values();
            m = m.max(l.abs()).max(r.abs());
        }
        m
    }

    pub fn values_same(&self, other: &ExteriorData) -> bool {
        self.window_left == other.window_left
            && self.window_right == other.window_right
            && self.far_field.values() == other.far_field.values()
    }
}

/// Piecewise-constant function on the whole line: interior values plus
/// exterior data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub interior: Vec<f64>,
    pub exterior: ExteriorData,
}

impl Field {
    pub fn new(interior: Vec<f64>, exterior: ExteriorData) -> Self {
        Field { interior, exterior }
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        Field {
            interior: vec![c; mesh.n_interior],
            exterior: ExteriorData::constant(mesh, c),
        }
    }

    /// Extend exterior data by a constant interior.
    pub fn extend(mesh: &Mesh, phi: &ExteriorData, interior_value: f64) -> Self {
        Field {
            interior: vec![interior_value; mesh.n_interior],
            exterior: phi.clone(),
        }
    }

    pub fn check_shape(&self, mesh: &Mesh) -> Result<()> {
        if self.interior.len() != mesh.n_interior {
            return Err(Error::ShapeMismatch(format!(
                "field has {} interior values, mesh wants {}",
                self.interior.len(),
                mesh.n_interior
            )));
        }
        self.exterior.check_shape(mesh)
    }

    /// Value on the global cell index (window or interior).
    pub fn value_at(&self, mesh: &Mesh, gi: usize) -> f64 {
        let m = mesh.n_window_per_side;
        if gi < m {
            self.exterior.window_left[gi]
        } else if gi < m + mesh.n_interior {
            self.interior[gi - m]
        } else {
            self.exterior.window_right[gi - m - mesh.n_interior]
        }
    }

    pub fn far_values(&self) -> (f64, f64) {
        self.exterior.far_field.values()
    }

    pub fn sup_abs(&self, mesh: &Mesh) -> f64 {
        self.interior
            .iter()
            .fold(self.exterior.sup_abs(mesh), |m, v| m.max(v.abs()))
    }

    /// Exact `L^1(Omega)` distance between interior parts.
    pub fn l1_distance(&self, other: &Field, mesh: &Mesh) -> f64 {
        let h = mesh.cell_width();
        self.interior
            .iter()
            .zip(&other.interior)
            .map(|(a, b)| (a - b).abs() * h)
            .sum()
    }
}

/// Clamp every value of the field to `[-m, m]`, exterior included.
pub fn truncate_field(u: &Field, m: f64) -> Field {
    debug_assert!(m >= 0.0);
    let clamp = |v: f64| v.max(-m).min(m);
    Field {
        interior: u.interior.iter().copied().map(clamp).collect(),
        exterior: ExteriorData {
            window_left: u.exterior.window_left.iter().copied().map(clamp).collect(),
            window_right: u.exterior.window_right.iter().copied().map(clamp).collect(),
            far_field: u.exterior.far_field.map(clamp),
        },
    }
}

/// Subset of the line resolved by the mesh: membership per interior cell,
/// per window cell, and per far side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSet {
    pub interior: Vec<bool>,
    pub window_left: Vec<bool>,
    pub window_right: Vec<bool>,
    pub far_left: bool,
    pub far_right: bool,
}

impl CellSet {
    pub fn empty(mesh: &Mesh) -> Self {
        CellSet {
            interior: vec![false; mesh.n_interior],
            window_left: vec![false; mesh.n_window_per_side],
            window_right: vec![false; mesh.n_window_per_side],
            far_left: false,
            far_right: false,
        }
    }

    pub fn full(mesh: &Mesh) -> Self {
        CellSet {
            interior: vec![true; mesh.n_interior],
            window_left: vec![true; mesh.n_window_per_side],
            window_right: vec![true; mesh.n_window_per_side],
            far_left: true,
            far_right: true,
        }
    }

    pub fn complement(&self) -> Self {
        CellSet {
            interior: self.interior.iter().map(|b| !b).collect(),
            window_left: self.window_left.iter().map(|b| !b).collect(),
            window_right: self.window_right.iter().map(|b| !b).collect(),
            far_left: !self.far_left,
            far_right: !self.far_right,
        }
    }

    /// Exterior part only (used as a fixed trace in set minimization).
    pub fn with_interior(&self, interior: Vec<bool>) -> Self {
        CellSet { interior, ..self.clone() }
    }

    pub fn check_shape(&self, mesh: &Mesh) -> Result<()> {
        let m = mesh.n_window_per_side;
        if self.interior.len() != mesh.n_interior
            || self.window_left.len() != m
            || self.window_right.len() != m
        {
            return Err(Error::ShapeMismatch("cell set does not match mesh".into()));
        }
        Ok(())
    }
}

/// Indicator function of a cell set, as a field.
pub fn indicator_field(e: &CellSet) -> Field {
    let fv = |b: bool| if b { 1.0 } else { 0.0 };
    let far = match (e.far_left, e.far_right) {
        (false, false) => FarField::Zero,
        (true, true) => FarField::Constant(1.0),
        (l, r) => FarField::Sides { left: fv(l), right: fv(r) },
    };
    Field {
        interior: e.interior.iter().map(|&b| fv(b)).collect(),
        exterior: ExteriorData {
            window_left: e.window_left.iter().map(|&b| fv(b)).collect(),
            window_right: e.window_right.iter().map(|&b| fv(b)).collect(),
            far_field: far,
        },
    }
}

/// Superlevel set `{u >= lambda}` of a field.
pub fn level_set(u: &Field, lambda: f64) -> CellSet {
    let (fl, fr) = u.far_values();
    CellSet {
        interior: u.interior.iter().map(|&v| v >= lambda).collect(),
        window_left: u.exterior.window_left.iter().map(|&v| v >= lambda).collect(),
        window_right: u.exterior.window_right.iter().map(|&v| v >= lambda).collect(),
        far_left: fl >= lambda,
        far_right: fr >= lambda,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh4() -> Mesh {
        build_mesh(&MeshSpec {
            omega: (0.0, 1.0),
            n_interior: 4,
            window_halfwidth: 1.0,
            n_window_per_side: 4,
            far: FarRegion::Unbounded,
        })
        .unwrap()
    }

    #[test]
    fn mesh_cells_tile() {
        let mesh = mesh4();
        let cells = mesh.all_cells();
        assert_eq!(cells.len(), 12);
        for c in &cells {
            assert!((c.width() - 0.25).abs() < 1e-15);
        }
        for w in cells.windows(2) {
            assert!((w[0].hi - w[1].lo).abs() < 1e-12);
        }
        assert_eq!(mesh.far_edges(), (-1.0, 2.0));
    }

    #[test]
    fn mesh_spec_errors() {
        let mut spec = MeshSpec {
            omega: (0.0, 1.0),
            n_interior: 0,
            window_halfwidth: 1.0,
            n_window_per_side: 4,
            far: FarRegion::Unbounded,
        };
        assert!(build_mesh(&spec).is_err());
        spec.n_interior = 4;
        spec.window_halfwidth = 0.8; // not a multiple of h = 0.25
        assert!(build_mesh(&spec).is_err());
        spec.window_halfwidth = 1.0;
        spec.n_window_per_side = 0;
        assert!(build_mesh(&spec).is_err());
    }

    #[test]
    fn single_cell_no_window() {
        let mesh = build_mesh(&MeshSpec {
            omega: (0.0, 1.0),
            n_interior: 1,
            window_halfwidth: 0.0,
            n_window_per_side: 0,
            far: FarRegion::Unbounded,
        })
        .unwrap();
        assert_eq!(mesh.all_cells().len(), 1);
    }

    #[test]
    fn truncation_clamps_and_contracts() {
        let mesh = mesh4();
        let mut u = Field::constant(&mesh, 5.0);
        u.interior[1] = -7.0;
        let t = truncate_field(&u, 3.0);
        assert_eq!(t.interior, vec![3.0, -3.0, 3.0, 3.0]);
        assert_eq!(t.far_values(), (3.0, 3.0));
        // pairwise contraction
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (t.interior[i] - t.interior[j]).abs()
                        <= (u.interior[i] - u.interior[j]).abs() + 1e-15
                );
            }
        }
        // idempotent, and larger M changes nothing once past the sup
        assert_eq!(truncate_field(&t, 3.0), t);
        assert_eq!(truncate_field(&u, 10.0), u);
    }

    #[test]
    fn indicator_and_level_sets_roundtrip() {
        let mesh = mesh4();
        let mut e = CellSet::empty(&mesh);
        e.interior[2] = true;
        e.window_right[0] = true;
        e.far_right = true;
        let f = indicator_field(&e);
        assert_eq!(level_set(&f, 0.5), e);
        // complement is 1 - indicator, valuewise
        let fc = indicator_field(&e.complement());
        for (a, b) in f.interior.iter().zip(&fc.interior) {
            assert_eq!(a + b, 1.0);
        }
        assert_eq!(indicator_field(&CellSet::full(&mesh)).interior, vec![1.0; 4]);
        assert_eq!(indicator_field(&CellSet::empty(&mesh)).far_values(), (0.0, 0.0));
    }
}
