//! Seeded instance generators shared by the check suites, the acceptance
//! battery, and the harness. Everything is deterministic given the seed.

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

use crate::domain::{build_mesh, ExteriorData, FarField, FarRegion, Field, Mesh, MeshSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard test mesh on `(0,1)` with a window of the same width.
pub fn unit_mesh(n_interior: usize) -> Mesh {
    build_mesh(&MeshSpec {
        omega: (0.0, 1.0),
        n_interior,
        window_halfwidth: 1.0,
        n_window_per_side: n_interior,
        far: FarRegion::Unbounded,
    })
    .expect("valid mesh")
}

/// Bounded random exterior datum with values in `[-amp, amp]`.
pub fn random_phi(mesh: &Mesh, rng: &mut ChaCha8Rng, amp: f64) -> ExteriorData {
    let m = mesh.n_window_per_side;
    let mut draw = |_: usize| rng.gen_range(-amp..=amp);
    ExteriorData {
        window_left: (0..m).map(&mut draw).collect(),
        window_right: (0..m).map(&mut draw).collect(),
        far_field: FarField::Sides {
            left: rng.gen_range(-amp..=amp),
            right: rng.gen_range(-amp..=amp),
        },
    }
}

/// Nonnegative random exterior datum with values in `[0, amp]`.
pub fn random_phi_nonneg(mesh: &Mesh, rng: &mut ChaCha8Rng, amp: f64) -> ExteriorData {
    let m = mesh.n_window_per_side;
    let mut draw = |_: usize| rng.gen_range(0.0..=amp);
    ExteriorData {
        window_left: (0..m).map(&mut draw).collect(),
        window_right: (0..m).map(&mut draw).collect(),
        far_field: FarField::Sides {
            left: rng.gen_range(0.0..=amp),
            right: rng.gen_range(0.0..=amp),
        },
    }
}

/// Random indicator-valued exterior trace (window cells and far sides in
/// `{0, 1}`).
pub fn random_indicator_phi(mesh: &Mesh, rng: &mut ChaCha8Rng) -> ExteriorData {
    let m = mesh.n_window_per_side;
    let mut draw = |_: usize| if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
    ExteriorData {
        window_left: (0..m).map(&mut draw).collect(),
        window_right: (0..m).map(&mut draw).collect(),
        far_field: FarField::Sides {
            left: if rng.gen_bool(0.5) { 1.0 } else { 0.0 },
            right: if rng.gen_bool(0.5) { 1.0 } else { 0.0 },
        },
    }
}

/// Random field over the given exterior with interior values in
/// `[-amp, amp]`.
pub fn random_field(
    mesh: &Mesh,
    phi: &ExteriorData,
    rng: &mut ChaCha8Rng,
    amp: f64,
) -> Field {
    Field {
        interior: (0..mesh.n_interior).map(|_| rng.gen_range(-amp..=amp)).collect(),
        exterior: phi.clone(),
    }
}

/// Smooth seeded exterior profile usable across mesh refinements: a short
/// random cosine series, plus matching constant far data.
pub fn random_profile_phi(mesh: &Mesh, seed: u64, amp: f64) -> ExteriorData {
    let mut r = rng(seed);
    let coef: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                r.gen_range(0.2..1.0) * amp / 2.0,
                r.gen_range(0.5..4.0),
                r.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let profile = move |y: f64| -> f64 {
        coef.iter().map(|(a, b, c)| a * (b * y + c).cos()).sum()
    };
    let (le, re) = mesh.far_edges();
    let far = FarField::Sides { left: profile(le), right: profile(re) };
    ExteriorData::from_profile(mesh, profile, far)
}
