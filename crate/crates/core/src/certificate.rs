//! Standalone verification of weak-solution conditions for arbitrary
//! `(u, z)` pairs, stationarity residuals for `p > 1`, and minimality
//! certification against competitor families.

use serde::{Deserialize, Serialize};

use crate::domain::{Field, Mesh};
use crate::energy::renormalized_diff;
use crate::kernel::WeightTable;
use crate::solver_one::{Certificate, EdgeSys};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub pass: bool,
    pub worst_balance: f64,
    pub worst_complementarity: f64,
    /// Worst overshoot of `|z|` beyond one.
    pub worst_bound: f64,
}

/// Recompute and check every certificate condition from scratch:
/// antisymmetry is structural (one stored value per unordered pair), the
/// box bound, the weighted divergence against interior indicators, and the
/// sign alignment with the primal differences.
pub fn check_certificate(
    mesh: &Mesh,
    u: &Field,
    cert: &Certificate,
    s: f64,
    w: &WeightTable,
    tol: f64,
) -> Result<CertificateReport> {
    w.check_alpha(s, 1.0)?;
    u.check_shape(mesh)?;
    let sys = EdgeSys::build(mesh, &u.exterior, w);
    if sys.pairs != cert.pairs || cert.z.len() != sys.pairs.len() {
        return Err(Error::ShapeMismatch(
            "certificate pair list does not match the mesh".into(),
        ));
    }
    let worst_bound = cert
        .z
        .iter()
        .fold(0.0f64, |m, z| m.max(z.abs() - 1.0))
        .max(0.0);
    let bal = sys.balance(&cert.z);
    let worst_balance = bal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst_complementarity = sys.complementarity(&u.interior, &cert.z);
    let pass = worst_bound <= tol && worst_balance <= tol && worst_complementarity <= tol;
    Ok(CertificateReport { pass, worst_balance, worst_complementarity, worst_bound })
}

/// Stationarity residual of the smooth problem: the max-norm of the
/// discrete p-Laplacian, i.e. the worst interior-indicator pairing.
pub fn weak_residual_p(mesh: &Mesh, u: &Field, s: f64, p: f64, w: &WeightTable) -> Result<f64> {
    let g = crate::solver_smooth::plap_apply(mesh, u, s, p, w)?;
    Ok(g.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Worst renormalized difference of `u` against the competitor list:
/// nonpositive (up to tolerance) exactly when `u` is minimal against every
/// listed competitor. The signed value is reported.
pub fn minimality_gap(
    mesh: &Mesh,
    u: &Field,
    competitors: &[Field],
    s: f64,
    w: &WeightTable,
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for v in competitors {
        let d = renormalized_diff(mesh, u, v, s, w)?;
        worst = worst.max(d);
    }
    if competitors.is_empty() {
        worst = 0.0;
    }
    Ok(worst)
}

/// The operational competitor family: every indicator field on small
/// meshes (or level-set indicators of `u` on larger ones), value-quantized
/// fields on a five-level grid spanning the exterior range, and random
/// bounded fields. All competitors share `u`'s exterior.
pub fn competitor_family(
    mesh: &Mesh,
    u: &Field,
    rng: &mut rand_chacha::ChaCha8Rng,
    n_random: usize,
) -> Vec<Field> {
    use rand::Rng;
    let n = mesh.n_interior;
    let mut fam = Vec::new();
    let (flo, fhi) = exterior_range(mesh, u);
    if n <= 10 {
        for mask in 0..(1usize << n) {
            fam.push(Field {
                interior: (0..n).map(|i| ((mask >> i) & 1) as f64).collect(),
                exterior: u.exterior.clone(),
            });
        }
        // five quantization levels, random level assignments
        let levels: Vec<f64> =
            (0..5).map(|k| flo + (fhi - flo) * k as f64 / 4.0).collect();
        for _ in 0..1000 {
            fam.push(Field {
                interior: (0..n).map(|_| levels[rng.gen_range(0..5)]).collect(),
                exterior: u.exterior.clone(),
            });
        }
    } else {
        // level-set indicators of u itself
        let mut vals = u.interior.clone();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        for pair in vals.windows(2) {
            let lam = 0.5 * (pair[0] + pair[1]);
            fam.push(Field {
                interior: u.interior.iter().map(|&v| if v >= lam { 1.0 } else { 0.0 }).collect(),
                exterior: u.exterior.clone(),
            });
        }
    }
    let amp = flo.abs().max(fhi.abs()).max(1.0);
    for _ in 0..n_random {
        fam.push(Field {
            interior: (0..n).map(|_| rng.gen_range(-amp..=amp)).collect(),
            exterior: u.exterior.clone(),
        });
    }
    // truncations and local perturbations of u
    for m in [0.25, 0.5, 0.75, 1.0] {
        fam.push(crate::domain::truncate_field(u, m * amp));
    }
    for _ in 0..200 {
        let mut v = u.clone();
        let i = rng.gen_range(0..n);
        v.interior[i] += rng.gen_range(-0.5..0.5) * amp;
        fam.push(v);
    }
    fam
}

fn exterior_range(mesh: &Mesh, u: &Field) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in u.exterior.window_left.iter().chain(&u.exterior.window_right) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if mesh.far_region() == crate::domain::FarRegion::Unbounded {
        let (l, r) = u.far_values();
        lo = lo.min(l).min(r);
        hi = hi.max(l).max(r);
    }
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
