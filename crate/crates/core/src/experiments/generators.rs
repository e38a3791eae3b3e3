use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::fem::{CoefficientField, PotentialField};
use crate::grid::{Level, TwoScaleMesh};
use crate::sparse::SparseMatrix;

/// Per fine cell values drawn i.i.d. from `{1, contrast}` with probability ½.
pub fn gen_checkerboard_kappa(
    mesh: &TwoScaleMesh,
    seed: u64,
    contrast: f64,
) -> Result<CoefficientField> {
    if !(contrast >= 1.0) {
        return invalid("contrast must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..mesh.n_cells(Level::Fine))
        .map(|_| if rng.random_bool(0.5) { contrast } else { 1.0 })
        .collect();
    CoefficientField::new(values)
}

/// `γ·1{cos(πk(x+0.1))·cos(πk y) > 0}` at fine cell midpoints.
pub fn gen_kronig_penney_v(mesh: &TwoScaleMesh, gamma: f64, wave_k: f64) -> Result<PotentialField> {
    if !(gamma >= 0.0) {
        return invalid("gamma must be nonnegative");
    }
    let pi = std::f64::consts::PI;
    let values = (0..mesh.n_cells(Level::Fine))
        .map(|t| {
            let (x, y) = mesh.cell_midpoint(Level::Fine, t);
            let v = (pi * wave_k * (x + 0.1)).cos() * (pi * wave_k * y).cos();
            if v > 0.0 {
                gamma
            } else {
                0.0
            }
        })
        .collect();
    PotentialField::new(values)
}

/// `scale·|x − c|²` at fine cell midpoints, `c` the domain center.
pub fn gen_harmonic_v(mesh: &TwoScaleMesh, scale: f64) -> Result<PotentialField> {
    if !(scale >= 0.0) {
        return invalid("potential scale must be nonnegative");
    }
    let d = mesh.domain;
    let (cx, cy) = (0.5 * (d.x0 + d.x1), 0.5 * (d.y0 + d.y1));
    let values = (0..mesh.n_cells(Level::Fine))
        .map(|t| {
            let (x, y) = mesh.cell_midpoint(Level::Fine, t);
            scale * ((x - cx).powi(2) + (y - cy).powi(2))
        })
        .collect();
    PotentialField::new(values)
}

/// `(‖e‖_{L²}, ‖e‖_{H¹})` for `e = u − v`, with `a_unit` the `κ ≡ 1` stiffness.
pub fn error_norms(
    u: &[f64],
    v: &[f64],
    m_h: &SparseMatrix,
    a_unit: &SparseMatrix,
) -> Result<(f64, f64)> {
    if u.len() != v.len() || u.len() != m_h.nrows() || a_unit.nrows() != m_h.nrows() {
        return invalid("error norm operands have mismatched lengths");
    }
    let e: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let l2 = m_h.bilinear(&e, &e).max(0.0);
    let h1 = l2 + a_unit.bilinear(&e, &e).max(0.0);
    Ok((l2.sqrt(), h1.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{mass_matrix, stiffness_matrix};
    use crate::grid::DomainRect;
    use rand::Rng;

    fn mesh(n: usize) -> TwoScaleMesh {
        TwoScaleMesh::new(DomainRect::unit_square(), (n, n), 1).unwrap()
    }

    #[test]
    fn checkerboard_properties() {
        let m = mesh(64);
        assert!(gen_checkerboard_kappa(&m, 3, 1.0)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 1.0));
        let a = gen_checkerboard_kappa(&m, 7, 100.0).unwrap();
        let b = gen_checkerboard_kappa(&m, 7, 100.0).unwrap();
        assert_eq!(a.values(), b.values());
        let high =
            a.values().iter().filter(|&&v| v == 100.0).count() as f64 / a.values().len() as f64;
        assert!((0.45..=0.55).contains(&high));
        assert!(a.values().iter().all(|&v| v == 1.0 || v == 100.0));
        assert!(gen_checkerboard_kappa(&m, 7, 0.5).is_err());
    }

    #[test]
    fn kronig_penney_values() {
        let m =
            TwoScaleMesh::new(DomainRect::new(0.0, 0.0, 2.0, 3.0).unwrap(), (64, 96), 1).unwrap();
        assert!(gen_kronig_penney_v(&m, 0.0, 8.0).unwrap().is_zero());
        let v = gen_kronig_penney_v(&m, 2e4, 8.0).unwrap();
        let pi = std::f64::consts::PI;
        for t in 0..m.n_cells(Level::Fine) {
            let (x, y) = m.cell_midpoint(Level::Fine, t);
            let c = (pi * 8.0 * (x + 0.1)).cos() * (pi * 8.0 * y).cos();
            let expect = if c > 0.0 { c.ceil() * 2e4 } else { 0.0 };
            assert_eq!(v.values()[t], expect);
        }
    }

    #[test]
    fn error_norm_examples() {
        let m = TwoScaleMesh::new(DomainRect::new(0.0, 0.0, 2.0, 1.0).unwrap(), (8, 4), 1).unwrap();
        let mh = mass_matrix(&m);
        let a = stiffness_matrix(&m, &CoefficientField::constant(&m, 1.0).unwrap()).unwrap();
        let n = m.n_nodes(Level::Fine);
        let u: Vec<f64> = (0..n).map(|i| i as f64).collect();
        assert_eq!(error_norms(&u, &u, &mh, &a).unwrap(), (0.0, 0.0));
        let zero = vec![0.0; n];
        let (l2, h1) = error_norms(&vec![1.0; n], &zero, &mh, &a).unwrap();
        assert!((l2 - 2f64.sqrt()).abs() < 1e-14 && (h1 - l2).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (l2, h1) = error_norms(&r, &zero, &mh, &a).unwrap();
        assert!(h1 >= l2);
        assert!(error_norms(&r[1..], &zero, &mh, &a).is_err());
    }
}
