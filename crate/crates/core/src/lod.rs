//! Coarse LOD systems: the symmetric Galerkin method, the streamed
//! Petrov–Galerkin variant and the boundary value pipeline.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DVector;

use crate::correctors::{
    compute_corrections_with_source, sweep_patches, CorrectorOptions, CorrectorSetup, PatchStats,
    SourceSpec,
};
use crate::error::{invalid, LodError, Result};
use crate::fem::{
    dirichlet_extension, load_from_samples, neumann_from_samples, sample_midpoints, sample_neumann,
    AssembledForms, CoefficientField,
};
use crate::grid::{BoundarySpec, Level, TwoScaleMesh};
use crate::sparse::{norm2, spd_factorize, SparseMatrix, TripletBuilder};

/// Relative residual accepted from the direct solves.
pub const SOLVE_TOL: f64 = 1e-10;

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum RhsMode {
    /// `B P f_h`: test with the uncorrected coarse basis.
    Plain,
    /// `B (P + Q) f_h`.
    Corrected,
}

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    /// Only the Dirichlet lift is corrected.
    Boundary,
    /// Volume, lift and flux data are all corrected.
    Total,
}

/// `B A B + (I − B)` for a 0/1 mask `B`.
pub fn mask_with_unit_diagonal(a: &SparseMatrix, mask: &[f64]) -> SparseMatrix {
    let unit: Vec<f64> = mask.iter().map(|b| 1.0 - b).collect();
    a.scale_rows_cols(mask, mask)
        .add(&SparseMatrix::diagonal(&unit))
}

fn masked(v: Vec<f64>, mask: &[f64]) -> Vec<f64> {
    v.into_iter().zip(mask).map(|(x, b)| x * b).collect()
}

/// `B (P + Q) A (P + Q)ᵀ B` with unit diagonal on masked rows.
pub fn assemble_lod(
    a_h: &SparseMatrix,
    p_h: &SparseMatrix,
    q_h: &SparseMatrix,
    b_coarse: &[f64],
) -> SparseMatrix {
    let basis = p_h.add(q_h);
    let a = basis.matmul(a_h).matmul(&basis.transpose());
    mask_with_unit_diagonal(&a, b_coarse)
}

pub fn lod_rhs(f_h: &[f64], p_h: &SparseMatrix, q_h: &SparseMatrix, b_coarse: &[f64]) -> Vec<f64> {
    let mut f = p_h.matvec(f_h);
    for (x, y) in f.iter_mut().zip(q_h.matvec(f_h)) {
        *x += y;
    }
    masked(f, b_coarse)
}

pub fn plain_rhs(f_h: &[f64], p_h: &SparseMatrix, b_coarse: &[f64]) -> Vec<f64> {
    masked(p_h.matvec(f_h), b_coarse)
}

#[derive(Clone, Debug)]
pub struct LodSystem {
    pub a_lod: SparseMatrix,
    pub f_lod: Vec<f64>,
    /// `P_h + Q_h`.
    pub basis: SparseMatrix,
}

impl LodSystem {
    pub fn new(
        a_h: &SparseMatrix,
        forms: &AssembledForms,
        q_h: &SparseMatrix,
        f_h: &[f64],
        rhs: RhsMode,
    ) -> Self {
        let a_lod = assemble_lod(a_h, &forms.p_h, q_h, &forms.b_coarse);
        let f_lod = match rhs {
            RhsMode::Corrected => lod_rhs(f_h, &forms.p_h, q_h, &forms.b_coarse),
            RhsMode::Plain => plain_rhs(f_h, &forms.p_h, &forms.b_coarse),
        };
        Self {
            a_lod,
            f_lod,
            basis: forms.p_h.add(q_h),
        }
    }
}

fn spd_solve(a: &SparseMatrix, f: &[f64]) -> Result<Vec<f64>> {
    let u = spd_factorize(a)?.solve(f);
    let r: Vec<f64> = a.matvec(&u).iter().zip(f).map(|(x, y)| x - y).collect();
    let (rn, fnorm) = (norm2(&r), norm2(f));
    if rn > SOLVE_TOL * fnorm.max(f64::MIN_POSITIVE) && rn > 0.0 {
        return Err(LodError::Solver(format!(
            "direct solve residual {rn:.3e} exceeds tolerance"
        )));
    }
    Ok(u)
}

/// Returns `(u_H, (P + Q)ᵀ u_H)`.
pub fn solve_lod(system: &LodSystem) -> Result<(Vec<f64>, Vec<f64>)> {
    let u_coarse = spd_solve(&system.a_lod, &system.f_lod)?;
    let u_fine = system.basis.matvec_transpose(&u_coarse);
    Ok((u_coarse, u_fine))
}

/// Fine FEM solution with homogeneous Dirichlet values for load `f_h`.
pub fn fine_solve(a_h: &SparseMatrix, b_fine: &[f64], f_h: &[f64]) -> Result<Vec<f64>> {
    let a = mask_with_unit_diagonal(a_h, b_fine);
    let f: Vec<f64> = f_h.iter().zip(b_fine).map(|(x, b)| x * b).collect();
    spd_solve(&a, &f)
}

#[derive(Clone, Debug)]
pub struct PgSolution {
    pub u_coarse: Vec<f64>,
    pub a_pg: SparseMatrix,
    pub stats: Vec<PatchStats>,
}

impl PgSolution {
    pub fn symmetrized(&self) -> SparseMatrix {
        self.a_pg.add_scaled(0.5, &self.a_pg.transpose(), 0.5)
    }
}

/// Petrov–Galerkin LOD. Each patch corrector is contracted into `A_pg`
/// as soon as it is computed; `Q_h` is never stored.
pub fn pg_assemble_and_solve(
    setup: &CorrectorSetup<'_>,
    k: usize,
    f_h: &[f64],
    rhs: RhsMode,
    opts: &CorrectorOptions,
) -> Result<PgSolution> {
    let mesh = setup.mesh;
    let forms = setup.forms;
    let n_coarse = mesh.n_nodes(Level::Coarse);
    if f_h.len() != mesh.n_nodes(Level::Fine) {
        return invalid("load vector length does not match the fine mesh");
    }
    let pt = forms.p_h.transpose();
    let mut triplets = TripletBuilder::new(n_coarse, n_coarse);
    let mut f = forms.p_h.matvec(f_h);
    let mut stats = Vec::new();
    sweep_patches(setup, k, opts, None, |o| {
        for (i, &p) in o.patch.element_coarse_nodes.iter().enumerate() {
            if forms.b_coarse[p] == 0.0 {
                continue;
            }
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for t in mesh.fine_cells_in_coarse(o.patch.ell) {
                let nodes = mesh.cell_nodes(Level::Fine, t);
                let phi: Vec<f64> = nodes.iter().map(|&n| forms.p_h.get(p, n)).collect();
                let e = setup.block(t);
                for a in 0..4 {
                    *acc.entry(nodes[a]).or_default() +=
                        (0..4).map(|b| e[a][b] * phi[b]).sum::<f64>();
                }
            }
            if let Some(w) = &o.rows[i] {
                for (&node, &wl) in o.patch.active_fine_nodes.iter().zip(w) {
                    let (cols, vals) = setup.energy.row(node);
                    for (&c, &v) in cols.iter().zip(vals) {
                        *acc.entry(c).or_default() += v * wl;
                    }
                    if rhs == RhsMode::Corrected {
                        f[p] += wl * f_h[node];
                    }
                }
            }
            for (n, v) in acc {
                let (ms, ps) = pt.row(n);
                for (&m, &pv) in ms.iter().zip(ps) {
                    triplets.push(m, p, pv * v);
                }
            }
        }
        stats.push(o.stats);
        Ok(())
    })?;
    let a_pg = mask_with_unit_diagonal(&triplets.build(), &forms.b_coarse);
    let f = masked(f, &forms.b_coarse);
    let dense = a_pg.to_dense();
    let u = dense.clone().lu().solve(&DVector::from_vec(f.clone()));
    let u = match u {
        Some(u) if u.iter().all(|v| v.is_finite()) => u,
        _ => {
            let sym = (&dense + dense.transpose()) * 0.5;
            let min = nalgebra::SymmetricEigen::new(sym).eigenvalues.min();
            return Err(LodError::Solver(format!(
                "Petrov-Galerkin system is singular; smallest eigenvalue of its symmetric part is {min:.3e}"
            )));
        }
    };
    let r = &dense * &u - DVector::from_vec(f.clone());
    if r.norm() > 1e-8 * DVector::from_vec(f).norm().max(f64::MIN_POSITIVE) {
        return Err(LodError::Solver(format!(
            "Petrov-Galerkin residual {:.3e} too large",
            r.norm()
        )));
    }
    Ok(PgSolution {
        u_coarse: u.as_slice().to_vec(),
        a_pg,
        stats,
    })
}

/// Discrete data of a boundary value problem on the fine mesh.
#[derive(Clone, Debug)]
pub struct BvpData {
    /// Volume source sampled at fine cell midpoints.
    pub f: Vec<f64>,
    /// Dirichlet data sampled at the coarse nodes; the fine lift follows.
    pub g_coarse: Vec<f64>,
    pub g_fine: Vec<f64>,
    /// Flux samples per boundary edge.
    pub q: Vec<f64>,
}

impl BvpData {
    pub fn from_functions(
        mesh: &TwoScaleMesh,
        bc: &BoundarySpec,
        f: impl Fn(f64, f64) -> f64,
        g: impl Fn(f64, f64) -> f64,
        q: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let (g_coarse, g_fine) = dirichlet_extension(mesh, g, bc);
        Self {
            f: sample_midpoints(mesh, f),
            g_coarse,
            g_fine,
            q: sample_neumann(mesh, q, bc),
        }
    }

    /// Full load `∫fφ_j + ∫_{Γ_N}qφ_j − a(g_h, φ_j)`.
    pub fn total_load(
        &self,
        mesh: &TwoScaleMesh,
        bc: &BoundarySpec,
        a_h: &SparseMatrix,
    ) -> Result<Vec<f64>> {
        let mut f = load_from_samples(mesh, &self.f)?;
        let neu = neumann_from_samples(mesh, &self.q, bc)?;
        let ag = a_h.matvec(&self.g_fine);
        for ((x, n), a) in f.iter_mut().zip(neu).zip(ag) {
            *x += n - a;
        }
        Ok(f)
    }

    pub fn source(&self, mode: SourceMode) -> SourceSpec {
        let eta2 = Some(self.g_fine.iter().map(|g| -g).collect());
        match mode {
            SourceMode::Boundary => SourceSpec {
                eta1: None,
                eta2,
                eta3: None,
            },
            SourceMode::Total => SourceSpec {
                eta1: Some(self.f.clone()),
                eta2,
                eta3: Some(self.q.clone()),
            },
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BvpOptions {
    pub k: usize,
    pub rhs: RhsMode,
    /// `None` disables source correctors.
    pub source: Option<SourceMode>,
    pub correctors: CorrectorOptions,
}

impl BvpOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            rhs: RhsMode::Corrected,
            source: Some(SourceMode::Boundary),
            correctors: CorrectorOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BvpSolution {
    /// Physical fine solution, Dirichlet values included.
    pub u: Vec<f64>,
    pub u_coarse: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub stats: Vec<PatchStats>,
}

/// Symmetric LOD for `−∇·κ∇u = f`, `u = g` on Dirichlet sides and
/// `κ∂_n u = q` on Neumann sides.
pub fn solve_bvp(
    mesh: &TwoScaleMesh,
    bc: &BoundarySpec,
    kappa: &CoefficientField,
    data: &BvpData,
    opts: &BvpOptions,
) -> Result<BvpSolution> {
    let forms = AssembledForms::new(mesh, bc, kappa, None)?;
    solve_bvp_with_forms(mesh, bc, &forms, data, opts)
}

pub fn solve_bvp_with_forms(
    mesh: &TwoScaleMesh,
    bc: &BoundarySpec,
    forms: &AssembledForms,
    data: &BvpData,
    opts: &BvpOptions,
) -> Result<BvpSolution> {
    let setup = CorrectorSetup {
        mesh,
        bc,
        forms,
        energy: &forms.a_h,
        with_potential: false,
    };
    let spec = opts.source.map(|m| data.source(m));
    let (q, sc) = compute_corrections_with_source(&setup, opts.k, &opts.correctors, spec.as_ref())?;
    let q_hat = sc.map_or_else(|| vec![0.0; mesh.n_nodes(Level::Fine)], |s| s.q_hat);
    let mut f = data.total_load(mesh, bc, &forms.a_h)?;
    for (x, y) in f.iter_mut().zip(forms.a_h.matvec(&q_hat)) {
        *x += y;
    }
    let system = LodSystem::new(&forms.a_h, forms, &q.q, &f, opts.rhs);
    let (u_coarse, mut u) = solve_lod(&system)?;
    for ((x, qh), g) in u.iter_mut().zip(&q_hat).zip(&data.g_fine) {
        *x += g - qh;
    }
    Ok(BvpSolution {
        u,
        u_coarse,
        q_hat,
        stats: q.stats,
    })
}

/// Fine FEM reference for the same data, Dirichlet values included.
pub fn fine_reference(
    mesh: &TwoScaleMesh,
    bc: &BoundarySpec,
    forms: &AssembledForms,
    data: &BvpData,
) -> Result<Vec<f64>> {
    let f = data.total_load(mesh, bc, &forms.a_h)?;
    let mut u = fine_solve(&forms.a_h, &forms.b_fine, &f)?;
    for (x, g) in u.iter_mut().zip(&data.g_fine) {
        *x += g;
    }
    Ok(u)
}

/// One value per line.
pub fn write_vector<W: Write>(mut w: W, v: &[f64]) -> Result<()> {
    for x in v {
        writeln!(w, "{x:.16e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correctors::compute_corrections;
    use crate::fem::{galerkin, interpolate, load_vector};
    use crate::grid::{BcKind, DomainRect};
    use crate::sparse::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rough(mesh: &TwoScaleMesh, seed: u64) -> CoefficientField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CoefficientField::new(
            (0..mesh.n_cells(Level::Fine))
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { 10.0 })
                .collect(),
        )
        .unwrap()
    }

    fn setup_of<'a>(
        mesh: &'a TwoScaleMesh,
        bc: &'a BoundarySpec,
        forms: &'a AssembledForms,
    ) -> CorrectorSetup<'a> {
        CorrectorSetup {
            mesh,
            bc,
            forms,
            energy: &forms.a_h,
            with_potential: false,
        }
    }

    #[test]
    fn zero_correctors_give_coarse_galerkin() {
        let mesh = TwoScaleMesh::new(DomainRect::unit_square(), (4, 4), 3).unwrap();
        let bc = BoundarySpec::all_dirichlet();
        let forms = AssembledForms::new(&mesh, &bc, &rough(&mesh, 1), None).unwrap();
        let zero = SparseMatrix::zeros(mesh.n_nodes(Level::Coarse), mesh.n_nodes(Level::Fine));
        let a = assemble_lod(&forms.a_h, &forms.p_h, &zero, &forms.b_coarse);
        let g = mask_with_unit_diagonal(&galerkin(&forms.p_h, &forms.a_h), &forms.b_coarse);
        assert!(a.add_scaled(1.0, &g, -1.0).max_abs() < 1e-12);
        let f = vec![0.0; mesh.n_nodes(Level::Fine)];
        assert!(lod_rhs(&f, &forms.p_h, &zero, &forms.b_coarse)
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn full_patches_reproduce_fine_solution_coarsely() {
        let mesh = TwoScaleMesh::new(DomainRect::unit_square(), (4, 4), 4).unwrap();
        let bc = BoundarySpec::all_dirichlet();
        let forms = AssembledForms::new(&mesh, &bc, &rough(&mesh, 2), None).unwrap();
        let q = compute_corrections(
            &setup_of(&mesh, &bc, &forms),
            4,
            &CorrectorOptions::default(),
        )
        .unwrap()
        .q;
        let f_h = load_vector(&mesh, |x, y| (3.0 * x).sin() + y);
        let system = LodSystem::new(&forms.a_h, &forms, &q, &f_h, RhsMode::Corrected);
        assert!(system.a_lod.asymmetry() <= 1e-12 * system.a_lod.max_abs());
        let (u_coarse, u_lod) = solve_lod(&system).unwrap();
        let u_fem = fine_solve(&forms.a_h, &forms.b_fine, &f_h).unwrap();
        let err: Vec<f64> = u_fem.iter().zip(&u_lod).map(|(a, b)| a - b).collect();
        let ce = forms.c_h.matvec(&err);
        let scale = crate::sparse::norm_inf(&u_fem);
        assert!(ce
            .iter()
            .zip(&forms.b_coarse)
            .all(|(v, b)| (v * b).abs() <= 1e-8 * scale));
        // Galerkin orthogonality against every corrected basis function.
        let ae = forms.a_h.matvec(&err);
        let basis = forms.p_h.add(&q);
        let resid = basis.matvec(&ae);
        let norm = forms.a_h.bilinear(&u_fem, &u_fem).sqrt();
        assert!(resid
            .iter()
            .zip(&forms.b_coarse)
            .all(|(r, b)| (r * b).abs() <= 1e-8 * norm));
        // Energy minimality of the corrected basis.
        let plain = mask_with_unit_diagonal(&galerkin(&forms.p_h, &forms.a_h), &forms.b_coarse);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x: Vec<f64> = forms
                .b_coarse
                .iter()
                .map(|b| b * rng.random_range(-1.0..1.0))
                .collect();
            assert!(system.a_lod.bilinear(&x, &x) <= plain.bilinear(&x, &x) * (1.0 + 1e-12));
        }
        // Petrov–Galerkin coincides at full patches.
        let pg = pg_assemble_and_solve(
            &setup_of(&mesh, &bc, &forms),
            4,
            &f_h,
            RhsMode::Corrected,
            &CorrectorOptions::default(),
        )
        .unwrap();
        assert!(pg.a_pg.add_scaled(1.0, &system.a_lod, -1.0).max_abs() < 1e-9);
        assert!(pg
            .u_coarse
            .iter()
            .zip(&u_coarse)
            .all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn refine_one_equals_fine_fem() {
        let mesh = TwoScaleMesh::new(DomainRect::unit_square(), (6, 6), 1).unwrap();
        let bc = BoundarySpec::new(
            BcKind::Dirichlet,
            BcKind::Neumann,
            BcKind::Dirichlet,
            BcKind::Neumann,
        )
        .unwrap();
        let kappa = rough(&mesh, 4);
        let forms = AssembledForms::new(&mesh, &bc, &kappa, None).unwrap();
        let data = BvpData::from_functions(&mesh, &bc, |x, y| x * y + 1.0, |x, y| x - y, |x, _| x);
        let reference = fine_reference(&mesh, &bc, &forms, &data).unwrap();
        for mode in [SourceMode::Boundary, SourceMode::Total] {
            let opts = BvpOptions {
                source: Some(mode),
                ..BvpOptions::new(1)
            };
            let sol = solve_bvp(&mesh, &bc, &kappa, &data, &opts).unwrap();
            assert!(sol
                .u
                .iter()
                .zip(&reference)
                .all(|(a, b)| (a - b).abs() < 1e-10));
        }
        let f_h = load_vector(&mesh, |x, _| x);
        let pg = pg_assemble_and_solve(
            &setup_of(&mesh, &bc, &forms),
            1,
            &f_h,
            RhsMode::Plain,
            &CorrectorOptions::default(),
        )
        .unwrap();
        let fem = fine_solve(&forms.a_h, &forms.b_fine, &f_h).unwrap();
        assert!(pg
            .u_coarse
            .iter()
            .zip(&fem)
            .all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn homogeneous_bvp_matches_plain_solve() {
        let mesh = TwoScaleMesh::new(DomainRect::unit_square(), (4, 4), 2).unwrap();
        let bc = BoundarySpec::all_dirichlet();
        let kappa = rough(&mesh, 5);
        let forms = AssembledForms::new(&mesh, &bc, &kappa, None).unwrap();
        let data = BvpData::from_functions(&mesh, &bc, |x, _| 1.0 + x, |_, _| 0.0, |_, _| 0.0);
        let sol = solve_bvp(&mesh, &bc, &kappa, &data, &BvpOptions::new(1)).unwrap();
        assert!(sol.q_hat.iter().all(|&v| v == 0.0));
        let q = compute_corrections(
            &setup_of(&mesh, &bc, &forms),
            1,
            &CorrectorOptions::default(),
        )
        .unwrap()
        .q;
        let f_h = load_from_samples(&mesh, &data.f).unwrap();
        let (_, u) = solve_lod(&LodSystem::new(
            &forms.a_h,
            &forms,
            &q,
            &f_h,
            RhsMode::Corrected,
        ))
        .unwrap();
        assert_eq!(sol.u, u);
        let zero = BvpData::from_functions(&mesh, &bc, |_, _| 0.0, |_, _| 0.0, |_, _| 0.0);
        let sol = solve_bvp(&mesh, &bc, &kappa, &zero, &BvpOptions::new(1)).unwrap();
        assert!(sol.u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn manufactured_bilinear_solution() {
        let mesh = TwoScaleMesh::new(DomainRect::unit_square(), (3, 3), 3).unwrap();
        let kappa = CoefficientField::constant(&mesh, 1.0).unwrap();
        let exact = |x: f64, y: f64| 1.0 + 2.0 * x - y + 3.0 * x * y;
        let bc = BoundarySpec::all_dirichlet();
        let data = BvpData::from_functions(&mesh, &bc, |_, _| 0.0, exact, |_, _| 0.0);
        let target = interpolate(&mesh, Level::Fine, exact);
        for mode in [SourceMode::Boundary, SourceMode::Total] {
            let opts = BvpOptions {
                source: Some(mode),
                ..BvpOptions::new(3)
            };
            let sol = solve_bvp(&mesh, &bc, &kappa, &data, &opts).unwrap();
            assert!(
                sol.u.iter().zip(&target).all(|(a, b)| (a - b).abs() < 1e-8),
                "{mode:?}"
            );
        }
        // Mixed conditions with a linear solution and matching flux.
        let bc = BoundarySpec::new(
            BcKind::Dirichlet,
            BcKind::Neumann,
            BcKind::Dirichlet,
            BcKind::Neumann,
        )
        .unwrap();
        let lin = |x: f64, y: f64| 0.5 + 2.0 * x - y;
        let flux = |x: f64, y: f64| {
            if (x - 1.0).abs() < 1e-12 {
                2.0
            } else if (y - 1.0).abs() < 1e-12 {
                -1.0
            } else {
                0.0
            }
        };
        let data = BvpData::from_functions(&mesh, &bc, |_, _| 0.0, lin, flux);
        let target = interpolate(&mesh, Level::Fine, lin);
        let opts = BvpOptions {
            source: Some(SourceMode::Total),
            ..BvpOptions::new(3)
        };
        let sol = solve_bvp(&mesh, &bc, &kappa, &data, &opts).unwrap();
        assert!(sol.u.iter().zip(&target).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn rhs_with_unit_load_integrates_corrected_basis() {
        let mesh = TwoScaleMesh::new(DomainRect::unit_square(), (4, 4), 2).unwrap();
        let bc = BoundarySpec::all_dirichlet();
        let forms = AssembledForms::new(&mesh, &bc, &rough(&mesh, 6), None).unwrap();
        let q = compute_corrections(
            &setup_of(&mesh, &bc, &forms),
            1,
            &CorrectorOptions::default(),
        )
        .unwrap()
        .q;
        let ones = vec![1.0; mesh.n_nodes(Level::Fine)];
        let f_h = forms.m_h.matvec(&ones);
        let rhs = lod_rhs(&f_h, &forms.p_h, &q, &forms.b_coarse);
        let basis = forms.p_h.add(&q);
        for i in 0..mesh.n_nodes(Level::Coarse) {
            let (cols, vals) = basis.row(i);
            let mut row = vec![0.0; mesh.n_nodes(Level::Fine)];
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
            let integral = dot(&forms.m_h.matvec(&row), &ones);
            assert!((rhs[i] - forms.b_coarse[i] * integral).abs() < 1e-13);
        }
    }

    #[test]
    fn pg_asymmetry_shrinks_with_layers() {
        let mesh = TwoScaleMesh::new(DomainRect::unit_square(), (8, 8), 2).unwrap();
        let bc = BoundarySpec::all_dirichlet();
        let forms = AssembledForms::new(&mesh, &bc, &rough(&mesh, 8), None).unwrap();
        let f_h = load_vector(&mesh, |_, _| 1.0);
        let setup = setup_of(&mesh, &bc, &forms);
        let opts = CorrectorOptions::default();
        let a1 = pg_assemble_and_solve(&setup, 1, &f_h, RhsMode::Plain, &opts)
            .unwrap()
            .a_pg
            .asymmetry();
        let a2 = pg_assemble_and_solve(&setup, 2, &f_h, RhsMode::Plain, &opts)
            .unwrap()
            .a_pg
            .asymmetry();
        assert!(a2 < a1);
    }

    #[test]
    fn vector_output_roundtrips() {
        let v = vec![1.0, -2.5e-7, std::f64::consts::PI];
        let mut buf = Vec::new();
        write_vector(&mut buf, &v).unwrap();
        let parsed: Vec<f64> = String::from_utf8(buf)
            .unwrap()
            .lines()
            .map(|l| l.parse().unwrap())
            .collect();
        assert_eq!(parsed, v);
    }
}
