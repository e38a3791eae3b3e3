//! LOD eigenvalue solvers: linear eigenproblems, two-grid post-processing
//! and the optimal damping iteration for the Gross–Pitaevskii ground state.

use crate::correctors::{compute_corrections, CorrectorOptions, CorrectorSetup, PatchStats};
use crate::error::{invalid, Result};
use crate::fem::{
    assemble_weighted_mass, cubic_load, quartic_integral, AssembledForms, CoefficientField,
    PotentialField, Weight,
};
use crate::grid::{BoundarySpec, Level, TwoScaleMesh};
use crate::lod::fine_solve;
use crate::sparse::{dot, generalized_eig_smallest, EigOptions, EigenPairs, SparseMatrix};

/// `B (P + Q) M (P + Q)ᵀ B`.
pub fn lod_mass(
    m_h: &SparseMatrix,
    p_h: &SparseMatrix,
    q_h: &SparseMatrix,
    b_coarse: &[f64],
) -> SparseMatrix {
    let basis = p_h.add(q_h);
    basis
        .matmul(m_h)
        .matmul(&basis.transpose())
        .scale_rows_cols(b_coarse, b_coarse)
}

/// Indices `i` with `mask[i] = 1`.
pub fn active_indices(mask: &[f64]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, &b)| b == 1.0)
        .map(|(i, _)| i)
        .collect()
}

/// Corrected coarse basis restricted to the non-Dirichlet coarse nodes.
#[derive(Clone, Debug)]
pub struct LodSpace {
    pub n_coarse: usize,
    pub active: Vec<usize>,
    /// Rows `(P + Q)[active]`.
    pub basis: SparseMatrix,
    pub stats: Vec<PatchStats>,
}

impl LodSpace {
    /// Correctors are computed in the energy form `A_h + M_{V,h}`.
    pub fn new(
        mesh: &TwoScaleMesh,
        bc: &BoundarySpec,
        forms: &AssembledForms,
        k: usize,
        opts: &CorrectorOptions,
    ) -> Result<Self> {
        let energy = forms.energy();
        let setup = CorrectorSetup {
            mesh,
            bc,
            forms,
            energy: &energy,
            with_potential: true,
        };
        let q = compute_corrections(&setup, k, opts)?;
        let active = active_indices(&forms.b_coarse);
        let all: Vec<usize> = (0..mesh.n_nodes(Level::Fine)).collect();
        let basis = forms.p_h.add(&q.q).gather_submatrix(&active, &all)?;
        Ok(Self {
            n_coarse: mesh.n_nodes(Level::Coarse),
            active,
            basis,
            stats: q.stats,
        })
    }

    pub fn dim(&self) -> usize {
        self.active.len()
    }

    /// Galerkin projection of a fine matrix onto the space.
    pub fn project(&self, a: &SparseMatrix) -> SparseMatrix {
        self.basis.matmul(a).matmul(&self.basis.transpose())
    }

    /// Fine coefficients of the function with active coefficients `x`.
    pub fn prolong(&self, x: &[f64]) -> Vec<f64> {
        self.basis.matvec_transpose(x)
    }

    /// Coarse nodal vector with zeros on Dirichlet nodes.
    pub fn scatter(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_coarse];
        for (&i, &v) in self.active.iter().zip(x) {
            out[i] = v;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormTag {
    /// Coarse coefficients normalized in `M_lod`, which equals the fine
    /// `L²` norm of the prolonged vector.
    LodMass,
    FineMass,
}

#[derive(Clone, Debug)]
pub struct EigResult {
    pub lambdas: Vec<f64>,
    /// Coarse nodal vectors (`N_H`); empty for fine-only results.
    pub coarse: Vec<Vec<f64>>,
    /// Fine nodal vectors (`N_h`), `M_h`-normalized.
    pub fine: Vec<Vec<f64>>,
    pub norm: NormTag,
    pub residuals: Vec<f64>,
    pub stats: Vec<PatchStats>,
}

/// Flips `v` (and `w`) when `1ᵀ M v < 0`.
fn normalize_sign(m_h: &SparseMatrix, fine: &mut [f64], coarse: &mut [f64]) {
    let s: f64 = m_h.matvec(fine).iter().sum();
    if s < 0.0 {
        fine.iter_mut().for_each(|v| *v = -*v);
        coarse.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Smallest `n_ev` eigenpairs of `A + M_V` in the LOD space.
pub fn solve_linear_evp(
    mesh: &TwoScaleMesh,
    bc: &BoundarySpec,
    kappa: &CoefficientField,
    potential: Option<&PotentialField>,
    k: usize,
    eig: &EigOptions,
    opts: &CorrectorOptions,
) -> Result<EigResult> {
    let forms = AssembledForms::new(mesh, bc, kappa, potential)?;
    let space = LodSpace::new(mesh, bc, &forms, k, opts)?;
    solve_in_space(&forms, &space, eig)
}

pub fn solve_in_space(
    forms: &AssembledForms,
    space: &LodSpace,
    eig: &EigOptions,
) -> Result<EigResult> {
    if eig.n_ev > space.dim() {
        return invalid(format!(
            "requested {} eigenpairs from a space of dimension {}",
            eig.n_ev,
            space.dim()
        ));
    }
    let a = space.project(&forms.energy());
    let m = space.project(&forms.m_h);
    let pairs = generalized_eig_smallest(&a, &m, eig)?;
    let mut coarse = Vec::new();
    let mut fine = Vec::new();
    for x in &pairs.vectors {
        let mut u = space.prolong(x);
        let mut c = space.scatter(x);
        normalize_sign(&forms.m_h, &mut u, &mut c);
        fine.push(u);
        coarse.push(c);
    }
    Ok(EigResult {
        lambdas: pairs.lambdas,
        coarse,
        fine,
        norm: NormTag::LodMass,
        residuals: pairs.residuals,
        stats: space.stats.clone(),
    })
}

/// Fine FEM eigenpairs with homogeneous Dirichlet conditions.
pub fn fine_evp(forms: &AssembledForms, eig: &EigOptions) -> Result<EigResult> {
    let active = active_indices(&forms.b_fine);
    let a = forms.energy().gather_submatrix(&active, &active)?;
    let m = forms.m_h.gather_submatrix(&active, &active)?;
    let EigenPairs {
        lambdas,
        vectors,
        residuals,
        ..
    } = generalized_eig_smallest(&a, &m, eig)?;
    let n = forms.b_fine.len();
    let fine = vectors
        .into_iter()
        .map(|x| {
            let mut u = vec![0.0; n];
            for (&i, v) in active.iter().zip(x) {
                u[i] = v;
            }
            normalize_sign(&forms.m_h, &mut u, &mut []);
            u
        })
        .collect();
    Ok(EigResult {
        lambdas,
        coarse: Vec::new(),
        fine,
        norm: NormTag::FineMass,
        residuals,
        stats: Vec::new(),
    })
}

/// Two-grid correction: solve `A u = λ_H M u_lod` on the fine mesh and
/// return the Rayleigh quotient with `u` normalized in `M_h`.
pub fn post_process(
    lambda: f64,
    u_lod: &[f64],
    energy: &SparseMatrix,
    m_h: &SparseMatrix,
    b_fine: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let f: Vec<f64> = m_h.matvec(u_lod).iter().map(|v| lambda * v).collect();
    let mut u = fine_solve(energy, b_fine, &f)?;
    let norm = m_h.bilinear(&u, &u).sqrt();
    u.iter_mut().for_each(|v| *v /= norm);
    Ok((energy.bilinear(&u, &u), u))
}

/// `E(v) = ½ vᵀ(A + M_V)v + ¼β∫v⁴`.
pub fn energy(
    mesh: &TwoScaleMesh,
    v: &[f64],
    a_h: &SparseMatrix,
    m_v: &SparseMatrix,
    beta: f64,
) -> f64 {
    let quad = 0.5 * (a_h.bilinear(v, v) + m_v.bilinear(v, v));
    if beta == 0.0 {
        quad
    } else {
        quad + 0.25 * beta * quartic_integral(mesh, v)
    }
}

/// Matrices of the Gross–Pitaevskii problem in the LOD space.
pub struct GpeForms<'m> {
    pub mesh: &'m TwoScaleMesh,
    pub forms: AssembledForms,
    pub space: LodSpace,
    pub beta: f64,
    /// `A_h + M_{V,h}`.
    pub energy: SparseMatrix,
    b_lod: SparseMatrix,
    m_lod: SparseMatrix,
}

impl<'m> GpeForms<'m> {
    pub fn new(
        mesh: &'m TwoScaleMesh,
        bc: &BoundarySpec,
        kappa: &CoefficientField,
        potential: Option<&PotentialField>,
        beta: f64,
        k: usize,
        opts: &CorrectorOptions,
    ) -> Result<Self> {
        if !(beta >= 0.0) {
            return invalid("beta must be nonnegative");
        }
        let forms = AssembledForms::new(mesh, bc, kappa, potential)?;
        let space = LodSpace::new(mesh, bc, &forms, k, opts)?;
        let energy = forms.energy();
        let b_lod = space.project(&energy);
        let m_lod = space.project(&forms.m_h);
        Ok(Self {
            mesh,
            forms,
            space,
            beta,
            energy,
            b_lod,
            m_lod,
        })
    }

    /// `E(v)` for a fine vector.
    pub fn energy_of(&self, v: &[f64]) -> f64 {
        energy(self.mesh, v, &self.forms.a_h, &self.forms.m_v, self.beta)
    }

    /// Projected density mass `∫ρ Ψ_i Ψ_j` over the active basis.
    pub fn density_matrix(&self, density: &[(f64, Vec<f64>)]) -> Result<SparseMatrix> {
        let m = assemble_weighted_mass(self.mesh, Weight::Density(density))?;
        Ok(self.space.project(&m))
    }

    fn ground_state(
        &self,
        a: &SparseMatrix,
        eig: &EigOptions,
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let opts = EigOptions {
            n_ev: 1,
            ..eig.clone()
        };
        let pairs = generalized_eig_smallest(a, &self.m_lod, &opts)?;
        let x = &pairs.vectors[0];
        let mut u = self.space.prolong(x);
        let mut c = self.space.scatter(x);
        normalize_sign(&self.forms.m_h, &mut u, &mut c);
        Ok((pairs.lambdas[0], c, u))
    }
}

/// Iterate of the optimal damping algorithm.
#[derive(Clone, Debug)]
pub struct OdaState {
    pub nu: usize,
    pub u_coarse: Vec<f64>,
    pub u_fine: Vec<f64>,
    /// `ρ = Σ w_k u_k²` with nonnegative weights summing to one.
    pub density: Vec<(f64, Vec<f64>)>,
    /// `B(u, u) = ∫κ|∇u|² + V u²` of the mixed state.
    pub b_val: f64,
    /// `B + β∫ρ²` of the mixed state.
    pub d_val: f64,
    /// Energy of the mixed state, `½B + ¼β∫ρ²`.
    pub e_val: f64,
    pub lambda: f64,
    pub s_val: f64,
    pub c_val: f64,
    pub alpha: f64,
    pub converged: bool,
}

/// Ground state of `B` in the LOD space as starting point.
pub fn gpe_initial_step(gf: &GpeForms<'_>, eig: &EigOptions) -> Result<OdaState> {
    let (lambda, u_coarse, u_fine) = gf.ground_state(&gf.b_lod, eig)?;
    let b_val = gf.energy.bilinear(&u_fine, &u_fine);
    let d_val = b_val + gf.beta * quartic_integral(gf.mesh, &u_fine);
    Ok(OdaState {
        nu: 0,
        density: vec![(1.0, u_fine.clone())],
        u_coarse,
        u_fine,
        b_val,
        d_val,
        e_val: 0.25 * (b_val + d_val),
        lambda,
        s_val: f64::NAN,
        c_val: f64::NAN,
        alpha: f64::NAN,
        converged: false,
    })
}

/// Minimizer of `s t + ½ c t²` over `[0, 1]`.
pub fn optimal_step(s: f64, c: f64) -> f64 {
    if c > 0.0 {
        (-s / c).clamp(0.0, 1.0)
    } else if s + 0.5 * c < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// One damping step; `converged` is set once `|s| ≤ δ·2E`.
pub fn gpe_oda_iterate(
    gf: &GpeForms<'_>,
    state: &OdaState,
    delta: f64,
    eig: &EigOptions,
) -> Result<OdaState> {
    let beta = gf.beta;
    let a = if beta == 0.0 {
        gf.b_lod.clone()
    } else {
        gf.b_lod
            .add_scaled(1.0, &gf.density_matrix(&state.density)?, beta)
    };
    let (_, u_coarse, u_fine) = gf.ground_state(&a, eig)?;
    let b_half = gf.energy.bilinear(&u_fine, &u_fine);
    let rho_u = if beta == 0.0 {
        0.0
    } else {
        let m = assemble_weighted_mass(gf.mesh, Weight::Density(&state.density))?;
        m.bilinear(&u_fine, &u_fine)
    };
    let d_half = b_half + beta * rho_u;
    let lambda = b_half + beta * quartic_integral(gf.mesh, &u_fine);
    let s = d_half - state.d_val;
    let c = state.d_val + lambda - 2.0 * d_half + b_half - state.b_val;
    let alpha = optimal_step(s, c);
    // Twice the energy of the mixed state, quadratic in the step.
    let e2 = 0.5 * (state.b_val + state.d_val) + alpha * s + 0.5 * alpha * alpha * c;
    let b_val = (1.0 - alpha) * state.b_val + alpha * b_half;
    let d_val = 2.0 * e2 - b_val;
    let mut density: Vec<(f64, Vec<f64>)> = state
        .density
        .iter()
        .map(|(w, u)| ((1.0 - alpha) * w, u.clone()))
        .filter(|(w, _)| *w > 0.0)
        .collect();
    if alpha > 0.0 {
        density.push((alpha, u_fine.clone()));
    }
    Ok(OdaState {
        nu: state.nu + 1,
        u_coarse,
        u_fine,
        density,
        b_val,
        d_val,
        e_val: 0.5 * e2,
        lambda,
        s_val: s,
        c_val: c,
        alpha,
        converged: (s / e2).abs() <= delta,
    })
}

#[derive(Clone, Debug)]
pub struct OdaRun {
    pub state: OdaState,
    /// Energy after every step, starting with the initial state.
    pub energies: Vec<f64>,
}

/// Runs the damping iteration until convergence or `max_iter` steps.
pub fn gpe_oda(gf: &GpeForms<'_>, delta: f64, max_iter: usize, eig: &EigOptions) -> Result<OdaRun> {
    let mut state = gpe_initial_step(gf, eig)?;
    let mut energies = vec![state.e_val];
    while !state.converged && state.nu < max_iter {
        state = gpe_oda_iterate(gf, &state, delta, eig)?;
        energies.push(state.e_val);
    }
    Ok(OdaRun { state, energies })
}

/// `λ_LOD = 2E(u) + ½β∫u⁴` for an `L²`-normalized `u`.
pub fn gpe_eigenvalue(gf: &GpeForms<'_>, u: &[f64]) -> f64 {
    2.0 * gf.energy_of(u) + 0.5 * gf.beta * quartic_integral(gf.mesh, u)
}

#[derive(Clone, Debug)]
pub struct GpePost {
    pub lambda_lod: f64,
    pub lambda_post: f64,
    pub u_post: Vec<f64>,
}

/// Fine solve `B(u, v) = λ(u_LOD, v) − β(u_LOD³, v)` followed by the
/// eigenvalue of the `L²`-normalized result.
pub fn gpe_post_process(gf: &GpeForms<'_>, u_lod: &[f64]) -> Result<GpePost> {
    let lambda_lod = gpe_eigenvalue(gf, u_lod);
    let mut f: Vec<f64> = gf
        .forms
        .m_h
        .matvec(u_lod)
        .iter()
        .map(|v| lambda_lod * v)
        .collect();
    if gf.beta != 0.0 {
        for (x, c) in f.iter_mut().zip(cubic_load(gf.mesh, u_lod)) {
            *x -= gf.beta * c;
        }
    }
    let mut u = fine_solve(&gf.energy, &gf.forms.b_fine, &f)?;
    let norm = gf.forms.m_h.bilinear(&u, &u).sqrt();
    u.iter_mut().for_each(|v| *v /= norm);
    let lambda_post = gpe_eigenvalue(gf, &u);
    Ok(GpePost {
        lambda_lod,
        lambda_post,
        u_post: u,
    })
}

/// `(1, u)_{L²}`.
pub fn mean_value(m_h: &SparseMatrix, u: &[f64]) -> f64 {
    dot(&m_h.matvec(u), &vec![1.0; u.len()])
}
