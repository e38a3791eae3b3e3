//! Patch-local corrector problems and the global corrector matrix `Q_h`.
//!
//! For every coarse cell `K_ℓ` the saddle-point system
//!
//! ```text
//! [ A_ℓ  C_ℓᵀ ] [ w ]   [ r ]
//! [ C_ℓ  0    ] [ λ ] = [ 0 ]
//! ```
//!
//! is solved through the Schur complement `S_ℓ = C_ℓ A_ℓ⁻¹ C_ℓᵀ`, once per
//! nonzero row of the local load `r_ℓ`. Results are merged in ascending `ℓ`
//! so that `Q_h` is bit-identical for any number of worker threads.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, LodError, Result};
use crate::fem::{AssembledForms, CellForms, ElementMatrix};
use crate::grid::{BoundarySpec, CellBox, Level, Patch, TwoScaleMesh};
use crate::sparse::{norm_inf, spd_factorize, Factorization, SparseMatrix};

/// Relative tolerance for the saddle-point residual checks.
pub const SADDLE_TOL: f64 = 1e-8;

/// Inputs shared by all patch problems.
#[derive(Clone, Copy)]
pub struct CorrectorSetup<'a> {
    pub mesh: &'a TwoScaleMesh,
    pub bc: &'a BoundarySpec,
    pub forms: &'a AssembledForms,
    /// Global energy matrix: `A_h`, or `A_h + M_{V,h}` when `with_potential`.
    pub energy: &'a SparseMatrix,
    pub with_potential: bool,
}

impl<'a> CorrectorSetup<'a> {
    /// Energy element block of fine cell `t`, consistent with `energy`.
    pub fn block(&self, t: usize) -> ElementMatrix {
        if self.with_potential {
            self.forms.cells.block(t)
        } else {
            self.forms.cells.stiffness_block(t)
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CorrectorOptions {
    /// Share one Schur factorization between patches with identical active sets.
    pub reuse_schur: bool,
}

impl Default for CorrectorOptions {
    fn default() -> Self {
        Self { reuse_schur: true }
    }
}

/// Gathered patch matrices `A_ℓ` and `C_ℓ`.
#[derive(Clone, Debug)]
pub struct LocalSystem {
    pub ell: usize,
    pub a: SparseMatrix,
    pub c: SparseMatrix,
}

pub fn local_system(patch: &Patch, a_h: &SparseMatrix, c_h: &SparseMatrix) -> Result<LocalSystem> {
    if patch.active_fine_nodes.is_empty() || patch.active_coarse_nodes.is_empty() {
        return Err(LodError::DegeneratePatch { patch: patch.ell });
    }
    let a = a_h.gather_submatrix(&patch.active_fine_nodes, &patch.active_fine_nodes)?;
    let c = c_h.gather_submatrix(&patch.active_coarse_nodes, &patch.active_fine_nodes)?;
    Ok(LocalSystem {
        ell: patch.ell,
        a,
        c,
    })
}

fn local_index(patch: &Patch, node: usize) -> Option<usize> {
    patch.active_fine_nodes.binary_search(&node).ok()
}

/// Element loads `r_ℓ` (4 × N_{ℓ,h}): row `i` is `−a_K(Φ_{p_i}, φ_j)` over
/// the fine cells of `K_ℓ`, zero for Dirichlet coarse nodes.
pub fn local_rhs(setup: &CorrectorSetup<'_>, patch: &Patch) -> DMatrix<f64> {
    let mesh = setup.mesh;
    let p_h = &setup.forms.p_h;
    let mut r = DMatrix::zeros(4, patch.active_fine_nodes.len());
    for t in mesh.fine_cells_in_coarse(patch.ell) {
        let nodes = mesh.cell_nodes(Level::Fine, t);
        let local: Vec<Option<usize>> = nodes.iter().map(|&n| local_index(patch, n)).collect();
        if local.iter().all(Option::is_none) {
            continue;
        }
        let e = setup.block(t);
        for (i, &p) in patch.element_coarse_nodes.iter().enumerate() {
            if setup.forms.b_coarse[p] == 0.0 {
                continue;
            }
            let phi: Vec<f64> = nodes.iter().map(|&n| p_h.get(p, n)).collect();
            for a in 0..4 {
                if let Some(l) = local[a] {
                    let s: f64 = (0..4).map(|b| e[a][b] * phi[b]).sum();
                    r[(i, l)] -= s;
                }
            }
        }
    }
    r
}

/// Factorization of `A_ℓ` with the dense Schur data.
#[derive(Debug)]
pub struct SchurCache {
    pub factor: Factorization,
    pub c: SparseMatrix,
    /// Row `m` holds `A_ℓ⁻¹ C_ℓᵀ e_m`.
    pub y: DMatrix<f64>,
    pub s_inv: DMatrix<f64>,
}

pub fn schur_precompute(sys: &LocalSystem) -> Result<SchurCache> {
    let factor = spd_factorize(&sys.a)?;
    let (nc, nf) = (sys.c.nrows(), sys.c.ncols());
    let mut y = DMatrix::zeros(nc, nf);
    let mut rhs = vec![0.0; nf];
    for m in 0..nc {
        rhs.iter_mut().for_each(|v| *v = 0.0);
        let (cols, vals) = sys.c.row(m);
        for (&j, &v) in cols.iter().zip(vals) {
            rhs[j] = v;
        }
        factor.solve_in_place(&mut rhs);
        for (j, &v) in rhs.iter().enumerate() {
            y[(m, j)] = v;
        }
    }
    let mut s = DMatrix::zeros(nc, nc);
    for m in 0..nc {
        let (cols, vals) = sys.c.row(m);
        for n in 0..nc {
            s[(m, n)] = cols.iter().zip(vals).map(|(&j, &v)| v * y[(n, j)]).sum();
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let smax = s.diagonal().max();
    let chol = nalgebra::Cholesky::new(s).ok_or(LodError::RankDeficient {
        patch: sys.ell,
        ratio: 0.0,
    })?;
    let lmin = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v * v));
    let ratio = lmin / smax;
    if !(ratio > 1e-12) {
        return Err(LodError::RankDeficient {
            patch: sys.ell,
            ratio,
        });
    }
    let s_inv = chol.inverse();
    Ok(SchurCache {
        factor,
        c: sys.c.clone(),
        y,
        s_inv,
    })
}

impl SchurCache {
    /// Solves the saddle-point problem for `rhs`, returning `(w, λ)`.
    pub fn solve(&self, rhs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if rhs.iter().all(|&v| v == 0.0) {
            return (vec![0.0; rhs.len()], vec![0.0; self.c.nrows()]);
        }
        let q = self.factor.solve(rhs);
        let cq = DVector::from_vec(self.c.matvec(&q));
        let lambda = &self.s_inv * cq;
        let mut w = q;
        for (j, wj) in w.iter_mut().enumerate() {
            let col = self.y.column(j);
            *wj -= col.dot(&lambda);
        }
        (w, lambda.as_slice().to_vec())
    }
}

/// `‖C w‖_∞ / ‖w‖_∞` (zero for `w = 0`).
pub fn constraint_ratio(c: &SparseMatrix, w: &[f64]) -> f64 {
    let nw = norm_inf(w);
    if nw == 0.0 {
        0.0
    } else {
        norm_inf(&c.matvec(w)) / nw
    }
}

/// Right-hand side functional `F^s(v) = ∫η₁v + ∫κ∇η₂·∇v + ∫_{Γ_N}η₃v`.
#[derive(Clone, Debug, Default)]
pub struct SourceSpec {
    /// Per fine cell samples.
    pub eta1: Option<Vec<f64>>,
    /// Fine nodal vector.
    pub eta2: Option<Vec<f64>>,
    /// Per boundary edge samples in `TwoScaleMesh::boundary_edges` order.
    pub eta3: Option<Vec<f64>>,
}

impl SourceSpec {
    pub fn validate(&self, mesh: &TwoScaleMesh) -> Result<()> {
        let lens = [
            (self.eta1.as_ref(), mesh.n_cells(Level::Fine), "eta1"),
            (self.eta2.as_ref(), mesh.n_nodes(Level::Fine), "eta2"),
            (self.eta3.as_ref(), mesh.boundary_edges().len(), "eta3"),
        ];
        for (v, n, name) in lens {
            if v.is_some_and(|v| v.len() != n) {
                return invalid(format!("{name} must have length {n}"));
            }
        }
        Ok(())
    }

    /// `F^s_K(φ_j)` for the fine nodes `j` of coarse cell `ell`, ascending.
    pub fn localized(
        &self,
        mesh: &TwoScaleMesh,
        cells: &CellForms,
        bc: &BoundarySpec,
        ell: usize,
    ) -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        let quarter = 0.25 * mesh.hx(Level::Fine) * mesh.hy(Level::Fine);
        for t in mesh.fine_cells_in_coarse(ell) {
            let nodes = mesh.cell_nodes(Level::Fine, t);
            if let Some(eta1) = &self.eta1 {
                if eta1[t] != 0.0 {
                    for &n in &nodes {
                        *acc.entry(n).or_default() += eta1[t] * quarter;
                    }
                }
            }
            if let Some(eta2) = &self.eta2 {
                let vals: Vec<f64> = nodes.iter().map(|&n| eta2[n]).collect();
                if vals.iter().any(|&v| v != 0.0) {
                    let e = cells.stiffness_block(t);
                    for a in 0..4 {
                        *acc.entry(nodes[a]).or_default() +=
                            (0..4).map(|b| e[a][b] * vals[b]).sum::<f64>();
                    }
                }
            }
        }
        if let Some(eta3) = &self.eta3 {
            for (e, &q) in mesh.boundary_edges().iter().zip(eta3) {
                if q == 0.0 || bc.is_dirichlet(e.side) || mesh.coarse_cell_of(e.cell) != ell {
                    continue;
                }
                for n in e.nodes {
                    *acc.entry(n).or_default() += 0.5 * e.length * q;
                }
            }
        }
        acc.into_iter().collect()
    }

    /// Global load `F^s(φ_j)`, summed cell by cell.
    pub fn assemble(&self, mesh: &TwoScaleMesh, cells: &CellForms, bc: &BoundarySpec) -> Vec<f64> {
        let mut out = vec![0.0; mesh.n_nodes(Level::Fine)];
        for ell in 0..mesh.n_cells(Level::Coarse) {
            for (n, v) in self.localized(mesh, cells, bc, ell) {
                out[n] += v;
            }
        }
        out
    }
}

/// `r̂_ℓ[j] = −F^s_{K_ℓ}(φ_j)` on the active fine nodes of the patch.
pub fn source_rhs(setup: &CorrectorSetup<'_>, patch: &Patch, spec: &SourceSpec) -> Vec<f64> {
    let mut r = vec![0.0; patch.active_fine_nodes.len()];
    for (n, v) in spec.localized(setup.mesh, &setup.forms.cells, setup.bc, patch.ell) {
        if let Some(l) = local_index(patch, n) {
            r[l] -= v;
        }
    }
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchStats {
    pub ell: usize,
    pub n_coarse: usize,
    pub n_fine: usize,
    /// Solves with the `A_ℓ` factorization charged to this patch.
    pub solves: usize,
    /// True when the Schur data was computed for an earlier patch.
    pub schur_shared: bool,
    /// Largest `‖C_ℓ w‖_∞ / ‖w‖_∞` over the patch solves.
    pub constraint_ratio: f64,
}

/// Result of one patch: corrector rows for the element nodes and the
/// optional source piece, both on the patch's active fine nodes.
pub struct PatchOutcome {
    pub patch: Patch,
    pub rows: [Option<Vec<f64>>; 4],
    pub source: Option<Vec<f64>>,
    pub stats: PatchStats,
}

fn solve_patch(
    setup: &CorrectorSetup<'_>,
    patch: Patch,
    cache: Option<&SchurCache>,
    schur_solves: usize,
    source: Option<&SourceSpec>,
) -> Result<PatchOutcome> {
    let mut stats = PatchStats {
        ell: patch.ell,
        n_coarse: patch.active_coarse_nodes.len(),
        n_fine: patch.active_fine_nodes.len(),
        solves: schur_solves,
        schur_shared: cache.is_some() && schur_solves == 0,
        constraint_ratio: 0.0,
    };
    let mut rows: [Option<Vec<f64>>; 4] = Default::default();
    let Some(cache) = cache else {
        // Trivial detail space: every corrector vanishes.
        return Ok(PatchOutcome {
            patch,
            rows,
            source: None,
            stats,
        });
    };
    let r = local_rhs(setup, &patch);
    for (i, row) in rows.iter_mut().enumerate() {
        let ri: Vec<f64> = r.row(i).iter().copied().collect();
        if ri.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (w, _) = cache.solve(&ri);
        stats.solves += 1;
        stats.constraint_ratio = stats.constraint_ratio.max(constraint_ratio(&cache.c, &w));
        *row = Some(w);
    }
    let source = match source {
        Some(spec) => {
            let rh = source_rhs(setup, &patch, spec);
            if rh.iter().all(|&v| v == 0.0) {
                None
            } else {
                let (w, _) = cache.solve(&rh);
                stats.solves += 1;
                stats.constraint_ratio = stats.constraint_ratio.max(constraint_ratio(&cache.c, &w));
                Some(w)
            }
        }
        None => None,
    };
    Ok(PatchOutcome {
        patch,
        rows,
        source,
        stats,
    })
}

fn with_patch(ell: usize) -> impl Fn(LodError) -> LodError {
    move |e| match e {
        LodError::RankDeficient { .. }
        | LodError::DegeneratePatch { .. }
        | LodError::Patch { .. } => e,
        other => LodError::Patch {
            patch: ell,
            source: Box::new(other),
        },
    }
}

fn build_cache(setup: &CorrectorSetup<'_>, patch: &Patch) -> Result<SchurCache> {
    let sys = local_system(patch, setup.energy, &setup.forms.c_h)?;
    schur_precompute(&sys)
}

/// Solves all patch problems and hands the outcomes to `sink` in ascending
/// `ℓ`. Patch work runs in parallel chunks.
pub fn sweep_patches(
    setup: &CorrectorSetup<'_>,
    k: usize,
    opts: &CorrectorOptions,
    source: Option<&SourceSpec>,
    mut sink: impl FnMut(PatchOutcome) -> Result<()>,
) -> Result<()> {
    let mesh = setup.mesh;
    if let Some(spec) = source {
        spec.validate(mesh)?;
    }
    let n = mesh.n_cells(Level::Coarse);
    let trivial = mesh.refine == 1;
    let boxes: Vec<CellBox> = (0..n).map(|ell| mesh.patch_box(ell, k)).collect();
    let mut last_use: HashMap<CellBox, usize> = HashMap::new();
    for (ell, b) in boxes.iter().enumerate() {
        last_use.insert(*b, ell);
    }
    let chunk = (2 * rayon::current_num_threads()).max(1);
    let mut cache: HashMap<CellBox, Arc<SchurCache>> = HashMap::new();

    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let patches: Vec<Patch> = (start..end)
            .into_par_iter()
            .map(|ell| mesh.build_patch(ell, k, setup.bc))
            .collect::<Result<_>>()?;

        let mut fresh: HashMap<CellBox, usize> = HashMap::new();
        if opts.reuse_schur && !trivial {
            let mut todo: Vec<&Patch> = Vec::new();
            for p in &patches {
                let b = boxes[p.ell];
                if !cache.contains_key(&b) && !fresh.contains_key(&b) {
                    fresh.insert(b, p.ell);
                    todo.push(p);
                }
            }
            let built: Vec<(CellBox, SchurCache)> = todo
                .par_iter()
                .map(|p| {
                    build_cache(setup, p)
                        .map(|c| (boxes[p.ell], c))
                        .map_err(with_patch(p.ell))
                })
                .collect::<Result<_>>()?;
            for (b, c) in built {
                cache.insert(b, Arc::new(c));
            }
        }

        let outcomes: Vec<PatchOutcome> = patches
            .into_par_iter()
            .map(|p| {
                let ell = p.ell;
                if trivial {
                    return solve_patch(setup, p, None, 0, source);
                }
                if opts.reuse_schur {
                    let b = boxes[ell];
                    let charged = if fresh.get(&b) == Some(&ell) {
                        p.active_coarse_nodes.len()
                    } else {
                        0
                    };
                    solve_patch(setup, p, Some(&cache[&b]), charged, source)
                } else {
                    let c = build_cache(setup, &p)?;
                    let nh = p.active_coarse_nodes.len();
                    solve_patch(setup, p, Some(&c), nh, source)
                }
                .map_err(with_patch(ell))
            })
            .collect::<Result<_>>()?;
        for o in outcomes {
            sink(o)?;
        }
        cache.retain(|b, _| last_use[b] >= end);
        start = end;
    }
    Ok(())
}

/// Global corrector matrix together with per-patch statistics.
#[derive(Clone, Debug)]
pub struct CorrectorMatrix {
    /// `N_H × N_h`; row `p` holds the fine coefficients of `Q_h Φ_p`.
    pub q: SparseMatrix,
    pub stats: Vec<PatchStats>,
}

/// Source corrector `Q_{F^s,h}` with its per-patch pieces.
#[derive(Clone, Debug)]
pub struct SourceCorrector {
    pub q_hat: Vec<f64>,
    /// `(ℓ, ŵ_ℓ)` on the active fine nodes of patch `ℓ`, for patches with a
    /// nonzero local functional.
    pub pieces: Vec<(usize, Vec<f64>)>,
}

/// Ascending-`ℓ` accumulation of patch rows into `Q_h`. A row is closed as
/// soon as the last coarse cell touching its node has been merged.
struct RowAccumulator<'m> {
    mesh: &'m TwoScaleMesh,
    open: Vec<Vec<(usize, f64)>>,
    done: Vec<Vec<(usize, f64)>>,
}

impl<'m> RowAccumulator<'m> {
    fn new(mesh: &'m TwoScaleMesh) -> Self {
        let nc = mesh.n_nodes(Level::Coarse);
        Self {
            mesh,
            open: vec![Vec::new(); nc],
            done: vec![Vec::new(); nc],
        }
    }

    fn last_cell(&self, p: usize) -> usize {
        let (i, j) = self.mesh.node_ij(Level::Coarse, p);
        let (nx, ny) = self.mesh.coarse_cells;
        self.mesh
            .cell_index(Level::Coarse, i.min(nx - 1), j.min(ny - 1))
    }

    fn add(&mut self, o: &PatchOutcome) {
        for (i, row) in o.rows.iter().enumerate() {
            if let Some(w) = row {
                let p = o.patch.element_coarse_nodes[i];
                let dst = &mut self.open[p];
                dst.extend(
                    o.patch
                        .active_fine_nodes
                        .iter()
                        .copied()
                        .zip(w.iter().copied()),
                );
            }
        }
        for &p in &o.patch.element_coarse_nodes {
            if self.last_cell(p) == o.patch.ell {
                let mut entries = std::mem::take(&mut self.open[p]);
                entries.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
                for (c, v) in entries {
                    match merged.last_mut() {
                        Some(last) if last.0 == c => last.1 += v,
                        _ => merged.push((c, v)),
                    }
                }
                self.done[p] = merged;
            }
        }
    }

    fn finish(self) -> SparseMatrix {
        let ncols = self.mesh.n_nodes(Level::Fine);
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in self.done {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix::from_csr(self.open.len(), ncols, row_ptr, cols, vals)
            .expect("rows are sorted")
    }
}

/// Computes `Q_h` and, if requested, the source corrector in one sweep.
pub fn compute_corrections_with_source(
    setup: &CorrectorSetup<'_>,
    k: usize,
    opts: &CorrectorOptions,
    source: Option<&SourceSpec>,
) -> Result<(CorrectorMatrix, Option<SourceCorrector>)> {
    let mut acc = RowAccumulator::new(setup.mesh);
    let mut stats = Vec::with_capacity(setup.mesh.n_cells(Level::Coarse));
    let mut q_hat = vec![0.0; setup.mesh.n_nodes(Level::Fine)];
    let mut pieces = Vec::new();
    sweep_patches(setup, k, opts, source, |o| {
        acc.add(&o);
        if let Some(w) = &o.source {
            for (&n, &v) in o.patch.active_fine_nodes.iter().zip(w) {
                q_hat[n] += v;
            }
            pieces.push((o.patch.ell, w.clone()));
        }
        stats.push(o.stats);
        Ok(())
    })?;
    let q = CorrectorMatrix {
        q: acc.finish(),
        stats,
    };
    Ok((q, source.map(|_| SourceCorrector { q_hat, pieces })))
}

pub fn compute_corrections(
    setup: &CorrectorSetup<'_>,
    k: usize,
    opts: &CorrectorOptions,
) -> Result<CorrectorMatrix> {
    Ok(compute_corrections_with_source(setup, k, opts, None)?.0)
}

pub fn compute_source_corrector(
    setup: &CorrectorSetup<'_>,
    k: usize,
    opts: &CorrectorOptions,
    spec: &SourceSpec,
) -> Result<SourceCorrector> {
    Ok(compute_corrections_with_source(setup, k, opts, Some(spec))?
        .1
        .expect("source requested"))
}

/// Writes `ell,n_coarse,n_fine,solves` rows.
pub fn write_patch_stats<W: Write>(mut w: W, stats: &[PatchStats]) -> Result<()> {
    writeln!(w, "ell,n_coarse,n_fine,solves")?;
    for s in stats {
        writeln!(w, "{},{},{},{}", s.ell, s.n_coarse, s.n_fine, s.solves)?;
    }
    Ok(())
}
