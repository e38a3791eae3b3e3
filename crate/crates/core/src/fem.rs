//! Q1 finite element assembly on the two-scale mesh.

use std::io::{BufRead, Write};

use crate::error::{invalid, LodError, Result};
use crate::grid::{BoundarySpec, Level, TwoScaleMesh};
use crate::sparse::{SparseMatrix, TripletBuilder};

/// 4×4 element matrix in local node order.
pub type ElementMatrix = [[f64; 4]; 4];

/// Reference coordinates of the local nodes.
const LOCAL: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];
const S1: [[f64; 2]; 2] = [[1.0, -1.0], [-1.0, 1.0]];
const M1: [[f64; 2]; 2] = [[2.0 / 6.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 6.0]];

/// Exact `∫ κ ∇φ_n·∇φ_m` on an `hx × hy` cell.
pub fn element_stiffness(kappa: f64, hx: f64, hy: f64) -> ElementMatrix {
    let mut k = [[0.0; 4]; 4];
    for (a, &(ia, ja)) in LOCAL.iter().enumerate() {
        for (b, &(ib, jb)) in LOCAL.iter().enumerate() {
            k[a][b] =
                kappa * (hy / hx * S1[ia][ib] * M1[ja][jb] + hx / hy * M1[ia][ib] * S1[ja][jb]);
        }
    }
    k
}

/// Exact `∫ φ_n φ_m` on an `hx × hy` cell.
pub fn element_mass(hx: f64, hy: f64) -> ElementMatrix {
    let mut m = [[0.0; 4]; 4];
    for (a, &(ia, ja)) in LOCAL.iter().enumerate() {
        for (b, &(ib, jb)) in LOCAL.iter().enumerate() {
            m[a][b] = hx * hy * M1[ia][ib] * M1[ja][jb];
        }
    }
    m
}

/// Bilinear shape function values at reference point `(s, t) ∈ [0,1]²`.
pub fn shape_values(s: f64, t: f64) -> [f64; 4] {
    [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t]
}

/// Gauss–Legendre rule on `[0, 1]` with `n ∈ {1, 2, 3, 4}` points.
pub fn gauss_01(n: usize) -> Vec<(f64, f64)> {
    let rule: Vec<(f64, f64)> = match n {
        1 => vec![(0.0, 2.0)],
        2 => {
            let a = 1.0 / 3f64.sqrt();
            vec![(-a, 1.0), (a, 1.0)]
        }
        3 => {
            let a = (0.6f64).sqrt();
            vec![(-a, 5.0 / 9.0), (0.0, 8.0 / 9.0), (a, 5.0 / 9.0)]
        }
        4 => {
            let r = (6.0f64 / 5.0).sqrt() * 2.0;
            let (x1, x2) = (((3.0 - r) / 7.0).sqrt(), ((3.0 + r) / 7.0).sqrt());
            let w1 = (18.0 + 30f64.sqrt()) / 36.0;
            let w2 = (18.0 - 30f64.sqrt()) / 36.0;
            vec![(-x2, w2), (-x1, w1), (x1, w1), (x2, w2)]
        }
        _ => panic!("unsupported Gauss rule size {n}"),
    };
    rule.into_iter()
        .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

/// Assembles one 4×4 block per fine cell.
pub fn assemble_global(mesh: &TwoScaleMesh, blocks: &[ElementMatrix]) -> Result<SparseMatrix> {
    let nt = mesh.n_cells(Level::Fine);
    if blocks.len() != nt {
        return invalid(format!(
            "expected {nt} element blocks, got {}",
            blocks.len()
        ));
    }
    Ok(assemble_with(mesh, |t| blocks[t]))
}

fn assemble_with(mesh: &TwoScaleMesh, block: impl Fn(usize) -> ElementMatrix) -> SparseMatrix {
    let nt = mesh.n_cells(Level::Fine);
    let n = mesh.n_nodes(Level::Fine);
    let mut b = TripletBuilder::with_capacity(n, n, 16 * nt);
    for t in 0..nt {
        let nodes = mesh.cell_nodes(Level::Fine, t);
        let e = block(t);
        for (a, &ga) in nodes.iter().enumerate() {
            for (c, &gc) in nodes.iter().enumerate() {
                b.push(ga, gc, e[a][c]);
            }
        }
    }
    b.build()
}

/// Positive per-fine-cell diffusion coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField(Vec<f64>);

impl CoefficientField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return invalid("diffusion coefficient must be positive and finite");
        }
        Ok(Self(values))
    }

    pub fn constant(mesh: &TwoScaleMesh, value: f64) -> Result<Self> {
        Self::new(vec![value; mesh.n_cells(Level::Fine)])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.0.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }
}

/// Nonnegative per-fine-cell potential.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialField(Vec<f64>);

impl PotentialField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid("potential must be nonnegative and finite");
        }
        Ok(Self(values))
    }

    pub fn zero(mesh: &TwoScaleMesh) -> Self {
        Self(vec![0.0; mesh.n_cells(Level::Fine)])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// Per-cell element blocks of the energy form `∫κ∇u·∇v + ∫V u v`.
#[derive(Clone, Debug)]
pub struct CellForms {
    kref: ElementMatrix,
    mref: ElementMatrix,
    kappa: Vec<f64>,
    potential: Vec<f64>,
}

impl CellForms {
    pub fn new(
        mesh: &TwoScaleMesh,
        kappa: &CoefficientField,
        potential: Option<&PotentialField>,
    ) -> Result<Self> {
        let nt = mesh.n_cells(Level::Fine);
        if kappa.values().len() != nt || potential.is_some_and(|p| p.values().len() != nt) {
            return invalid(format!("fields must have {nt} cell values"));
        }
        let (hx, hy) = (mesh.hx(Level::Fine), mesh.hy(Level::Fine));
        Ok(Self {
            kref: element_stiffness(1.0, hx, hy),
            mref: element_mass(hx, hy),
            kappa: kappa.values().to_vec(),
            potential: potential
                .map(|p| p.values().to_vec())
                .unwrap_or_else(|| vec![0.0; nt]),
        })
    }

    pub fn block(&self, t: usize) -> ElementMatrix {
        let (k, v) = (self.kappa[t], self.potential[t]);
        let mut e = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                e[a][b] = k * self.kref[a][b] + v * self.mref[a][b];
            }
        }
        e
    }

    /// Diffusion part only.
    pub fn stiffness_block(&self, t: usize) -> ElementMatrix {
        scale_block(&self.kref, self.kappa[t])
    }

    pub fn n_cells(&self) -> usize {
        self.kappa.len()
    }
}

pub fn stiffness_matrix(mesh: &TwoScaleMesh, kappa: &CoefficientField) -> Result<SparseMatrix> {
    let forms = CellForms::new(mesh, kappa, None)?;
    Ok(assemble_with(mesh, |t| forms.block(t)))
}

pub fn mass_matrix(mesh: &TwoScaleMesh) -> SparseMatrix {
    let m = element_mass(mesh.hx(Level::Fine), mesh.hy(Level::Fine));
    assemble_with(mesh, |_| m)
}

/// Fine nodal density `ρ = Σ w_k u_k²`, stored as its convex-combination terms.
pub type Density = [(f64, Vec<f64>)];

pub enum Weight<'a> {
    /// Constant weight per fine cell.
    PerCell(&'a [f64]),
    /// Weight `Σ w_k u_k²` for fine nodal vectors `u_k`.
    Density(&'a Density),
}

/// `∫ w φ_i φ_j`; the density variant uses 3×3 Gauss per cell, exact for Q1 data.
pub fn assemble_weighted_mass(mesh: &TwoScaleMesh, weight: Weight<'_>) -> Result<SparseMatrix> {
    let nt = mesh.n_cells(Level::Fine);
    let (hx, hy) = (mesh.hx(Level::Fine), mesh.hy(Level::Fine));
    match weight {
        Weight::PerCell(w) => {
            if w.len() != nt {
                return invalid(format!("expected {nt} cell weights"));
            }
            if w.iter().any(|v| !(*v >= 0.0)) {
                return invalid("weights must be nonnegative");
            }
            let m = element_mass(hx, hy);
            Ok(assemble_with(mesh, |t| scale_block(&m, w[t])))
        }
        Weight::Density(terms) => {
            let n = mesh.n_nodes(Level::Fine);
            if terms.iter().any(|(w, u)| !(*w >= 0.0) || u.len() != n) {
                return invalid("density terms need nonnegative weights and fine vectors");
            }
            let pts = gauss_points_2d(3);
            Ok(assemble_with(mesh, |t| {
                let nodes = mesh.cell_nodes(Level::Fine, t);
                let mut e = [[0.0; 4]; 4];
                for &(s, r, wq) in &pts {
                    let phi = shape_values(s, r);
                    let rho: f64 = terms
                        .iter()
                        .map(|(w, u)| {
                            let ug: f64 = (0..4).map(|a| u[nodes[a]] * phi[a]).sum();
                            w * ug * ug
                        })
                        .sum();
                    let f = rho * wq * hx * hy;
                    for a in 0..4 {
                        for b in 0..4 {
                            e[a][b] += f * phi[a] * phi[b];
                        }
                    }
                }
                e
            }))
        }
    }
}

fn scale_block(m: &ElementMatrix, s: f64) -> ElementMatrix {
    m.map(|row| row.map(|v| v * s))
}

pub(crate) fn gauss_points_2d(n: usize) -> Vec<(f64, f64, f64)> {
    let g = gauss_01(n);
    let mut pts = Vec::with_capacity(n * n);
    for &(t, wt) in &g {
        for &(s, ws) in &g {
            pts.push((s, t, ws * wt));
        }
    }
    pts
}

/// `∫ v⁴` with 4×4 Gauss per cell.
pub fn quartic_integral(mesh: &TwoScaleMesh, v: &[f64]) -> f64 {
    let pts = gauss_points_2d(4);
    let area = mesh.hx(Level::Fine) * mesh.hy(Level::Fine);
    let mut total = 0.0;
    for t in 0..mesh.n_cells(Level::Fine) {
        let nodes = mesh.cell_nodes(Level::Fine, t);
        for &(s, r, w) in &pts {
            let phi = shape_values(s, r);
            let vg: f64 = (0..4).map(|a| v[nodes[a]] * phi[a]).sum();
            total += w * area * vg.powi(4);
        }
    }
    total
}

/// Load vector `∫ u³ φ_i` with 3×3 Gauss per cell.
pub fn cubic_load(mesh: &TwoScaleMesh, u: &[f64]) -> Vec<f64> {
    let pts = gauss_points_2d(3);
    let area = mesh.hx(Level::Fine) * mesh.hy(Level::Fine);
    let mut out = vec![0.0; mesh.n_nodes(Level::Fine)];
    for t in 0..mesh.n_cells(Level::Fine) {
        let nodes = mesh.cell_nodes(Level::Fine, t);
        for &(s, r, w) in &pts {
            let phi = shape_values(s, r);
            let ug: f64 = (0..4).map(|a| u[nodes[a]] * phi[a]).sum();
            let f = w * area * ug.powi(3);
            for a in 0..4 {
                out[nodes[a]] += f * phi[a];
            }
        }
    }
    out
}

/// `P[i][j] = Φ_i(z_j)`, coarse hat functions evaluated at fine nodes.
pub fn projection_matrix(mesh: &TwoScaleMesh) -> SparseMatrix {
    let r = mesh.refine as isize;
    let (nxf, nyf) = (mesh.nx(Level::Fine) as isize, mesh.ny(Level::Fine) as isize);
    let hat = |d: isize| 1.0 - d.abs() as f64 / r as f64;
    let nc = mesh.n_nodes(Level::Coarse);
    let mut b = TripletBuilder::with_capacity(
        nc,
        mesh.n_nodes(Level::Fine),
        nc * (2 * r as usize - 1).pow(2),
    );
    for i in 0..nc {
        let (ci, cj) = mesh.node_ij(Level::Coarse, i);
        let (cx, cy) = (ci as isize * r, cj as isize * r);
        for fy in (cy - r + 1).max(0)..=(cy + r - 1).min(nyf) {
            for fx in (cx - r + 1).max(0)..=(cx + r - 1).min(nxf) {
                let j = mesh.node_index(Level::Fine, fx as usize, fy as usize);
                b.push(i, j, hat(fx - cx) * hat(fy - cy));
            }
        }
    }
    b.build()
}

/// Diagonals of `B_H` and `B_h`: 1 for nodes off `Γ_D`, 0 on it.
pub fn boundary_masks(mesh: &TwoScaleMesh, bc: &BoundarySpec) -> (Vec<f64>, Vec<f64>) {
    let mask = |level| {
        (0..mesh.n_nodes(level))
            .map(|n| {
                if mesh.is_dirichlet(level, n, bc) {
                    0.0
                } else {
                    1.0
                }
            })
            .collect()
    };
    (mask(Level::Coarse), mask(Level::Fine))
}

/// 0/1 matrix marking coarse/fine node pairs with identical coordinates.
pub fn vertex_map(p: &SparseMatrix) -> SparseMatrix {
    let mut b = TripletBuilder::new(p.nrows(), p.ncols());
    for i in 0..p.nrows() {
        let (cols, vals) = p.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            if v == 1.0 {
                b.push(i, c, 1.0);
            }
        }
    }
    b.build()
}

/// `C_h = P_h M_h`.
pub fn constraint_matrix(p: &SparseMatrix, m: &SparseMatrix) -> SparseMatrix {
    p.matmul(m)
}

/// `f_h[i] = Σ_t f_t ∫_t φ_i` from per-fine-cell samples.
pub fn load_from_samples(mesh: &TwoScaleMesh, samples: &[f64]) -> Result<Vec<f64>> {
    let nt = mesh.n_cells(Level::Fine);
    if samples.len() != nt {
        return invalid(format!("expected {nt} cell samples"));
    }
    let quarter = 0.25 * mesh.hx(Level::Fine) * mesh.hy(Level::Fine);
    let mut f = vec![0.0; mesh.n_nodes(Level::Fine)];
    for (t, &s) in samples.iter().enumerate() {
        if s != 0.0 {
            for n in mesh.cell_nodes(Level::Fine, t) {
                f[n] += s * quarter;
            }
        }
    }
    Ok(f)
}

/// Samples `f` at fine-cell midpoints.
pub fn sample_midpoints(mesh: &TwoScaleMesh, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..mesh.n_cells(Level::Fine))
        .map(|t| {
            let (x, y) = mesh.cell_midpoint(Level::Fine, t);
            f(x, y)
        })
        .collect()
}

/// Load vector of `f` with midpoint sampling.
pub fn load_vector(mesh: &TwoScaleMesh, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    load_from_samples(mesh, &sample_midpoints(mesh, f)).expect("sample count matches mesh")
}

/// Flux samples `q(midpoint)` for every fine boundary edge, zero on
/// Dirichlet sides, in `TwoScaleMesh::boundary_edges` order.
pub fn sample_neumann(
    mesh: &TwoScaleMesh,
    q: impl Fn(f64, f64) -> f64,
    bc: &BoundarySpec,
) -> Vec<f64> {
    mesh.boundary_edges()
        .iter()
        .map(|e| {
            if bc.is_dirichlet(e.side) {
                0.0
            } else {
                q(e.midpoint.0, e.midpoint.1)
            }
        })
        .collect()
}

/// `∫_{Γ_N} q φ_i` from per-edge samples.
pub fn neumann_from_samples(
    mesh: &TwoScaleMesh,
    samples: &[f64],
    bc: &BoundarySpec,
) -> Result<Vec<f64>> {
    let edges = mesh.boundary_edges();
    if samples.len() != edges.len() {
        return invalid(format!("expected {} boundary edge samples", edges.len()));
    }
    let mut out = vec![0.0; mesh.n_nodes(Level::Fine)];
    for (e, &q) in edges.iter().zip(samples) {
        if bc.is_dirichlet(e.side) || q == 0.0 {
            continue;
        }
        for n in e.nodes {
            out[n] += 0.5 * e.length * q;
        }
    }
    Ok(out)
}

pub fn neumann_load(
    mesh: &TwoScaleMesh,
    q: impl Fn(f64, f64) -> f64,
    bc: &BoundarySpec,
) -> Vec<f64> {
    neumann_from_samples(mesh, &sample_neumann(mesh, q, bc), bc).expect("sample count matches mesh")
}

/// Coarse and fine Dirichlet extensions `(g_H, g_h)`.
pub fn dirichlet_extension(
    mesh: &TwoScaleMesh,
    g: impl Fn(f64, f64) -> f64,
    bc: &BoundarySpec,
) -> (Vec<f64>, Vec<f64>) {
    let g_coarse: Vec<f64> = (0..mesh.n_nodes(Level::Coarse))
        .map(|i| {
            if mesh.is_dirichlet(Level::Coarse, i, bc) {
                let (x, y) = mesh.node_coords(Level::Coarse, i);
                g(x, y)
            } else {
                0.0
            }
        })
        .collect();
    let interp = projection_matrix(mesh).matvec_transpose(&g_coarse);
    let g_fine = (0..mesh.n_nodes(Level::Fine))
        .map(|j| {
            if mesh.is_dirichlet(Level::Fine, j, bc) {
                let (x, y) = mesh.node_coords(Level::Fine, j);
                g(x, y)
            } else {
                interp[j]
            }
        })
        .collect();
    (g_coarse, g_fine)
}

/// Fine nodal interpolant of `u`.
pub fn interpolate(mesh: &TwoScaleMesh, level: Level, u: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..mesh.n_nodes(level))
        .map(|n| {
            let (x, y) = mesh.node_coords(level, n);
            u(x, y)
        })
        .collect()
}

/// All global matrices needed by the LOD pipeline.
#[derive(Clone, Debug)]
pub struct AssembledForms {
    pub a_h: SparseMatrix,
    pub m_h: SparseMatrix,
    pub m_v: SparseMatrix,
    pub p_h: SparseMatrix,
    pub c_h: SparseMatrix,
    pub b_coarse: Vec<f64>,
    pub b_fine: Vec<f64>,
    pub cells: CellForms,
}

impl AssembledForms {
    pub fn new(
        mesh: &TwoScaleMesh,
        bc: &BoundarySpec,
        kappa: &CoefficientField,
        potential: Option<&PotentialField>,
    ) -> Result<Self> {
        let cells = CellForms::new(mesh, kappa, potential)?;
        let a_h = stiffness_matrix(mesh, kappa)?;
        let m_h = mass_matrix(mesh);
        let m_v = match potential {
            Some(v) => assemble_weighted_mass(mesh, Weight::PerCell(v.values()))?,
            None => SparseMatrix::zeros(m_h.nrows(), m_h.ncols()),
        };
        let p_h = projection_matrix(mesh);
        let c_h = constraint_matrix(&p_h, &m_h);
        let (b_coarse, b_fine) = boundary_masks(mesh, bc);
        Ok(Self {
            a_h,
            m_h,
            m_v,
            p_h,
            c_h,
            b_coarse,
            b_fine,
            cells,
        })
    }

    /// `A_h + M_{V,h}`.
    pub fn energy(&self) -> SparseMatrix {
        self.a_h.add(&self.m_v)
    }

    pub fn vertex_map(&self) -> SparseMatrix {
        vertex_map(&self.p_h)
    }

    pub fn coarse_stiffness(&self) -> SparseMatrix {
        galerkin(&self.p_h, &self.a_h)
    }

    pub fn coarse_mass(&self) -> SparseMatrix {
        galerkin(&self.p_h, &self.m_h)
    }
}

/// `P A Pᵀ`.
pub fn galerkin(p: &SparseMatrix, a: &SparseMatrix) -> SparseMatrix {
    p.matmul(a).matmul(&p.transpose())
}

/// Reads a per-cell field: header `nx ny`, then `nx·ny` values.
pub fn read_field<R: BufRead>(r: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut tokens = Vec::new();
    for line in r.lines() {
        let line = line?;
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let parse_err = |t: &str| LodError::Parse(format!("bad field token '{t}'"));
    if tokens.len() < 2 {
        return Err(LodError::Parse("field file lacks an 'nx ny' header".into()));
    }
    let nx: usize = tokens[0].parse().map_err(|_| parse_err(&tokens[0]))?;
    let ny: usize = tokens[1].parse().map_err(|_| parse_err(&tokens[1]))?;
    let values: Vec<f64> = tokens[2..]
        .iter()
        .map(|t| t.parse().map_err(|_| parse_err(t)))
        .collect::<Result<_>>()?;
    if values.len() != nx * ny {
        return Err(LodError::Parse(format!(
            "expected {} values, found {}",
            nx * ny,
            values.len()
        )));
    }
    Ok((nx, ny, values))
}

pub fn write_field<W: Write>(mut w: W, nx: usize, ny: usize, values: &[f64]) -> Result<()> {
    if values.len() != nx * ny {
        return invalid("field size does not match its dimensions");
    }
    writeln!(w, "{nx} {ny}")?;
    for row in values.chunks(nx) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}
