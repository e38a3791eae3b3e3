//! Structured two-scale quadrilateral meshes.
//!
//! Nodes and cells are numbered lexicographically with x running fastest, on
//! both levels. Local node order inside a cell is counterclockwise from the
//! lower-left corner: (0,0), (1,0), (1,1), (0,1).

use crate::error::{invalid, Result};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl DomainRect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x1 > x0 && y1 > y0) || ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return invalid(format!("degenerate rectangle [{x0},{x1}]x[{y0},{y1}]"));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn unit_square() -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// Per-side boundary condition tags. At least one side must be Dirichlet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct BoundarySpec {
    pub left: BcKind,
    pub right: BcKind,
    pub bottom: BcKind,
    pub top: BcKind,
}

impl BoundarySpec {
    pub fn new(left: BcKind, right: BcKind, bottom: BcKind, top: BcKind) -> Result<Self> {
        let spec = Self {
            left,
            right,
            bottom,
            top,
        };
        if !Side::ALL.iter().any(|&s| spec.side(s) == BcKind::Dirichlet) {
            return invalid("at least one side must carry a Dirichlet condition");
        }
        Ok(spec)
    }

    pub fn all_dirichlet() -> Self {
        Self {
            left: BcKind::Dirichlet,
            right: BcKind::Dirichlet,
            bottom: BcKind::Dirichlet,
            top: BcKind::Dirichlet,
        }
    }

    pub fn side(&self, s: Side) -> BcKind {
        match s {
            Side::Left => self.left,
            Side::Right => self.right,
            Side::Bottom => self.bottom,
            Side::Top => self.top,
        }
    }

    pub fn is_dirichlet(&self, s: Side) -> bool {
        self.side(s) == BcKind::Dirichlet
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    Coarse,
    Fine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Dirichlet,
    Neumann,
}

/// A fine boundary edge.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryEdge {
    pub side: Side,
    /// Endpoint node indices on the fine level.
    pub nodes: [usize; 2],
    pub midpoint: (f64, f64),
    pub length: f64,
    /// Fine cell owning the edge.
    pub cell: usize,
}

/// Coarse grid with a uniform fine refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoScaleMesh {
    pub domain: DomainRect,
    /// Coarse cells per axis `(nxH, nyH)`.
    pub coarse_cells: (usize, usize),
    /// Fine cells per coarse cell per axis.
    pub refine: usize,
}

const LOCAL_OFFSETS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

impl TwoScaleMesh {
    pub fn new(domain: DomainRect, coarse_cells: (usize, usize), refine: usize) -> Result<Self> {
        if coarse_cells.0 == 0 || coarse_cells.1 == 0 || refine == 0 {
            return invalid(format!(
                "mesh dimensions must be positive, got {:?} refine {refine}",
                coarse_cells
            ));
        }
        Ok(Self {
            domain,
            coarse_cells,
            refine,
        })
    }

    /// Mesh whose coarse and fine widths are `h_coarse` and `h_fine` along both axes.
    pub fn with_sizes(domain: DomainRect, h_coarse: f64, h_fine: f64) -> Result<Self> {
        let count = |len: f64, h: f64| -> Result<usize> {
            let n = (len / h).round();
            if n < 1.0 || ((n * h) - len).abs() > 1e-9 * len {
                return invalid(format!("mesh size {h} does not divide length {len}"));
            }
            Ok(n as usize)
        };
        let nx = count(domain.width(), h_coarse)?;
        let ny = count(domain.height(), h_coarse)?;
        let r = h_coarse / h_fine;
        if r < 1.0 - 1e-12 || (r - r.round()).abs() > 1e-9 {
            return invalid(format!(
                "fine size {h_fine} does not divide coarse size {h_coarse}"
            ));
        }
        Self::new(domain, (nx, ny), r.round() as usize)
    }

    pub fn nx(&self, level: Level) -> usize {
        match level {
            Level::Coarse => self.coarse_cells.0,
            Level::Fine => self.coarse_cells.0 * self.refine,
        }
    }

    pub fn ny(&self, level: Level) -> usize {
        match level {
            Level::Coarse => self.coarse_cells.1,
            Level::Fine => self.coarse_cells.1 * self.refine,
        }
    }

    pub fn n_nodes(&self, level: Level) -> usize {
        (self.nx(level) + 1) * (self.ny(level) + 1)
    }

    pub fn n_cells(&self, level: Level) -> usize {
        self.nx(level) * self.ny(level)
    }

    pub fn hx(&self, level: Level) -> f64 {
        self.domain.width() / self.nx(level) as f64
    }

    pub fn hy(&self, level: Level) -> f64 {
        self.domain.height() / self.ny(level) as f64
    }

    pub fn node_ij(&self, level: Level, node: usize) -> (usize, usize) {
        let w = self.nx(level) + 1;
        (node % w, node / w)
    }

    pub fn node_index(&self, level: Level, ix: usize, iy: usize) -> usize {
        iy * (self.nx(level) + 1) + ix
    }

    pub fn node_coords(&self, level: Level, node: usize) -> (f64, f64) {
        let (ix, iy) = self.node_ij(level, node);
        (
            self.domain.x0 + ix as f64 * self.hx(level),
            self.domain.y0 + iy as f64 * self.hy(level),
        )
    }

    pub fn cell_ij(&self, level: Level, cell: usize) -> (usize, usize) {
        let w = self.nx(level);
        (cell % w, cell / w)
    }

    pub fn cell_index(&self, level: Level, cx: usize, cy: usize) -> usize {
        cy * self.nx(level) + cx
    }

    pub fn cell_origin(&self, level: Level, cell: usize) -> (f64, f64) {
        let (cx, cy) = self.cell_ij(level, cell);
        (
            self.domain.x0 + cx as f64 * self.hx(level),
            self.domain.y0 + cy as f64 * self.hy(level),
        )
    }

    pub fn cell_midpoint(&self, level: Level, cell: usize) -> (f64, f64) {
        let (x, y) = self.cell_origin(level, cell);
        (x + 0.5 * self.hx(level), y + 0.5 * self.hy(level))
    }

    /// Local-to-global node map with range checks.
    pub fn sigma(&self, level: Level, cell: usize, local: usize) -> Result<usize> {
        if cell >= self.n_cells(level) || local >= 4 {
            return invalid(format!("sigma({cell}, {local}) out of range"));
        }
        Ok(self.cell_nodes(level, cell)[local])
    }

    /// The four global node indices of `cell` in local order.
    pub fn cell_nodes(&self, level: Level, cell: usize) -> [usize; 4] {
        let (cx, cy) = self.cell_ij(level, cell);
        LOCAL_OFFSETS.map(|(dx, dy)| self.node_index(level, cx + dx, cy + dy))
    }

    /// Fine cells inside coarse cell `ell`, ascending.
    pub fn fine_cells_in_coarse(&self, ell: usize) -> Vec<usize> {
        let (cx, cy) = self.cell_ij(Level::Coarse, ell);
        let r = self.refine;
        let mut cells = Vec::with_capacity(r * r);
        for fy in cy * r..(cy + 1) * r {
            for fx in cx * r..(cx + 1) * r {
                cells.push(self.cell_index(Level::Fine, fx, fy));
            }
        }
        cells
    }

    /// Coarse cell containing fine cell `t`.
    pub fn coarse_cell_of(&self, t: usize) -> usize {
        let (fx, fy) = self.cell_ij(Level::Fine, t);
        self.cell_index(Level::Coarse, fx / self.refine, fy / self.refine)
    }

    /// Fine node with the coordinates of coarse node `i`.
    pub fn coarse_to_fine_node(&self, i: usize) -> usize {
        let (ix, iy) = self.node_ij(Level::Coarse, i);
        self.node_index(Level::Fine, ix * self.refine, iy * self.refine)
    }

    fn sides_of(&self, level: Level, node: usize) -> [bool; 4] {
        let (ix, iy) = self.node_ij(level, node);
        // Same order as Side::ALL.
        [iy == 0, ix == self.nx(level), iy == self.ny(level), ix == 0]
    }

    /// Boundary classification; Dirichlet wins at corners.
    pub fn classify_node(&self, level: Level, node: usize, bc: &BoundarySpec) -> NodeKind {
        let on = self.sides_of(level, node);
        let mut boundary = false;
        for (s, &flag) in Side::ALL.iter().zip(on.iter()) {
            if flag {
                if bc.is_dirichlet(*s) {
                    return NodeKind::Dirichlet;
                }
                boundary = true;
            }
        }
        if boundary {
            NodeKind::Neumann
        } else {
            NodeKind::Interior
        }
    }

    pub fn is_dirichlet(&self, level: Level, node: usize, bc: &BoundarySpec) -> bool {
        self.classify_node(level, node, bc) == NodeKind::Dirichlet
    }

    /// Fine boundary edges ordered bottom, right, top, left; each side in
    /// increasing coordinate.
    pub fn boundary_edges(&self) -> Vec<BoundaryEdge> {
        let (nx, ny) = (self.nx(Level::Fine), self.ny(Level::Fine));
        let (hx, hy) = (self.hx(Level::Fine), self.hy(Level::Fine));
        let d = &self.domain;
        let f = Level::Fine;
        let mut edges = Vec::with_capacity(2 * (nx + ny));
        for i in 0..nx {
            edges.push(BoundaryEdge {
                side: Side::Bottom,
                nodes: [self.node_index(f, i, 0), self.node_index(f, i + 1, 0)],
                midpoint: (d.x0 + (i as f64 + 0.5) * hx, d.y0),
                length: hx,
                cell: self.cell_index(f, i, 0),
            });
        }
        for j in 0..ny {
            edges.push(BoundaryEdge {
                side: Side::Right,
                nodes: [self.node_index(f, nx, j), self.node_index(f, nx, j + 1)],
                midpoint: (d.x1, d.y0 + (j as f64 + 0.5) * hy),
                length: hy,
                cell: self.cell_index(f, nx - 1, j),
            });
        }
        for i in 0..nx {
            edges.push(BoundaryEdge {
                side: Side::Top,
                nodes: [self.node_index(f, i, ny), self.node_index(f, i + 1, ny)],
                midpoint: (d.x0 + (i as f64 + 0.5) * hx, d.y1),
                length: hx,
                cell: self.cell_index(f, i, ny - 1),
            });
        }
        for j in 0..ny {
            edges.push(BoundaryEdge {
                side: Side::Left,
                nodes: [self.node_index(f, 0, j), self.node_index(f, 0, j + 1)],
                midpoint: (d.x0, d.y0 + (j as f64 + 0.5) * hy),
                length: hy,
                cell: self.cell_index(f, 0, j),
            });
        }
        edges
    }

    /// Clamped `(2k+1)²` box of coarse cells around `ell`.
    pub fn patch_box(&self, ell: usize, k: usize) -> CellBox {
        let (nx, ny) = self.coarse_cells;
        let (cx, cy) = self.cell_ij(Level::Coarse, ell);
        CellBox {
            x0: cx.saturating_sub(k),
            x1: (cx + k).min(nx - 1),
            y0: cy.saturating_sub(k),
            y1: (cy + k).min(ny - 1),
        }
    }

    /// Builds the k-layer patch around coarse cell `ell`.
    pub fn build_patch(&self, ell: usize, k: usize, bc: &BoundarySpec) -> Result<Patch> {
        if ell >= self.n_cells(Level::Coarse) {
            return invalid(format!("coarse cell {ell} out of range"));
        }
        let cell_box = self.patch_box(ell, k);

        let mut coarse_cell_set = Vec::new();
        for j in cell_box.y0..=cell_box.y1 {
            for i in cell_box.x0..=cell_box.x1 {
                coarse_cell_set.push(self.cell_index(Level::Coarse, i, j));
            }
        }

        let mut active_coarse_nodes = Vec::new();
        for j in cell_box.y0..=cell_box.y1 + 1 {
            for i in cell_box.x0..=cell_box.x1 + 1 {
                let node = self.node_index(Level::Coarse, i, j);
                if !self.is_dirichlet(Level::Coarse, node, bc) {
                    active_coarse_nodes.push(node);
                }
            }
        }

        // Box sides that lie inside the domain carry homogeneous conditions.
        let r = self.refine;
        let (fx0, fx1) = (cell_box.x0 * r, (cell_box.x1 + 1) * r);
        let (fy0, fy1) = (cell_box.y0 * r, (cell_box.y1 + 1) * r);
        let cut_left = fx0 > 0;
        let cut_right = fx1 < self.nx(Level::Fine);
        let cut_bottom = fy0 > 0;
        let cut_top = fy1 < self.ny(Level::Fine);
        let mut active_fine_nodes = Vec::new();
        for j in fy0..=fy1 {
            if (j == fy0 && cut_bottom) || (j == fy1 && cut_top) {
                continue;
            }
            for i in fx0..=fx1 {
                if (i == fx0 && cut_left) || (i == fx1 && cut_right) {
                    continue;
                }
                let node = self.node_index(Level::Fine, i, j);
                if !self.is_dirichlet(Level::Fine, node, bc) {
                    active_fine_nodes.push(node);
                }
            }
        }

        let c = self.cell_nodes(Level::Coarse, ell);
        Ok(Patch {
            ell,
            k,
            cell_box,
            coarse_cell_set,
            active_coarse_nodes,
            active_fine_nodes,
            element_coarse_nodes: [c[0], c[1], c[3], c[2]],
        })
    }
}

/// Inclusive coarse-cell index ranges of a patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellBox {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

/// k-layer coarse neighbourhood of a coarse cell together with its active
/// node index lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub ell: usize,
    pub k: usize,
    pub cell_box: CellBox,
    /// Coarse cells of the patch, ascending.
    pub coarse_cell_set: Vec<usize>,
    /// Coarse nodes in the closed patch that are not Dirichlet nodes.
    pub active_coarse_nodes: Vec<usize>,
    /// Fine nodes in the closed patch minus those on interior patch sides
    /// and minus Dirichlet nodes.
    pub active_fine_nodes: Vec<usize>,
    /// Coarse nodes of the element `ell`, ascending.
    pub element_coarse_nodes: [usize; 4],
}

impl Patch {
    pub fn covers_domain(&self, mesh: &TwoScaleMesh) -> bool {
        self.coarse_cell_set.len() == mesh.n_cells(Level::Coarse)
    }
}
