use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementOrder {
    Linear,
    Quadratic,
}

impl ElementOrder {
    pub fn from_degree(degree: u32) -> Result<Self> {
        match degree {
            1 => Ok(Self::Linear),
            2 => Ok(Self::Quadratic),
            d => Err(invalid(format!("unsupported element order {d}"))),
        }
    }

    pub fn degree(self) -> u32 {
        match self {
            Self::Linear => 1,
            Self::Quadratic => 2,
        }
    }

    pub fn nodes_per_cell(self) -> usize {
        match self {
            Self::Linear => 3,
            Self::Quadratic => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// Square of side `length` centred at the origin.
    pub fn centred_square(length: f64) -> Self {
        let h = 0.5 * length;
        Self::new(-h, -h, h, h)
    }

    pub fn unit() -> Self {
        Self::new(0.0, 0.0, 1.0, 1.0)
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

    pub fn centre(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }
}

/// Boundary edge of a mesh, endpoints ordered anticlockwise around the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub side: Side,
    /// `[start, end, mid]`; `mid` is unused for linear elements.
    pub nodes: [usize; 3],
}

/// Structured "crossed" triangulation: every grid square is split into four triangles
/// through its centre node, which makes the node set invariant under quarter turns
/// about the centre of a square domain.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 6]>,
    pub order: ElementOrder,
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
    /// Integer lattice key of each node in units of a quarter grid step.
    pub keys: Vec<[i64; 2]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Boundary nodes anticlockwise from the bottom-left corner.
    pub boundary_ring: Vec<usize>,
    key_index: HashMap<[i64; 2], usize>,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        &self.cells[c][..self.order.nodes_per_cell()]
    }

    pub fn cell_vertices(&self, c: usize) -> [[f64; 2]; 3] {
        let n = &self.cells[c];
        [self.nodes[n[0]], self.nodes[n[1]], self.nodes[n[2]]]
    }

    /// Twice the signed area of cell `c`.
    pub fn cell_area2(&self, c: usize) -> f64 {
        let [p0, p1, p2] = self.cell_vertices(c);
        (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
    }

    pub fn node_by_key(&self, key: [i64; 2]) -> Option<usize> {
        self.key_index.get(&key).copied()
    }

    pub fn nodes_on_side(&self, side: Side) -> Vec<usize> {
        let (kx_max, ky_max) = (4 * self.nx as i64, 4 * self.ny as i64);
        let mut out: Vec<usize> = (0..self.n_nodes())
            .filter(|&i| {
                let [kx, ky] = self.keys[i];
                match side {
                    Side::Bottom => ky == 0,
                    Side::Top => ky == ky_max,
                    Side::Left => kx == 0,
                    Side::Right => kx == kx_max,
                }
            })
            .collect();
        out.sort_by_key(|&i| self.keys[i]);
        out
    }

    /// Short content hash of nodes and connectivity.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.order.degree() as u64).to_le_bytes());
        for p in &self.nodes {
            h.update(p[0].to_le_bytes());
            h.update(p[1].to_le_bytes());
        }
        for c in &self.cells {
            for &n in c {
                h.update((n as u64).to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Replaces node coordinates through `map`, e.g. to bend the grid onto a
    /// quadrilateral. Orientation of every cell must be preserved.
    pub fn mapped(mut self, map: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        for p in &mut self.nodes {
            *p = map(*p);
        }
        for c in 0..self.n_cells() {
            if !(self.cell_area2(c) > 0.0) {
                return Err(invalid(format!("mapping inverts cell {c}")));
            }
        }
        Ok(self)
    }

    /// Locates `p` and returns the containing cell with barycentric coordinates.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let tol = 1e-12;
        let bary = |c: usize| {
            let [p0, p1, p2] = self.cell_vertices(c);
            let det = self.cell_area2(c);
            let l1 = ((p[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p[1] - p0[1])) / det;
            let l2 = ((p1[0] - p0[0]) * (p[1] - p0[1]) - (p[0] - p0[0]) * (p1[1] - p0[1])) / det;
            [1.0 - l1 - l2, l1, l2]
        };
        let inside = |l: &[f64; 3]| l.iter().all(|&v| v >= -tol);
        // fast path for the unmapped grid: four triangles per square, in creation order
        let r = &self.domain;
        let gx = (p[0] - r.x0) / r.width() * self.nx as f64;
        let gy = (p[1] - r.y0) / r.height() * self.ny as f64;
        if gx >= 0.0 && gy >= 0.0 && gx <= self.nx as f64 && gy <= self.ny as f64 {
            let i = (gx.floor() as usize).min(self.nx - 1);
            let j = (gy.floor() as usize).min(self.ny - 1);
            let first = 4 * (j * self.nx + i);
            for c in first..first + 4 {
                let l = bary(c);
                if inside(&l) {
                    return Some((c, l));
                }
            }
        }
        (0..self.n_cells()).find_map(|c| {
            let l = bary(c);
            inside(&l).then_some((c, l))
        })
    }
}

/// Crossed mesh with `divisions` squares per side of `domain`.
pub fn build_mesh(divisions: usize, order: ElementOrder, domain: Rect) -> Result<Mesh> {
    build_grid_mesh(divisions, divisions, order, domain)
}

pub fn build_grid_mesh(nx: usize, ny: usize, order: ElementOrder, domain: Rect) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(invalid("mesh needs at least one division per side"));
    }
    if !(domain.width() > 0.0 && domain.height() > 0.0) {
        return Err(invalid("empty mesh domain"));
    }
    let (nx_i, ny_i) = (nx as i64, ny as i64);

    // triangles as key triples; P2 midpoints are key averages
    let mut tri_keys: Vec<[[i64; 2]; 3]> = Vec::with_capacity(4 * nx * ny);
    for j in 0..ny_i {
        for i in 0..nx_i {
            let bl = [4 * i, 4 * j];
            let br = [4 * i + 4, 4 * j];
            let tr = [4 * i + 4, 4 * j + 4];
            let tl = [4 * i, 4 * j + 4];
            let c = [4 * i + 2, 4 * j + 2];
            tri_keys.extend_from_slice(&[[bl, br, c], [br, tr, c], [tr, tl, c], [tl, bl, c]]);
        }
    }
    let mid = |a: [i64; 2], b: [i64; 2]| [(a[0] + b[0]) / 2, (a[1] + b[1]) / 2];

    let mut all_keys: Vec<[i64; 2]> = Vec::new();
    for t in &tri_keys {
        all_keys.extend_from_slice(t);
        if order == ElementOrder::Quadratic {
            all_keys.push(mid(t[0], t[1]));
            all_keys.push(mid(t[1], t[2]));
            all_keys.push(mid(t[2], t[0]));
        }
    }
    // row-major numbering keeps the profile narrow
    all_keys.sort_by_key(|k| (k[1], k[0]));
    all_keys.dedup();
    let key_index: HashMap<[i64; 2], usize> =
        all_keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();

    // symmetric evaluation: the coordinate of key k is centre + half * (k - 2n) / (2n),
    // so mirrored keys produce exactly negated offsets
    let [cx, cy] = domain.centre();
    let (hx, hy) = (0.5 * domain.width(), 0.5 * domain.height());
    let nodes: Vec<[f64; 2]> = all_keys
        .iter()
        .map(|k| {
            [
                cx + hx * ((k[0] - 2 * nx_i) as f64 / (2 * nx_i) as f64),
                cy + hy * ((k[1] - 2 * ny_i) as f64 / (2 * ny_i) as f64),
            ]
        })
        .collect();

    let cells = tri_keys
        .iter()
        .map(|t| {
            let mut c = [usize::MAX; 6];
            for v in 0..3 {
                c[v] = key_index[&t[v]];
            }
            if order == ElementOrder::Quadratic {
                c[3] = key_index[&mid(t[0], t[1])];
                c[4] = key_index[&mid(t[1], t[2])];
                c[5] = key_index[&mid(t[2], t[0])];
            }
            c
        })
        .collect();

    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    let mut push_edge = |side, a: [i64; 2], b: [i64; 2]| {
        let m = if order == ElementOrder::Quadratic {
            key_index[&mid(a, b)]
        } else {
            usize::MAX
        };
        boundary_edges.push(BoundaryEdge {
            side,
            nodes: [key_index[&a], key_index[&b], m],
        });
    };
    for i in 0..nx_i {
        push_edge(Side::Bottom, [4 * i, 0], [4 * i + 4, 0]);
    }
    for j in 0..ny_i {
        push_edge(Side::Right, [4 * nx_i, 4 * j], [4 * nx_i, 4 * j + 4]);
    }
    for i in (0..nx_i).rev() {
        push_edge(Side::Top, [4 * i + 4, 4 * ny_i], [4 * i, 4 * ny_i]);
    }
    for j in (0..ny_i).rev() {
        push_edge(Side::Left, [0, 4 * j + 4], [0, 4 * j]);
    }
    let mut boundary_ring = Vec::new();
    for e in &boundary_edges {
        boundary_ring.push(e.nodes[0]);
        if order == ElementOrder::Quadratic {
            boundary_ring.push(e.nodes[2]);
        }
    }

    let mesh = Mesh {
        nodes,
        cells,
        order,
        domain,
        nx,
        ny,
        keys: all_keys,
        boundary_edges,
        boundary_ring,
        key_index,
    };
    for c in 0..mesh.n_cells() {
        debug_assert!(mesh.cell_area2(c) > 0.0);
    }
    Ok(mesh)
}

/// For every node of `inner` (built on a sub-rectangle with the same grid step),
/// the index of the coincident node of `outer`.
pub fn nested_node_map(outer: &Mesh, inner: &Mesh) -> Result<Vec<usize>> {
    if outer.order != inner.order {
        return Err(invalid("nested meshes must share the element order"));
    }
    let step_o = outer.domain.width() / outer.nx as f64;
    let step_i = inner.domain.width() / inner.nx as f64;
    if (step_o - step_i).abs() > 1e-12 * step_o {
        return Err(invalid("nested meshes must share the grid step"));
    }
    let ox = (inner.domain.x0 - outer.domain.x0) / step_o;
    let oy = (inner.domain.y0 - outer.domain.y0) / step_o;
    if (ox - ox.round()).abs() > 1e-9 || (oy - oy.round()).abs() > 1e-9 {
        return Err(invalid("inner window is not aligned with the outer grid"));
    }
    let off = [4 * ox.round() as i64, 4 * oy.round() as i64];
    inner
        .keys
        .iter()
        .map(|k| {
            outer
                .node_by_key([k[0] + off[0], k[1] + off[1]])
                .ok_or_else(|| invalid("inner window extends outside the outer mesh"))
        })
        .collect()
}
