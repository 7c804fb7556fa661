//! Structured simplicial meshes on the unit interval and unit square.
//!
//! Two-dimensional meshes split every square cell of a `2^L x 2^L` grid into two
//! triangles along the diagonal from `(x, y)` to `(x + H, y + H)`
//! (Friedrichs–Keller). With a fixed diagonal direction, refining a level-`L` mesh
//! gives exactly the level-`L+1` mesh, so every level nests. A triangular hole
//! whose edges follow grid lines or the diagonal direction is removed
//! consistently on all levels.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    Robin,
    /// Natural (homogeneous Neumann) boundary.
    None,
}

impl BoundaryTag {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Dirichlet => "DIRICHLET",
            BoundaryTag::Robin => "ROBIN",
            BoundaryTag::None => "NONE",
        }
    }

    fn rank(self) -> u8 {
        match self {
            BoundaryTag::Dirichlet => 2,
            BoundaryTag::Robin => 1,
            BoundaryTag::None => 0,
        }
    }
}

/// Geometry and boundary partition of the computational domain.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainSpec {
    Interval {
        left: BoundaryTag,
        right: BoundaryTag,
    },
    Square {
        outer: BoundaryTag,
    },
    /// Unit square minus a closed triangle given by its three vertices.
    SquareWithHole {
        outer: BoundaryTag,
        hole: [[f64; 2]; 3],
        hole_tag: BoundaryTag,
    },
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Checks that the hole (if any) is a union of grid triangles on level `level`.
    pub fn validate(&self, level: u32) -> Result<()> {
        let DomainSpec::SquareWithHole { hole, .. } = self else {
            return Ok(());
        };
        let n = (1u64 << level) as f64;
        let bad = |reason: String| Error::UnrepresentableHole { level, reason };
        let mut lattice = [[0i64; 2]; 3];
        for (k, v) in hole.iter().enumerate() {
            for c in 0..2 {
                let s = v[c] * n;
                let r = s.round();
                if (s - r).abs() > 1e-9 {
                    return Err(bad(format!(
                        "vertex ({}, {}) is not on the grid of width 2^-{level}",
                        v[0], v[1]
                    )));
                }
                lattice[k][c] = r as i64;
                if r < 1.0 || r > n - 1.0 {
                    return Err(bad(format!(
                        "vertex ({}, {}) is not strictly inside the unit square",
                        v[0], v[1]
                    )));
                }
            }
        }
        let area2 = (lattice[1][0] - lattice[0][0]) * (lattice[2][1] - lattice[0][1])
            - (lattice[2][0] - lattice[0][0]) * (lattice[1][1] - lattice[0][1]);
        if area2 == 0 {
            return Err(bad("degenerate triangle".into()));
        }
        for k in 0..3 {
            let a = lattice[k];
            let b = lattice[(k + 1) % 3];
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            if !(dx == 0 || dy == 0 || dx == dy) {
                return Err(bad(format!(
                    "edge direction ({dx}, {dy}) is neither axis-aligned nor along the grid diagonal"
                )));
            }
        }
        Ok(())
    }

    fn removes(&self, p: [f64; 2]) -> bool {
        match self {
            DomainSpec::SquareWithHole { hole, .. } => strictly_inside(hole, p),
            _ => false,
        }
    }
}

fn strictly_inside(tri: &[[f64; 2]; 3], p: [f64; 2]) -> bool {
    let cross = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    };
    let s = cross(tri[0], tri[1], tri[2]).signum();
    (0..3).all(|k| s * cross(tri[k], tri[(k + 1) % 3], p) > 1e-12)
}

/// A boundary facet: a point in 1D, an edge in 2D.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Facet {
    /// Node indices; in 1D both entries are equal.
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
    /// The unique element containing this facet.
    pub element: usize,
}

/// Node-to-element and element-to-element (vertex sharing) tables.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    pub node_elements: Vec<Vec<usize>>,
    pub element_neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn build(num_nodes: usize, elements: &[usize], nodes_per_element: usize) -> Self {
        let nelem = elements.len() / nodes_per_element;
        let mut node_elements = vec![Vec::new(); num_nodes];
        for e in 0..nelem {
            for &v in &elements[e * nodes_per_element..(e + 1) * nodes_per_element] {
                node_elements[v].push(e);
            }
        }
        let element_neighbors = (0..nelem)
            .map(|e| {
                let mut nb: Vec<usize> = elements[e * nodes_per_element..(e + 1) * nodes_per_element]
                    .iter()
                    .flat_map(|&v| node_elements[v].iter().copied())
                    .filter(|&f| f != e)
                    .collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect();
        Self {
            node_elements,
            element_neighbors,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    level: u32,
    coords: Vec<[f64; 2]>,
    elements: Vec<usize>,
    facets: Vec<Facet>,
    node_tags: Vec<Option<BoundaryTag>>,
    adjacency: Adjacency,
    grid_elements: Vec<usize>,
    grid_nodes: Vec<usize>,
}

const ABSENT: usize = usize::MAX;

impl Mesh {
    /// Uniform mesh of width `2^-level` on the given domain.
    pub fn build(domain: &DomainSpec, level: u32) -> Result<Self> {
        domain.validate(level)?;
        match domain {
            DomainSpec::Interval { left, right } => Ok(Self::interval(level, *left, *right)),
            DomainSpec::Square { outer } => Ok(Self::square(level, domain, *outer, *outer)),
            DomainSpec::SquareWithHole {
                outer, hole_tag, ..
            } => Ok(Self::square(level, domain, *outer, *hole_tag)),
        }
    }

    fn interval(level: u32, left: BoundaryTag, right: BoundaryTag) -> Self {
        let n = 1usize << level;
        let coords = (0..=n).map(|i| [i as f64 / n as f64, 0.0]).collect();
        let elements: Vec<usize> = (0..n).flat_map(|i| [i, i + 1]).collect();
        let facets = vec![
            Facet {
                nodes: [0, 0],
                tag: left,
                element: 0,
            },
            Facet {
                nodes: [n, n],
                tag: right,
                element: n - 1,
            },
        ];
        Self::finish(1, level, coords, elements, facets, (0..n).collect(), (0..=n).collect())
    }

    fn square(level: u32, domain: &DomainSpec, outer: BoundaryTag, inner: BoundaryTag) -> Self {
        let n = 1usize << level;
        let h = 1.0 / n as f64;
        let gnode = |i: usize, j: usize| j * (n + 1) + i;
        let mut grid_node_used = vec![false; (n + 1) * (n + 1)];
        let mut raw = Vec::new();
        let mut grid_elements = vec![ABSENT; 2 * n * n];
        for j in 0..n {
            for i in 0..n {
                let tris = [
                    [gnode(i, j), gnode(i + 1, j), gnode(i + 1, j + 1)],
                    [gnode(i, j), gnode(i + 1, j + 1), gnode(i, j + 1)],
                ];
                for (half, tri) in tris.iter().enumerate() {
                    let centroid = {
                        let (mut cx, mut cy) = (0.0, 0.0);
                        for &g in tri {
                            cx += (g % (n + 1)) as f64 * h;
                            cy += (g / (n + 1)) as f64 * h;
                        }
                        [cx / 3.0, cy / 3.0]
                    };
                    if domain.removes(centroid) {
                        continue;
                    }
                    grid_elements[2 * (j * n + i) + half] = raw.len();
                    raw.push(*tri);
                    for &g in tri {
                        grid_node_used[g] = true;
                    }
                }
            }
        }
        let mut grid_to_node = vec![ABSENT; grid_node_used.len()];
        let mut coords = Vec::new();
        for (g, &used) in grid_node_used.iter().enumerate() {
            if used {
                grid_to_node[g] = coords.len();
                coords.push([(g % (n + 1)) as f64 * h, (g / (n + 1)) as f64 * h]);
            }
        }
        let elements: Vec<usize> = raw.iter().flat_map(|t| t.map(|g| grid_to_node[g])).collect();

        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in elements.chunks(3) {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let on_outer = |p: [f64; 2], q: [f64; 2]| {
            (p[0] == 0.0 && q[0] == 0.0)
                || (p[0] == 1.0 && q[0] == 1.0)
                || (p[1] == 0.0 && q[1] == 0.0)
                || (p[1] == 1.0 && q[1] == 1.0)
        };
        let mut facets = Vec::new();
        for (e, t) in elements.chunks(3).enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if edge_count[&(a.min(b), a.max(b))] == 1 {
                    let tag = if on_outer(coords[a], coords[b]) {
                        outer
                    } else {
                        inner
                    };
                    facets.push(Facet {
                        nodes: [a, b],
                        tag,
                        element: e,
                    });
                }
            }
        }
        Self::finish(2, level, coords, elements, facets, grid_elements, grid_to_node)
    }

    fn finish(
        dim: usize,
        level: u32,
        coords: Vec<[f64; 2]>,
        elements: Vec<usize>,
        facets: Vec<Facet>,
        grid_elements: Vec<usize>,
        grid_nodes: Vec<usize>,
    ) -> Self {
        let mut node_tags: Vec<Option<BoundaryTag>> = vec![None; coords.len()];
        for f in &facets {
            for &v in &f.nodes[..dim] {
                let cur = node_tags[v];
                if cur.map_or(true, |c| f.tag.rank() > c.rank()) {
                    node_tags[v] = Some(f.tag);
                }
            }
        }
        let adjacency = Adjacency::build(coords.len(), &elements, dim + 1);
        Self {
            dim,
            level,
            coords,
            elements,
            facets,
            node_tags,
            adjacency,
            grid_elements,
            grid_nodes,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Mesh width `2^-level`.
    pub fn width(&self) -> f64 {
        1.0 / (1u64 << self.level) as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len() / (self.dim + 1)
    }

    pub fn nodes_per_element(&self) -> usize {
        self.dim + 1
    }

    pub fn point(&self, node: usize) -> [f64; 2] {
        self.coords[node]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.elements[e * k..(e + 1) * k]
    }

    pub fn element_points(&self, e: usize) -> Vec<[f64; 2]> {
        self.element(e).iter().map(|&v| self.coords[v]).collect()
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let nodes = self.element(e);
        let k = nodes.len() as f64;
        let (mut x, mut y) = (0.0, 0.0);
        for &v in nodes {
            x += self.coords[v][0];
            y += self.coords[v][1];
        }
        [x / k, y / k]
    }

    /// Length (1D) or area (2D) of an element.
    pub fn measure(&self, e: usize) -> f64 {
        let p = self.element_points(e);
        match self.dim {
            1 => (p[1][0] - p[0][0]).abs(),
            _ => 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])),
        }
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn facet_nodes<'a>(&self, f: &'a Facet) -> &'a [usize] {
        &f.nodes[..self.dim]
    }

    /// Boundary tag of a node, `None` for interior nodes. Dirichlet dominates Robin.
    pub fn node_tag(&self, node: usize) -> Option<BoundaryTag> {
        self.node_tags[node]
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.node_tags[node].is_some()
    }

    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&v| self.node_tags[v] == Some(BoundaryTag::Dirichlet))
            .collect()
    }

    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&v| self.node_tags[v] != Some(BoundaryTag::Dirichlet))
            .collect()
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn node_elements(&self, node: usize) -> &[usize] {
        &self.adjacency.node_elements[node]
    }

    pub fn element_neighbors(&self, e: usize) -> &[usize] {
        &self.adjacency.element_neighbors[e]
    }

    /// The element containing `p` in its interior (points on element boundaries
    /// resolve to one of the adjacent grid cells).
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let n = 1usize << self.level;
        let cell = |x: f64| ((x * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
        let idx = match self.dim {
            1 => cell(p[0]),
            _ => {
                let (i, j) = (cell(p[0]), cell(p[1]));
                let lx = p[0] * n as f64 - i as f64;
                let ly = p[1] * n as f64 - j as f64;
                2 * (j * n + i) + usize::from(ly >= lx)
            }
        };
        match self.grid_elements.get(idx) {
            Some(&e) if e != ABSENT => Some(e),
            _ => None,
        }
    }

    /// The mesh node located at `p`, if any.
    pub fn node_at(&self, p: [f64; 2]) -> Option<usize> {
        let n = (1usize << self.level) as f64;
        let snap = |x: f64| {
            let s = x * n;
            let r = s.round();
            ((s - r).abs() < 1e-9 && r >= 0.0 && r <= n).then_some(r as usize)
        };
        let idx = match self.dim {
            1 => snap(p[0])?,
            _ => snap(p[1])? * (n as usize + 1) + snap(p[0])?,
        };
        match self.grid_nodes.get(idx) {
            Some(&v) if v != ABSENT => Some(v),
            _ => None,
        }
    }

    /// Barycentric coordinates of `p` with respect to element `e`.
    pub fn barycentric(&self, e: usize, p: [f64; 2]) -> Vec<f64> {
        let q = self.element_points(e);
        match self.dim {
            1 => {
                let t = (p[0] - q[0][0]) / (q[1][0] - q[0][0]);
                vec![1.0 - t, t]
            }
            _ => {
                let det = (q[1][0] - q[0][0]) * (q[2][1] - q[0][1]) - (q[2][0] - q[0][0]) * (q[1][1] - q[0][1]);
                let l1 = ((p[0] - q[0][0]) * (q[2][1] - q[0][1]) - (q[2][0] - q[0][0]) * (p[1] - q[0][1])) / det;
                let l2 = ((q[1][0] - q[0][0]) * (p[1] - q[0][1]) - (p[0] - q[0][0]) * (q[1][1] - q[0][1])) / det;
                vec![1.0 - l1 - l2, l1, l2]
            }
        }
    }

    /// Plain-text dump: header `d nnodes nelems`, node coordinates, element node
    /// indices, then boundary facets as node indices followed by the tag.
    pub fn write_dump(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.dim, self.num_nodes(), self.num_elements())?;
        for c in &self.coords {
            match self.dim {
                1 => writeln!(w, "{:.17e}", c[0])?,
                _ => writeln!(w, "{:.17e} {:.17e}", c[0], c[1])?,
            }
        }
        for e in 0..self.num_elements() {
            let s: Vec<String> = self.element(e).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", s.join(" "))?;
        }
        for f in &self.facets {
            let s: Vec<String> = self.facet_nodes(f).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{} {}", s.join(" "), f.tag.name())?;
        }
        Ok(())
    }
}

/// Nested coarse/fine mesh pair obtained by uniform red refinement.
#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    pub coarse: Mesh,
    pub fine: Mesh,
    children: Vec<Vec<usize>>,
    parent: Vec<usize>,
    coarse_to_fine: Vec<usize>,
}

impl MeshHierarchy {
    /// Builds coarse level `coarse_level` and fine level `fine_level`.
    ///
    /// `fine_level == coarse_level` is accepted and yields the trivial hierarchy
    /// used for identity checks.
    pub fn build(domain: &DomainSpec, coarse_level: u32, fine_level: u32) -> Result<Self> {
        if fine_level < coarse_level || fine_level > 14 {
            return Err(Error::InvalidLevels {
                coarse: coarse_level,
                fine: fine_level,
            });
        }
        if domain.dim() == 2 && fine_level > 11 {
            return Err(Error::InvalidLevels {
                coarse: coarse_level,
                fine: fine_level,
            });
        }
        let coarse = Mesh::build(domain, coarse_level)?;
        let fine = Mesh::build(domain, fine_level)?;
        let mut children = vec![Vec::new(); coarse.num_elements()];
        let mut parent = Vec::with_capacity(fine.num_elements());
        for e in 0..fine.num_elements() {
            let t = coarse
                .locate(fine.centroid(e))
                .expect("fine element lies inside a coarse element");
            parent.push(t);
            children[t].push(e);
        }
        let coarse_to_fine = (0..coarse.num_nodes())
            .map(|z| fine.node_at(coarse.point(z)).expect("coarse nodes are fine nodes"))
            .collect();
        Ok(Self {
            coarse,
            fine,
            children,
            parent,
            coarse_to_fine,
        })
    }

    /// Coarse width H.
    pub fn coarse_width(&self) -> f64 {
        self.coarse.width()
    }

    /// Fine width h.
    pub fn fine_width(&self) -> f64 {
        self.fine.width()
    }

    pub fn children(&self, coarse_element: usize) -> &[usize] {
        &self.children[coarse_element]
    }

    pub fn parent(&self, fine_element: usize) -> usize {
        self.parent[fine_element]
    }

    pub fn fine_node_of(&self, coarse_node: usize) -> usize {
        self.coarse_to_fine[coarse_node]
    }

    /// Sorted fine nodes of the fine elements inside a coarse element.
    pub fn fine_nodes_of_element(&self, coarse_element: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.children[coarse_element]
            .iter()
            .flat_map(|&c| self.fine.element(c).iter().copied())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// The ℓ-th order element patch of coarse element `t`.
    pub fn element_patch(&self, t: usize, order: usize) -> Patch {
        Patch::build(self, t, order)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchBoundary {
    /// Cut through the interior of the domain; correctors vanish there.
    Artificial,
    /// Part of the physical boundary, carrying its tag.
    True(BoundaryTag),
}

/// Element patch Ω_{T,ℓ}: coarse element `T` plus ℓ layers of vertex neighbours.
#[derive(Clone, Debug)]
pub struct Patch {
    pub element: usize,
    pub order: usize,
    /// Sorted coarse element indices.
    pub coarse_elements: Vec<usize>,
    /// Sorted fine node indices covered by the patch.
    pub fine_nodes: Vec<usize>,
    /// Boundary classification of the patch's fine boundary nodes, sorted by node.
    pub boundary: Vec<(usize, PatchBoundary)>,
    /// Sorted fine nodes carrying corrector unknowns (not artificial, not Dirichlet).
    pub free_nodes: Vec<usize>,
    pub saturated: bool,
}

impl Patch {
    fn build(hier: &MeshHierarchy, t: usize, order: usize) -> Self {
        let coarse = &hier.coarse;
        let mut in_patch = vec![false; coarse.num_elements()];
        in_patch[t] = true;
        let mut frontier = vec![t];
        for _ in 0..order {
            let mut next = Vec::new();
            for &e in &frontier {
                for &nb in coarse.element_neighbors(e) {
                    if !in_patch[nb] {
                        in_patch[nb] = true;
                        next.push(nb);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        let coarse_elements: Vec<usize> = (0..coarse.num_elements()).filter(|&e| in_patch[e]).collect();
        let saturated = coarse_elements.len() == coarse.num_elements();
        let fine = &hier.fine;
        let mut fine_nodes: Vec<usize> = coarse_elements
            .iter()
            .flat_map(|&c| hier.children(c).iter().flat_map(|&f| fine.element(f).iter().copied()))
            .collect();
        fine_nodes.sort_unstable();
        fine_nodes.dedup();
        let mut boundary = Vec::new();
        let mut free_nodes = Vec::new();
        for &v in &fine_nodes {
            let artificial = fine.node_elements(v).iter().any(|&f| !in_patch[hier.parent(f)]);
            let kind = if artificial {
                Some(PatchBoundary::Artificial)
            } else {
                fine.node_tag(v).map(PatchBoundary::True)
            };
            match kind {
                Some(k) => {
                    boundary.push((v, k));
                    if k != PatchBoundary::Artificial && k != PatchBoundary::True(BoundaryTag::Dirichlet) {
                        free_nodes.push(v);
                    }
                }
                None => free_nodes.push(v),
            }
        }
        Self {
            element: t,
            order,
            coarse_elements,
            fine_nodes,
            boundary,
            free_nodes,
            saturated,
        }
    }

    pub fn contains_coarse(&self, e: usize) -> bool {
        self.coarse_elements.binary_search(&e).is_ok()
    }

    pub fn boundary_kind(&self, node: usize) -> Option<PatchBoundary> {
        self.boundary
            .binary_search_by_key(&node, |&(v, _)| v)
            .ok()
            .map(|k| self.boundary[k].1)
    }
}
