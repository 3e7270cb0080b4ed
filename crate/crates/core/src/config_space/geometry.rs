use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{bottleneck_matching, Site};
use crate::error::{Error, Result};

/// Single-particle geometry: the integer lattice `Z^d` or an explicit
/// finite connected graph.
///
/// On `Z^d` balls are cubes: the single-particle distance used for balls and
/// for the max-distance is the sup-norm, while hopping connects nearest
/// neighbours (`|x - y|_1 = 1`). For `d = 1` both notions coincide.
#[derive(Clone, Debug)]
pub enum Geometry {
    Lattice { dim: usize },
    Graph(Arc<GraphGeometry>),
}

impl Geometry {
    pub fn lattice(dim: usize) -> Self {
        assert!(dim > 0, "lattice dimension must be positive");
        Geometry::Lattice { dim }
    }

    pub fn graph(g: GraphGeometry) -> Self {
        Geometry::Graph(Arc::new(g))
    }

    /// Growth dimension `d` in `|B_L(x)| <= C_d L^d`.
    pub fn dim(&self) -> usize {
        match self {
            Geometry::Lattice { dim } => *dim,
            Geometry::Graph(g) => g.growth_dim,
        }
    }

    /// Number of integer coordinates of a site.
    pub fn site_dim(&self) -> usize {
        match self {
            Geometry::Lattice { dim } => *dim,
            Geometry::Graph(_) => 1,
        }
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self, Geometry::Lattice { .. })
    }

    pub fn growth_constant(&self) -> f64 {
        match self {
            Geometry::Lattice { dim } => 3f64.powi(*dim as i32),
            Geometry::Graph(g) => g.growth_constant,
        }
    }

    pub(crate) fn check_site_dim(&self, d: usize) -> Result<()> {
        if d != self.site_dim() {
            return Err(Error::DimensionMismatch(format!(
                "site has {d} coordinates, geometry expects {}",
                self.site_dim()
            )));
        }
        Ok(())
    }

    pub fn validate_site(&self, s: &Site) -> Result<()> {
        self.check_site_dim(s.dim())?;
        if let Geometry::Graph(g) = self {
            let v = s.0[0];
            if v < 0 || v as usize >= g.n_vertices() {
                return Err(Error::Geometry(format!("vertex {v} is not in the graph")));
            }
        }
        Ok(())
    }

    pub fn site_distance(&self, a: &Site, b: &Site) -> u64 {
        match self {
            Geometry::Lattice { .. } => a
                .0
                .iter()
                .zip(&b.0)
                .map(|(x, y)| x.abs_diff(*y))
                .max()
                .unwrap_or(0),
            Geometry::Graph(g) => g.distance(a.0[0] as usize, b.0[0] as usize) as u64,
        }
    }

    /// Sites adjacent to `a` (nearest neighbours).
    pub fn site_neighbors(&self, a: &Site) -> Vec<Site> {
        match self {
            Geometry::Lattice { dim } => {
                let mut out = Vec::with_capacity(2 * dim);
                for i in 0..*dim {
                    for step in [-1, 1] {
                        let mut c = a.0.clone();
                        c[i] += step;
                        out.push(Site(c));
                    }
                }
                out
            }
            Geometry::Graph(g) => g.adjacency[a.0[0] as usize]
                .iter()
                .map(|&v| Site::scalar(v as i64))
                .collect(),
        }
    }

    /// All sites within distance `radius` of `a`, in ascending order.
    pub fn site_ball(&self, a: &Site, radius: u64) -> Vec<Site> {
        match self {
            Geometry::Lattice { dim } => {
                let r = radius as i64;
                let mut out = vec![Vec::with_capacity(*dim)];
                for i in 0..*dim {
                    let mut next = Vec::with_capacity(out.len() * (2 * radius as usize + 1));
                    for prefix in &out {
                        for off in -r..=r {
                            let mut c: Vec<i64> = prefix.clone();
                            c.push(a.0[i] + off);
                            next.push(c);
                        }
                    }
                    out = next;
                }
                out.into_iter().map(Site).collect()
            }
            Geometry::Graph(g) => {
                let u = a.0[0] as usize;
                (0..g.n_vertices())
                    .filter(|&v| g.distance(u, v) as u64 <= radius)
                    .map(|v| Site::scalar(v as i64))
                    .collect()
            }
        }
    }

    /// Max-distance between two site tuples of equal length.
    pub(crate) fn rho_unchecked(&self, x: &[Site], y: &[Site]) -> u64 {
        match self {
            // Canonical order on Z^1 is sorted; sorted matching is optimal.
            Geometry::Lattice { dim: 1 } => x
                .iter()
                .zip(y)
                .map(|(a, b)| a.0[0].abs_diff(b.0[0]))
                .max()
                .unwrap_or(0),
            _ => bottleneck_matching(x, y, |a, b| self.site_distance(a, b)),
        }
    }
}

/// Explicit finite connected graph given by adjacency lists.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphGeometry {
    adjacency: Vec<Vec<usize>>,
    growth_dim: usize,
    #[serde(skip)]
    distances: Vec<Vec<u32>>,
    #[serde(skip)]
    growth_constant: f64,
}

impl GraphGeometry {
    /// Validates symmetry and connectivity, then precomputes all-pairs
    /// distances and the growth constant `C_d = max |B_L(x)| / L^d`.
    pub fn new(adjacency: Vec<Vec<usize>>, growth_dim: usize) -> Result<Self> {
        let n = adjacency.len();
        if n == 0 {
            return Err(Error::Geometry("graph has no vertices".into()));
        }
        if growth_dim == 0 {
            return Err(Error::Geometry("growth dimension must be positive".into()));
        }
        for (u, nbrs) in adjacency.iter().enumerate() {
            for &v in nbrs {
                if v >= n {
                    return Err(Error::Geometry(format!("edge {u}-{v} leaves the graph")));
                }
                if v == u {
                    return Err(Error::Geometry(format!("self-loop at {u}")));
                }
                if !adjacency[v].contains(&u) {
                    return Err(Error::Geometry(format!("edge {u}-{v} is not symmetric")));
                }
            }
        }
        let mut distances = vec![vec![u32::MAX; n]; n];
        for (s, row) in distances.iter_mut().enumerate() {
            row[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in &adjacency[u] {
                    if row[v] == u32::MAX {
                        row[v] = row[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if row.contains(&u32::MAX) {
                return Err(Error::Geometry("graph is not connected".into()));
            }
        }
        let mut growth_constant: f64 = 1.0;
        for row in &distances {
            let max_d = *row.iter().max().unwrap();
            for l in 1..=max_d.max(1) {
                let count = row.iter().filter(|&&d| d <= l).count() as f64;
                growth_constant = growth_constant.max(count / (l as f64).powi(growth_dim as i32));
            }
        }
        Ok(GraphGeometry { adjacency, growth_dim, distances, growth_constant })
    }

    /// Cycle graph on `n` vertices.
    pub fn cycle(n: usize) -> Result<Self> {
        let adjacency = (0..n).map(|i| vec![(i + n - 1) % n, (i + 1) % n]).collect();
        Self::new(adjacency, 1)
    }

    pub fn n_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn distance(&self, u: usize, v: usize) -> u32 {
        self.distances[u][v]
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }
}

/// Lattice parallelepiped `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch("box corners differ in dimension".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::Geometry("box has an empty side".into()));
        }
        Ok(LatticeBox { lo, hi })
    }

    pub fn interval(lo: i64, hi: i64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    /// Bounding box of a nonempty set of sites.
    pub fn bounding(sites: impl IntoIterator<Item = Site>) -> Option<Self> {
        let mut it = sites.into_iter();
        let first = it.next()?;
        let mut lo = first.0.clone();
        let mut hi = first.0;
        for s in it {
            for (i, c) in s.0.iter().enumerate() {
                lo[i] = lo[i].min(*c);
                hi[i] = hi[i].max(*c);
            }
        }
        Some(LatticeBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, s: &Site) -> bool {
        s.dim() == self.dim()
            && s.0.iter().zip(self.lo.iter().zip(&self.hi)).all(|(c, (l, h))| l <= c && c <= h)
    }

    /// Sup-norm diameter.
    pub fn diam(&self) -> u64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h.abs_diff(*l)).max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l + 1) as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Sites in lexicographic order.
    pub fn sites(&self) -> Vec<Site> {
        let mut out: Vec<Vec<i64>> = vec![Vec::new()];
        for i in 0..self.dim() {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (self.lo[i]..=self.hi[i]).map(move |c| {
                        let mut q = p.clone();
                        q.push(c);
                        q
                    })
                })
                .collect();
        }
        out.into_iter().map(Site).collect()
    }

    /// Whether the cube of radius `r` around `s` meets this box.
    pub fn meets_cube(&self, s: &Site, r: u64) -> bool {
        let r = r as i64;
        s.0.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(c, (l, h))| c + r >= *l && c - r <= *h)
    }
}
