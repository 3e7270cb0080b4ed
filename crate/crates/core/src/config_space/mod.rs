//! Multi-particle configuration spaces.
//!
//! A configuration of `N` fermions is a set of `N` distinct single-particle
//! sites. It is stored in canonical form (sites sorted in strictly
//! decreasing lexicographic order), which on the one-dimensional lattice is
//! the positive sector `x_1 > x_2 > ... > x_N`. The fermionic Laplacian is
//! the graph Laplacian of the induced graph on these canonical points.

mod ball;
mod geometry;
mod separability;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ball::{
    boundary_constant, canonical_decomposition, classify_ball, edge_boundary, enumerate_ball,
    factorization_check, projection, set_distance, Ball, BallClass, BallMetric, Decomposition,
};
pub use geometry::{Geometry, GraphGeometry, LatticeBox};
pub use separability::{find_separability_witness, symmetrized_distance, SeparabilityWitness, WitnessDirection};

/// A single-particle site: integer coordinates on `Z^d`, or a one-element
/// vertex id on an explicit graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        Site(coords.into())
    }

    pub fn scalar(x: i64) -> Self {
        Site(vec![x])
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            write!(f, "{}", self.0[0])
        } else {
            write!(f, "(")?;
            for (i, c) in self.0.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")
        }
    }
}

/// An `N`-particle fermionic configuration in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Site>", into = "Vec<Site>")]
pub struct Configuration {
    sites: Vec<Site>,
}

impl Configuration {
    /// Canonicalizes `sites`. Fails on repeated sites, mixed coordinate
    /// dimensions, or an empty list.
    pub fn new(mut sites: Vec<Site>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidConfiguration("configuration has no particles".into()));
        }
        let d = sites[0].dim();
        if d == 0 || sites.iter().any(|s| s.dim() != d) {
            return Err(Error::DimensionMismatch(
                "all sites of a configuration need the same nonzero dimension".into(),
            ));
        }
        sites.sort_unstable_by(|a, b| b.cmp(a));
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfiguration(format!(
                "sites are not pairwise distinct: {}",
                DisplaySites(&sites)
            )));
        }
        Ok(Configuration { sites })
    }

    /// Builds a configuration on the one-dimensional lattice.
    pub fn from_1d(positions: &[i64]) -> Result<Self> {
        Self::new(positions.iter().map(|&x| Site::scalar(x)).collect())
    }

    pub(crate) fn from_canonical(sites: Vec<Site>) -> Self {
        debug_assert!(sites.windows(2).all(|w| w[0] > w[1]));
        Configuration { sites }
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn n_particles(&self) -> usize {
        self.sites.len()
    }

    pub fn site_dim(&self) -> usize {
        self.sites[0].dim()
    }

    pub fn contains_site(&self, s: &Site) -> bool {
        self.sites.iter().any(|x| x == s)
    }

    /// Sub-configuration formed by the particles at the given canonical
    /// indices.
    pub fn select(&self, indices: &[usize]) -> Result<Configuration> {
        Configuration::new(indices.iter().map(|&i| self.sites[i].clone()).collect())
    }

    /// Union of two configurations with disjoint supports.
    pub fn union(&self, other: &Configuration) -> Result<Configuration> {
        let mut sites = self.sites.clone();
        sites.extend(other.sites.iter().cloned());
        Configuration::new(sites)
    }

    pub fn occupation(&self) -> OccupationMap {
        OccupationMap::from_sites(&self.sites)
    }
}

impl TryFrom<Vec<Site>> for Configuration {
    type Error = Error;

    fn try_from(sites: Vec<Site>) -> Result<Self> {
        Configuration::new(sites)
    }
}

impl From<Configuration> for Vec<Site> {
    fn from(c: Configuration) -> Self {
        c.sites
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        DisplaySites(&self.sites).fmt(f)
    }
}

struct DisplaySites<'a>(&'a [Site]);

impl fmt::Display for DisplaySites<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "}}")
    }
}

/// Occupation numbers `n_x(y) = #{j : x_j = y}` of a tuple of sites.
///
/// Built from raw tuples so that distinguishable-particle configurations
/// (with repeated sites) are representable; for a fermionic configuration
/// every count is at most one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccupationMap {
    counts: BTreeMap<Site, u32>,
}

impl OccupationMap {
    pub fn from_sites(sites: &[Site]) -> Self {
        let mut counts = BTreeMap::new();
        for s in sites {
            *counts.entry(s.clone()).or_insert(0) += 1;
        }
        OccupationMap { counts }
    }

    pub fn get(&self, s: &Site) -> u32 {
        self.counts.get(s).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Site, u32)> {
        self.counts.iter().map(|(s, &n)| (s, n))
    }

    pub fn is_fermionic(&self) -> bool {
        self.counts.values().all(|&n| n <= 1)
    }
}

/// Max-distance between configurations:
/// `min over permutations of max_j d(x_{pi(j)}, y_j)`.
///
/// On the one-dimensional lattice this equals the coordinate-wise maximum of
/// the canonically ordered tuples.
pub fn rho(geometry: &Geometry, x: &Configuration, y: &Configuration) -> Result<u64> {
    if x.n_particles() != y.n_particles() {
        return Err(Error::DimensionMismatch(format!(
            "rho between {}-particle and {}-particle configurations",
            x.n_particles(),
            y.n_particles()
        )));
    }
    geometry.check_site_dim(x.site_dim())?;
    geometry.check_site_dim(y.site_dim())?;
    Ok(geometry.rho_unchecked(x.sites(), y.sites()))
}

/// Largest pairwise single-particle distance within a configuration.
pub fn diam(geometry: &Geometry, x: &Configuration) -> u64 {
    let s = x.sites();
    let mut best = 0;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            best = best.max(geometry.site_distance(&s[i], &s[j]));
        }
    }
    best
}

/// Minimal single-particle distance between two configurations.
pub fn configuration_distance(geometry: &Geometry, a: &Configuration, b: &Configuration) -> u64 {
    let mut best = u64::MAX;
    for s in a.sites() {
        for t in b.sites() {
            best = best.min(geometry.site_distance(s, t));
        }
    }
    best
}

/// Smallest bottleneck over all bijections between two equal-length site
/// lists.
pub(crate) fn bottleneck_matching(
    x: &[Site],
    y: &[Site],
    dist: impl Fn(&Site, &Site) -> u64,
) -> u64 {
    let n = x.len();
    let cost: Vec<Vec<u64>> = x.iter().map(|a| y.iter().map(|b| dist(a, b)).collect()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = u64::MAX;
    // Heap's algorithm over all permutations; N is small.
    let mut c = vec![0usize; n];
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[i][j]).max().unwrap_or(0);
    best = best.min(eval(&perm));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(xs: &[i64]) -> Configuration {
        Configuration::from_1d(xs).unwrap()
    }

    #[test]
    fn canonical_order_is_strictly_decreasing() {
        let c = cfg(&[0, 5, 3]);
        assert_eq!(c.sites(), &[Site::scalar(5), Site::scalar(3), Site::scalar(0)]);
        assert!(Configuration::from_1d(&[1, 1]).is_err());
        assert!(Configuration::new(vec![Site::scalar(1), Site::new(vec![0, 0])]).is_err());
    }

    #[test]
    fn rho_examples() {
        let g = Geometry::lattice(1);
        assert_eq!(rho(&g, &cfg(&[5, 0]), &cfg(&[4, 2])).unwrap(), 2);
        assert_eq!(rho(&g, &cfg(&[5, 0]), &cfg(&[5, 0])).unwrap(), 0);
        assert_eq!(rho(&g, &cfg(&[0, 5]), &cfg(&[5, 0])).unwrap(), 0);
        assert!(matches!(
            rho(&g, &cfg(&[5, 0]), &cfg(&[1])),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn diam_examples() {
        let g = Geometry::lattice(1);
        assert_eq!(diam(&g, &cfg(&[0, 10, 20])), 20);
        assert_eq!(diam(&g, &cfg(&[7])), 0);
        assert_eq!(diam(&g, &cfg(&[0, 1])), 1);
    }

    #[test]
    fn occupation_numbers() {
        let occ = OccupationMap::from_sites(&[Site::scalar(2), Site::scalar(2), Site::scalar(5)]);
        assert_eq!(occ.get(&Site::scalar(2)), 2);
        assert_eq!(occ.get(&Site::scalar(5)), 1);
        assert_eq!(occ.get(&Site::scalar(0)), 0);
        assert_eq!(occ.total(), 3);
        assert!(!occ.is_fermionic());
        assert!(cfg(&[3, 1]).occupation().is_fermionic());
    }

    #[test]
    fn configuration_json_roundtrip_canonicalizes() {
        let c: Configuration = serde_json::from_str("[[0],[5]]").unwrap();
        assert_eq!(c, cfg(&[5, 0]));
        assert_eq!(serde_json::to_string(&c).unwrap(), "[[5],[0]]");
        assert!(serde_json::from_str::<Configuration>("[[1],[1]]").is_err());
    }
}
