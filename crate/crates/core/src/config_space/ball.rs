use std::collections::{BTreeSet, HashMap};

use serde::{Serialize, Serializer};

use super::{configuration_distance, diam, Configuration, Geometry, Site};
use crate::error::{Error, Result};
use crate::msa::ScalingParams;

/// Metric a ball is taken in. Lattice balls use the max-distance; on general
/// graphs the symmetrized max-distance over permutations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BallMetric {
    Max,
    Symmetrized,
}

/// A `rho`-ball `{y : rho(center, y) <= L}` in the fermionic sector,
/// together with its induced sector graph.
#[derive(Clone, Debug)]
pub struct Ball {
    geometry: Geometry,
    center: Configuration,
    radius: u64,
    members: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
    adjacency: Vec<Vec<usize>>,
    outer_degree: Vec<usize>,
}

impl Serialize for Ball {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            center: &'a Configuration,
            radius: u64,
            metric: BallMetric,
        }
        Repr { center: &self.center, radius: self.radius, metric: self.metric() }.serialize(s)
    }
}

impl Ball {
    pub fn new(geometry: &Geometry, center: Configuration, radius: u64) -> Result<Self> {
        for s in center.sites() {
            geometry.validate_site(s)?;
        }
        let members = enumerate_members(geometry, &center, radius);
        Ok(Self::from_members(geometry, center, radius, members))
    }

    fn from_members(
        geometry: &Geometry,
        center: Configuration,
        radius: u64,
        members: Vec<Configuration>,
    ) -> Self {
        let index: HashMap<Configuration, usize> =
            members.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        let mut adjacency = Vec::with_capacity(members.len());
        let mut outer_degree = Vec::with_capacity(members.len());
        for m in &members {
            let mut inner = Vec::new();
            let mut outer = 0;
            for nb in sector_neighbors(geometry, m) {
                match index.get(&nb) {
                    Some(&j) => inner.push(j),
                    None => outer += 1,
                }
            }
            inner.sort_unstable();
            adjacency.push(inner);
            outer_degree.push(outer);
        }
        Ball { geometry: geometry.clone(), center, radius, members, index, adjacency, outer_degree }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn center(&self) -> &Configuration {
        &self.center
    }

    pub fn radius(&self) -> u64 {
        self.radius
    }

    pub fn metric(&self) -> BallMetric {
        if self.geometry.is_lattice() {
            BallMetric::Max
        } else {
            BallMetric::Symmetrized
        }
    }

    pub fn n_particles(&self) -> usize {
        self.center.n_particles()
    }

    /// Members in ascending lexicographic order of their canonical form.
    pub fn members(&self) -> &[Configuration] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn index_of(&self, c: &Configuration) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn contains(&self, c: &Configuration) -> bool {
        self.index.contains_key(c)
    }

    pub fn center_index(&self) -> usize {
        self.index[&self.center]
    }

    /// Indices of sector neighbours of member `i` that lie inside the ball.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Induced degree of member `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Number of sector neighbours of member `i` outside the ball.
    pub fn outer_degree(&self, i: usize) -> usize {
        self.outer_degree[i]
    }

    /// Undirected internal edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            for &j in nbrs {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Inner boundary: members with a sector neighbour outside the ball.
    pub fn inner_boundary(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.outer_degree[i] > 0).collect()
    }

    /// `rho` from the center to member `i`.
    pub fn rho_from_center(&self, i: usize) -> u64 {
        self.geometry.rho_unchecked(self.center.sites(), self.members[i].sites())
    }

    pub fn rho_between(&self, i: usize, j: usize) -> u64 {
        self.geometry.rho_unchecked(self.members[i].sites(), self.members[j].sites())
    }

    /// Ball `B_r(c)` for a center inside this ball, reusing this geometry.
    pub fn sub_ball(&self, center: &Configuration, radius: u64) -> Result<Ball> {
        Ball::new(&self.geometry, center.clone(), radius)
    }
}

/// Enumerates `B_L(center)`.
pub fn enumerate_ball(geometry: &Geometry, center: &Configuration, radius: u64) -> Result<Ball> {
    Ball::new(geometry, center.clone(), radius)
}

/// Product of single-site balls, restricted to distinct sites,
/// canonicalized, deduplicated and sorted.
fn enumerate_members(geometry: &Geometry, center: &Configuration, radius: u64) -> Vec<Configuration> {
    let site_balls: Vec<Vec<Site>> =
        center.sites().iter().map(|s| geometry.site_ball(s, radius)).collect();
    let mut out = BTreeSet::new();
    let mut pick: Vec<usize> = vec![0; site_balls.len()];
    let mut tuple: Vec<Site> = Vec::with_capacity(site_balls.len());
    'outer: loop {
        tuple.clear();
        tuple.extend(pick.iter().zip(&site_balls).map(|(&k, b)| b[k].clone()));
        tuple.sort_unstable_by(|a, b| b.cmp(a));
        if tuple.windows(2).all(|w| w[0] != w[1]) {
            out.insert(Configuration::from_canonical(tuple.clone()));
        }
        for (p, b) in pick.iter_mut().zip(&site_balls).rev() {
            *p += 1;
            if *p < b.len() {
                continue 'outer;
            }
            *p = 0;
        }
        break;
    }
    out.into_iter().collect()
}

/// Configurations reachable from `x` by moving one particle to an adjacent
/// unoccupied site.
pub(crate) fn sector_neighbors(geometry: &Geometry, x: &Configuration) -> Vec<Configuration> {
    let mut out = Vec::new();
    for (i, s) in x.sites().iter().enumerate() {
        for t in geometry.site_neighbors(s) {
            if x.contains_site(&t) {
                continue;
            }
            let mut sites = x.sites().to_vec();
            sites[i] = t;
            sites.sort_unstable_by(|a, b| b.cmp(a));
            out.push(Configuration::from_canonical(sites));
        }
    }
    out
}

/// Edges `(x, y)` with `x` in `ball` and `y` in `ambient` but not in `ball`.
pub fn edge_boundary(ball: &Ball, ambient: &Ball) -> Result<Vec<(Configuration, Configuration)>> {
    if let Some(m) = ball.members().iter().find(|m| !ambient.contains(m)) {
        return Err(Error::Geometry(format!("ball member {m} lies outside the ambient ball")));
    }
    let mut out = Vec::new();
    for x in ball.members() {
        for y in sector_neighbors(&ball.geometry, x) {
            if !ball.contains(&y) && ambient.contains(&y) {
                out.push((x.clone(), y));
            }
        }
    }
    Ok(out)
}

/// Number of sector edges leaving the ball, `|∂B|`.
pub fn boundary_constant(ball: &Ball) -> usize {
    ball.outer_degree.iter().sum()
}

/// Single-particle projection: every site occupied by some member.
pub fn projection(ball: &Ball) -> BTreeSet<Site> {
    ball.members().iter().flat_map(|m| m.sites().iter().cloned()).collect()
}

/// Minimal single-particle distance between two site sets.
pub fn set_distance(geometry: &Geometry, a: &BTreeSet<Site>, b: &BTreeSet<Site>) -> u64 {
    let mut best = u64::MAX;
    for s in a {
        for t in b {
            best = best.min(geometry.site_distance(s, t));
        }
    }
    best
}

/// Whether `B_L(x' ∪ x'')` coincides with `B_L(x') x B_L(x'')` as sets of
/// configurations. Holds whenever the parts are more than `2L` apart.
pub fn factorization_check(
    geometry: &Geometry,
    x1: &Configuration,
    x2: &Configuration,
    radius: u64,
) -> Result<bool> {
    let x = x1.union(x2)?;
    let whole = Ball::new(geometry, x, radius)?;
    let b1 = Ball::new(geometry, x1.clone(), radius)?;
    let b2 = Ball::new(geometry, x2.clone(), radius)?;
    let mut product = BTreeSet::new();
    for a in b1.members() {
        for b in b2.members() {
            // Products with overlapping supports leave the sector.
            match a.union(b) {
                Ok(c) => {
                    product.insert(c);
                }
                Err(_) => return Ok(false),
            }
        }
    }
    if product.len() != b1.len() * b2.len() {
        return Ok(false);
    }
    Ok(whole.members().iter().cloned().collect::<BTreeSet<_>>() == product)
}

/// Partially vs fully interactive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BallClass {
    #[serde(rename = "PI")]
    PartiallyInteractive,
    #[serde(rename = "FI")]
    FullyInteractive,
}

pub fn classify_ball(ball: &Ball, params: &ScalingParams) -> BallClass {
    if params.is_pi(diam(ball.geometry(), ball.center()), ball.radius()) {
        BallClass::PartiallyInteractive
    } else {
        BallClass::FullyInteractive
    }
}

/// Split of a configuration into two non-interacting clusters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decomposition {
    /// Canonical indices of the first cluster.
    pub j: Vec<usize>,
    pub j_complement: Vec<usize>,
    pub x1: Configuration,
    pub x2: Configuration,
    pub separation: u64,
}

/// Maximal-separation split of a PI ball's center. Ties go to the cluster
/// whose ascending site list is lexicographically smallest.
pub fn canonical_decomposition(ball: &Ball, params: &ScalingParams) -> Result<Decomposition> {
    if classify_ball(ball, params) == BallClass::FullyInteractive {
        return Err(Error::NoDecomposition(format!(
            "ball of radius {} around {} is fully interactive",
            ball.radius(),
            ball.center()
        )));
    }
    let x = ball.center();
    let n = x.n_particles();
    let g = ball.geometry();
    let mut best: Option<(u64, Vec<Site>, Vec<usize>)> = None;
    for mask in 1..(1u32 << n) - 1 {
        let j: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let jc: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 0).collect();
        let sep = configuration_distance(g, &x.select(&j)?, &x.select(&jc)?);
        let mut key: Vec<Site> = j.iter().map(|&i| x.sites()[i].clone()).collect();
        key.sort();
        let better = match &best {
            None => true,
            Some((s, k, _)) => sep > *s || (sep == *s && key < *k),
        };
        if better {
            best = Some((sep, key, j));
        }
    }
    let (separation, _, j) = best.ok_or_else(|| {
        Error::NoDecomposition("a single particle cannot be decomposed".into())
    })?;
    if separation as f64 <= params.decomposition_threshold(ball.radius()) {
        return Err(Error::NoDecomposition(format!(
            "best split of {} has separation {separation}, not above {}",
            x,
            params.decomposition_threshold(ball.radius())
        )));
    }
    let j_complement: Vec<usize> = (0..n).filter(|i| !j.contains(i)).collect();
    Ok(Decomposition {
        x1: x.select(&j)?,
        x2: x.select(&j_complement)?,
        j,
        j_complement,
        separation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::rho;

    fn cfg(xs: &[i64]) -> Configuration {
        Configuration::from_1d(xs).unwrap()
    }

    #[test]
    fn enumerate_ball_examples() {
        let g = Geometry::lattice(1);
        let b = enumerate_ball(&g, &cfg(&[3, 1]), 1).unwrap();
        let want: Vec<Configuration> =
            [[2, 0], [2, 1], [3, 0], [3, 1], [3, 2], [4, 0], [4, 1], [4, 2]].iter().map(|p| cfg(p)).collect();
        assert_eq!(b.members(), &want[..]);
        assert_eq!(enumerate_ball(&g, &cfg(&[3, 1]), 0).unwrap().members(), &[cfg(&[3, 1])]);
        let single = enumerate_ball(&g, &cfg(&[0]), 2).unwrap();
        assert_eq!(single.len(), 5);
        assert_eq!(single.members()[0], cfg(&[-2]));
    }

    #[test]
    fn ball_members_match_rho_definition() {
        let g = Geometry::lattice(1);
        let center = cfg(&[3, 1]);
        let b = enumerate_ball(&g, &center, 2).unwrap();
        let mut count = 0;
        for a in -3..=8 {
            for c in -3..a {
                let y = cfg(&[a, c]);
                let inside = rho(&g, &center, &y).unwrap() <= 2;
                assert_eq!(inside, b.contains(&y));
                count += inside as usize;
            }
        }
        assert_eq!(count, b.len());
        for i in b.inner_boundary() {
            assert_eq!(b.rho_from_center(i), 2);
        }
    }

    #[test]
    fn edge_boundary_examples() {
        let g = Geometry::lattice(1);
        let ball = enumerate_ball(&g, &cfg(&[0]), 0).unwrap();
        let amb = enumerate_ball(&g, &cfg(&[0]), 2).unwrap();
        let e = edge_boundary(&ball, &amb).unwrap();
        assert_eq!(e, vec![(cfg(&[0]), cfg(&[-1])), (cfg(&[0]), cfg(&[1]))]);
        assert!(edge_boundary(&amb, &amb).unwrap().is_empty());
        assert!(edge_boundary(&amb, &ball).is_err());
    }

    #[test]
    fn edge_boundary_of_two_particle_ball() {
        // Oracle: brute-force every pair of sector points in a window.
        let g = Geometry::lattice(1);
        let ball = enumerate_ball(&g, &cfg(&[3, 1]), 1).unwrap();
        let amb = enumerate_ball(&g, &cfg(&[3, 1]), 3).unwrap();
        let mut want = 0;
        for x in ball.members() {
            for y in amb.members() {
                let l1: i64 = x.sites().iter().zip(y.sites()).map(|(a, b)| (a.0[0] - b.0[0]).abs()).sum();
                if l1 == 1 && !ball.contains(y) {
                    want += 1;
                }
            }
        }
        assert_eq!(edge_boundary(&ball, &amb).unwrap().len(), want);
        assert_eq!(boundary_constant(&ball), want);
    }

    #[test]
    fn factorization_examples() {
        let g = Geometry::lattice(1);
        assert!(factorization_check(&g, &cfg(&[10]), &cfg(&[0]), 2).unwrap());
        assert!(!factorization_check(&g, &cfg(&[3]), &cfg(&[0]), 2).unwrap());
        assert!(factorization_check(&g, &cfg(&[1]), &cfg(&[0]), 0).unwrap());
    }

    #[test]
    fn classification_examples() {
        let g = Geometry::lattice(1);
        let p3 = ScalingParams::finite_range(3, 1, 6);
        let b = enumerate_ball(&g, &cfg(&[0, 10, 20]), 1).unwrap();
        assert_eq!(classify_ball(&b, &p3), BallClass::PartiallyInteractive);
        let p2 = ScalingParams::finite_range(2, 1, 6);
        let b = enumerate_ball(&g, &cfg(&[0, 5]), 10).unwrap();
        assert_eq!(classify_ball(&b, &p2), BallClass::FullyInteractive);
        let pi = ScalingParams::infinite_range(2, 1, 8, 0.05, 0.0);
        let b = enumerate_ball(&g, &cfg(&[0, 12]), 8).unwrap();
        assert_eq!(classify_ball(&b, &pi), BallClass::PartiallyInteractive);
    }

    #[test]
    fn decomposition_examples() {
        let g = Geometry::lattice(1);
        let p2 = ScalingParams::finite_range(2, 1, 6);
        let d = canonical_decomposition(&enumerate_ball(&g, &cfg(&[20, 0]), 1).unwrap(), &p2).unwrap();
        assert_eq!(d.separation, 20);
        assert_eq!(d.x1, cfg(&[0]));
        let p3 = ScalingParams::finite_range(3, 1, 6);
        let d = canonical_decomposition(&enumerate_ball(&g, &cfg(&[0, 10, 20]), 1).unwrap(), &p3).unwrap();
        assert_eq!(d.separation, 10);
        assert_eq!(d.x1, cfg(&[0]));
        assert_eq!(d.x2, cfg(&[10, 20]));
        assert_eq!(d.x1.union(&d.x2).unwrap(), cfg(&[0, 10, 20]));
        let fi = enumerate_ball(&g, &cfg(&[0, 5]), 10).unwrap();
        assert!(matches!(canonical_decomposition(&fi, &p2), Err(Error::NoDecomposition(_))));
    }

    #[test]
    fn graph_ball_uses_symmetrized_metric() {
        let g = Geometry::graph(super::super::GraphGeometry::cycle(6).unwrap());
        let b = enumerate_ball(&g, &cfg(&[0, 1]), 1).unwrap();
        assert_eq!(b.metric(), BallMetric::Symmetrized);
        for m in b.members() {
            assert!(rho(&g, b.center(), m).unwrap() <= 1);
        }
        assert!(b.contains(&cfg(&[5, 0])));
        assert!(b.contains(&cfg(&[5, 2])));
    }
}
