use serde::Serialize;

use super::{bottleneck_matching, Ball, Geometry, LatticeBox, Site};
use crate::error::{Error, Result};

/// Which ball the witness separates from the other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessDirection {
    XFromY,
    YFromX,
}

/// Box `Q` and index sets `(J1, J2)` with `|J1| > |J2|` such that the cubes
/// around `x_{J1}` and `y_{J2}` lie in `Q` while the cubes around
/// `y_{J2^c}` miss it. Indices refer to the canonical site order; in the
/// `YFromX` direction the roles of `x` and `y` are swapped.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SeparabilityWitness {
    pub direction: WitnessDirection,
    pub q: LatticeBox,
    pub j1: Vec<usize>,
    pub j2: Vec<usize>,
}

/// Symmetrized sup-norm distance `min_pi |pi(x) - y|_inf` between site
/// tuples of equal length.
pub fn symmetrized_distance(x: &[Site], y: &[Site]) -> Result<u64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "symmetrized distance between {} and {} sites",
            x.len(),
            y.len()
        )));
    }
    let g = Geometry::lattice(x.first().map_or(1, Site::dim).max(1));
    Ok(bottleneck_matching(x, y, |a, b| g.site_distance(a, b)))
}

/// Searches for a weak-separability witness between two lattice balls of
/// equal radius, treating the particles as distinguishable so the balls
/// are products of single-particle cubes.
pub fn find_separability_witness(x: &Ball, y: &Ball) -> Result<Option<SeparabilityWitness>> {
    if !x.geometry().is_lattice() {
        return Err(Error::Geometry("weak separability is defined on lattices only".into()));
    }
    if x.n_particles() != y.n_particles() || x.radius() != y.radius() {
        return Err(Error::DimensionMismatch("witness search needs equal N and equal radii".into()));
    }
    Ok(find_witness_sites(x.center().sites(), y.center().sites(), x.radius()))
}

/// Witness search on raw site tuples (repeated sites allowed).
pub fn find_witness_sites(x: &[Site], y: &[Site], radius: u64) -> Option<SeparabilityWitness> {
    search(x, y, radius, WitnessDirection::XFromY).or_else(|| search(y, x, radius, WitnessDirection::YFromX))
}

fn search(x: &[Site], y: &[Site], radius: u64, direction: WitnessDirection) -> Option<SeparabilityWitness> {
    let n = x.len();
    let max_diam = 2 * n as u64 * radius;
    let r = radius as i64;
    let subsets = |mask: u32| -> Vec<usize> { (0..n).filter(|i| mask >> i & 1 == 1).collect() };
    let mut best: Option<((usize, usize), SeparabilityWitness)> = None;
    for m1 in 1u32..(1 << n) {
        let j1 = subsets(m1);
        for m2 in 0u32..(1 << n) {
            let j2 = subsets(m2);
            if j2.len() >= j1.len() {
                continue;
            }
            let centers = j1.iter().map(|&i| &x[i]).chain(j2.iter().map(|&i| &y[i]));
            let mut q = LatticeBox::bounding(centers.cloned()).expect("J1 is nonempty");
            for (lo, hi) in q.lo.iter_mut().zip(q.hi.iter_mut()) {
                *lo -= r;
                *hi += r;
            }
            if q.diam() > max_diam {
                continue;
            }
            if (0..n).filter(|i| !j2.contains(i)).any(|i| q.meets_cube(&y[i], radius)) {
                continue;
            }
            let key = (j1.len() - j2.len(), j1.len());
            let better = match &best {
                None => true,
                Some((k, _)) => key > *k,
            };
            if better {
                best = Some((key, SeparabilityWitness { direction, q, j1: j1.clone(), j2 }));
            }
        }
    }
    best.map(|(_, w)| w)
}

impl SeparabilityWitness {
    /// Re-checks the witness conditions by explicit cube enumeration.
    pub fn verify(&self, x: &[Site], y: &[Site], radius: u64) -> bool {
        let (a, b) = match self.direction {
            WitnessDirection::XFromY => (x, y),
            WitnessDirection::YFromX => (y, x),
        };
        let n = a.len();
        if self.j1.len() <= self.j2.len() || self.q.diam() > 2 * n as u64 * radius {
            return false;
        }
        let g = Geometry::lattice(self.q.dim());
        let inside = self.j1.iter().map(|&i| &a[i]).chain(self.j2.iter().map(|&i| &b[i]));
        for c in inside {
            if !g.site_ball(c, radius).iter().all(|s| self.q.contains(s)) {
                return false;
            }
        }
        for i in (0..n).filter(|i| !self.j2.contains(i)) {
            if g.site_ball(&b[i], radius).iter().any(|s| self.q.contains(s)) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::{enumerate_ball, Configuration};

    fn sites(xs: &[i64]) -> Vec<Site> {
        xs.iter().map(|&x| Site::scalar(x)).collect()
    }

    #[test]
    fn far_pair_has_full_witness() {
        let g = Geometry::lattice(1);
        let bx = enumerate_ball(&g, &Configuration::from_1d(&[0, 1]).unwrap(), 1).unwrap();
        let by = enumerate_ball(&g, &Configuration::from_1d(&[50, 51]).unwrap(), 1).unwrap();
        let w = find_separability_witness(&bx, &by).unwrap().unwrap();
        assert_eq!(w.q, LatticeBox::interval(-1, 2).unwrap());
        assert_eq!(w.j1, vec![0, 1]);
        assert!(w.j2.is_empty());
        assert!(w.verify(bx.center().sites(), by.center().sites(), 1));
    }

    #[test]
    fn identical_balls_have_no_witness() {
        let x = sites(&[4, 0]);
        assert!(find_witness_sites(&x, &x, 1).is_none());
        let g = Geometry::lattice(1);
        let b = enumerate_ball(&g, &Configuration::from_1d(&[4, 0]).unwrap(), 2).unwrap();
        assert!(find_separability_witness(&b, &b).unwrap().is_none());
    }

    #[test]
    fn symmetrized_distance_ignores_order() {
        assert_eq!(symmetrized_distance(&sites(&[0, 5]), &sites(&[5, 1])).unwrap(), 1);
        assert!(symmetrized_distance(&sites(&[0]), &sites(&[5, 1])).is_err());
    }
}
