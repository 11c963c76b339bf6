//! Random geometric graphs on the unit square.

use rand::Rng;

use crate::error::Result;
use crate::model::Topology;

/// Sensor positions on the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub points: Vec<(f64, f64)>,
}

impl Placement {
    pub fn uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let points = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        Self { points }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.points[i], self.points[j]);
        (a.0 - b.0).hypot(a.1 - b.1)
    }

    /// `A_ij = 1` iff `i = j` or the two sensors are within `r`, for the
    /// first `m` rows. Growing `r` on one placement only adds links.
    pub fn topology(&self, r: f64, m: usize) -> Result<Topology> {
        let n = self.points.len();
        let mut a = vec![false; m * n];
        for i in 0..m {
            for j in 0..n {
                a[i * n + j] = i == j || self.distance(i, j) <= r;
            }
        }
        Topology::new(m, n, a)
    }
}

/// Draws a placement and builds its `m x n` topology.
pub fn generate_rgg<R: Rng + ?Sized>(n: usize, r: f64, m: usize, rng: &mut R) -> Result<Topology> {
    Placement::uniform(n, rng).topology(r, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn extreme_radii() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full = generate_rgg(6, 2f64.sqrt(), 4, &mut rng).unwrap();
        assert_eq!(full.len(), 24);
        let none = generate_rgg(6, 0.0, 4, &mut rng).unwrap();
        assert_eq!(none.len(), 4);
        for i in 0..4 {
            assert!(none.contains(i, i));
        }
    }

    #[test]
    fn square_part_is_symmetric_and_radius_nested() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Placement::uniform(10, &mut rng);
        let small = p.topology(0.3, 10).unwrap();
        let big = p.topology(0.5, 10).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(small.contains(i, j), small.contains(j, i));
                if small.contains(i, j) {
                    assert!(big.contains(i, j));
                }
            }
        }
    }
}
