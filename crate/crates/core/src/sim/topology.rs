//! Device positions in the cell and their D2D neighborhoods.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

#[derive(Debug, Clone)]
pub struct Topology {
    positions: Vec<(f64, f64)>,
    cell_radius: f64,
    interference_radius: f64,
    /// Devices within the interference radius, nearest first.
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Draws a Poisson point process of the given density on the disc. At
    /// least one device is always placed.
    pub fn sample<R: Rng + ?Sized>(density: f64, cell_radius: f64, interference_radius: f64, rng: &mut R) -> Self {
        let mean = density * std::f64::consts::PI * cell_radius * cell_radius;
        let n = if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(rng) as usize
        } else {
            0
        };
        let positions = (0..n.max(1))
            .map(|_| {
                let r = cell_radius * rng.random::<f64>().sqrt();
                let phi = std::f64::consts::TAU * rng.random::<f64>();
                (r * phi.cos(), r * phi.sin())
            })
            .collect();
        Self::from_positions(positions, cell_radius, interference_radius)
    }

    pub fn from_positions(positions: Vec<(f64, f64)>, cell_radius: f64, interference_radius: f64) -> Self {
        assert!(!positions.is_empty(), "a topology needs a device");
        let mut neighbors = Vec::with_capacity(positions.len());
        for (i, &a) in positions.iter().enumerate() {
            let mut near: Vec<(f64, usize)> = positions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &b)| (dist(a, b), j))
                .filter(|&(d, _)| d <= interference_radius)
                .collect();
            near.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            neighbors.push(near.into_iter().map(|(_, j)| j).collect());
        }
        Self {
            positions,
            cell_radius,
            interference_radius,
            neighbors,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn cell_radius(&self) -> f64 {
        self.cell_radius
    }

    pub fn interference_radius(&self) -> f64 {
        self.interference_radius
    }

    /// Devices within the interference radius of `device`, nearest first.
    pub fn neighbors(&self, device: usize) -> &[usize] {
        &self.neighbors[device]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        dist(self.positions[a], self.positions[b])
    }

    /// Whether `a` and `b` are strictly farther apart than the interference radius.
    pub fn clear_of(&self, a: usize, b: usize) -> bool {
        self.distance(a, b) > self.interference_radius
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn positions_lie_in_the_cell() {
        let t = Topology::sample(0.0018, 300.0, 60.0, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(t.positions().iter().all(|&(x, y)| x.hypot(y) <= 300.0));
        // Poisson(509): five standard deviations
        assert!((t.len() as f64 - 508.9).abs() < 5.0 * 508.9f64.sqrt(), "{}", t.len());
    }

    #[test]
    fn neighbors_are_sorted_and_within_range() {
        let t = Topology::sample(0.0018, 300.0, 60.0, &mut ChaCha8Rng::seed_from_u64(4));
        for i in 0..t.len() {
            let d: Vec<f64> = t.neighbors(i).iter().map(|&j| t.distance(i, j)).collect();
            assert!(d.windows(2).all(|w| w[0] <= w[1]));
            assert!(d.iter().all(|&x| x <= 60.0));
            let brute = (0..t.len()).filter(|&j| j != i && t.distance(i, j) <= 60.0).count();
            assert_eq!(brute, d.len());
        }
    }

    #[test]
    fn empty_draw_still_places_a_device() {
        let t = Topology::sample(0.0, 300.0, 60.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(t.len(), 1);
    }
}
