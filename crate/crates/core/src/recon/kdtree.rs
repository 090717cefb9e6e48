use alloc::vec::Vec;
use nalgebra::Vector3;

#[cfg(not(feature = "std"))]
use num_traits::Float;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static 3-d tree over a point set for exact nearest and radius queries.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    /// Point indices, permuted so every leaf owns a contiguous range.
    index: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            index: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.index[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.index[start..end].select_nth_unstable_by(mid - start, |a, b| points[*a][axis].total_cmp(&points[*b][axis]));
        let value = self.points[self.index[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Index and distance of the nearest point.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_in(0, q, &mut best);
        Some((best.0, best.1.sqrt()))
    }

    fn nearest_in(&self, node: usize, q: &Vector3<f64>, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.index[start..end] {
                    let d = (self.points[i] - q).norm_squared();
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near, q, best);
                if diff * diff <= best.1 {
                    self.nearest_in(far, q, best);
                }
            }
        }
    }

    /// Number of points within `radius` of `q` (inclusive), stopping early at `limit`.
    pub fn count_within(&self, q: &Vector3<f64>, radius: f64, limit: usize) -> usize {
        let mut count = 0;
        if !self.is_empty() {
            self.count_in(0, q, radius * radius, limit, &mut count);
        }
        count
    }

    fn count_in(&self, node: usize, q: &Vector3<f64>, r2: f64, limit: usize, count: &mut usize) {
        if *count >= limit {
            return;
        }
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.index[start..end] {
                    if (self.points[i] - q).norm_squared() <= r2 {
                        *count += 1;
                        if *count >= limit {
                            return;
                        }
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.count_in(near, q, r2, limit, count);
                if diff * diff <= r2 {
                    self.count_in(far, q, r2, limit, count);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(seed: u64, n: usize) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn nearest_matches_brute_force() {
        let pts = cloud(1, 2000);
        let tree = KdTree::new(&pts);
        for q in cloud(2, 300) {
            let brute = pts.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
            let (i, d) = tree.nearest(&q).unwrap();
            assert_eq!(d, brute);
            assert_eq!((pts[i] - q).norm(), d);
        }
    }

    #[test]
    fn radius_count_matches_brute_force() {
        let pts = cloud(3, 1500);
        let tree = KdTree::new(&pts);
        for q in cloud(4, 100) {
            let brute = pts.iter().filter(|p| (*p - q).norm_squared() <= 0.25).count();
            assert_eq!(tree.count_within(&q, 0.5, usize::MAX), brute);
            assert_eq!(tree.count_within(&q, 0.5, 3), brute.min(3));
        }
    }

    #[test]
    fn handles_duplicates_and_empty() {
        let tree = KdTree::new(&[]);
        assert!(tree.nearest(&Vector3::zeros()).is_none());
        let dup = alloc::vec![Vector3::new(1.0, 1.0, 1.0); 50];
        let tree = KdTree::new(&dup);
        assert_eq!(tree.nearest(&Vector3::zeros()).unwrap().1, 3f64.sqrt());
        assert_eq!(tree.count_within(&Vector3::new(1.0, 1.0, 1.0), 0.0, usize::MAX), 50);
    }
}
