//! Exact nearest-neighbour queries over a static point set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Point3;

const LEAF_SIZE: usize = 16;

#[derive(Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// Balanced kd-tree built once over a borrowed point slice. Splits happen on
/// the axis of largest spread, so point sets that are constant along some
/// coordinate (planes, collinear data) do not degrade the tree.
#[derive(Debug)]
pub struct KdTree<'a> {
    points: &'a [Point3],
    order: Vec<usize>,
    root: Node,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    // ties broken by index so results are reproducible
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq.total_cmp(&other.dist_sq).then(self.index.cmp(&other.index))
    }
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = build(points, &mut order, 0);
        KdTree { points, order, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `query`, closest first.
    pub fn nearest(&self, query: &Point3, k: usize) -> Vec<Neighbor> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(&self.root, query, k, &mut heap);
        heap.into_sorted_vec()
    }

    pub fn nearest_one(&self, query: &Point3) -> Option<Neighbor> {
        self.nearest(query, 1).into_iter().next()
    }

    fn search(&self, node: &Node, q: &Point3, k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match node {
            Node::Leaf { start, end } => {
                for &index in &self.order[*start..*end] {
                    let cand = Neighbor { index, dist_sq: (self.points[index] - q).norm_squared() };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let delta = q[*dim] - value;
                let (near, far) = if delta <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                let worst = heap.peek().map_or(f64::INFINITY, |n| n.dist_sq);
                if heap.len() < k || delta * delta <= worst {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

fn build(points: &[Point3], order: &mut [usize], offset: usize) -> Node {
    let n = order.len();
    if n <= LEAF_SIZE {
        return Node::Leaf { start: offset, end: offset + n };
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for d in 0..3 {
            lo[d] = lo[d].min(points[i][d]);
            hi[d] = hi[d].max(points[i][d]);
        }
    }
    let dim = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
    if hi[dim] - lo[dim] == 0.0 {
        // all points coincide
        return Node::Leaf { start: offset, end: offset + n };
    }
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][dim].total_cmp(&points[b][dim]));
    let value = points[order[mid]][dim];
    let (left, right) = order.split_at_mut(mid);
    Node::Split {
        dim,
        value,
        left: Box::new(build(points, left, offset)),
        right: Box::new(build(points, right, offset + mid)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point3], q: &Point3, k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .enumerate()
            .map(|(index, p)| Neighbor { index, dist_sq: (p - q).norm_squared() })
            .collect();
        all.sort();
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pts: Vec<Point3> = (0..700)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random::<f64>() * 0.1))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..50 {
            let q = Point3::new(rng.random(), rng.random(), rng.random());
            assert_eq!(tree.nearest(&q, 9), brute(&pts, &q, 9));
        }
    }

    #[test]
    fn handles_flat_and_duplicate_points() {
        let mut pts: Vec<Point3> = (0..200).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        pts.extend(std::iter::repeat_n(Point3::new(5.0, 0.0, 0.0), 40));
        let tree = KdTree::new(&pts);
        let q = Point3::new(5.2, 0.0, 0.0);
        assert_eq!(tree.nearest(&q, 45), brute(&pts, &q, 45));
        assert_eq!(tree.nearest(&q, 1000).len(), pts.len());
    }
}
