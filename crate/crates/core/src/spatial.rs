//! Exact nearest-neighbour queries over 3D points.

use crate::camera::Vec3;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree. Ties between equidistant points resolve to the lower
/// input index, so results never depend on traversal order.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    fn better_than(&self, other: &Neighbor) -> bool {
        (self.dist_sq, self.index) < (other.dist_sq, other.index)
    }
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let points: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&points, &mut order, 0, points.len(), &mut nodes);
        }
        Self {
            points,
            order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> Vec3 {
        Vec3::from(self.points[index])
    }

    pub fn nearest(&self, q: &Vec3) -> Option<Neighbor> {
        if self.nodes.is_empty() {
            return None;
        }
        let q = [q.x, q.y, q.z];
        let mut best = Neighbor {
            index: usize::MAX,
            dist_sq: f64::INFINITY,
        };
        self.search_one(0, &q, &mut best);
        Some(best)
    }

    /// The `k` nearest points sorted by distance; all points if `k >= len`.
    pub fn k_nearest(&self, q: &Vec3, k: usize) -> Vec<Neighbor> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let q = [q.x, q.y, q.z];
        let mut heap: Vec<Neighbor> = Vec::with_capacity(k + 1);
        self.search_k(0, &q, k, &mut heap);
        heap
    }

    fn dist_sq(&self, i: usize, q: &[f64; 3]) -> f64 {
        let p = &self.points[i];
        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
    }

    fn search_one(&self, node: usize, q: &[f64; 3], best: &mut Neighbor) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Neighbor {
                        index: i,
                        dist_sq: self.dist_sq(i, q),
                    };
                    if cand.better_than(best) {
                        *best = cand;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search_one(near, q, best);
                if diff * diff <= best.dist_sq {
                    self.search_one(far, q, best);
                }
            }
        }
    }

    fn search_k(&self, node: usize, q: &[f64; 3], k: usize, found: &mut Vec<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Neighbor {
                        index: i,
                        dist_sq: self.dist_sq(i, q),
                    };
                    if found.len() < k || cand.better_than(&found[found.len() - 1]) {
                        let pos = found.partition_point(|n| n.better_than(&cand));
                        found.insert(pos, cand);
                        found.truncate(k);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search_k(near, q, k, found);
                if found.len() < k || diff * diff <= found[found.len() - 1].dist_sq {
                    self.search_k(far, q, k, found);
                }
            }
        }
    }
}

fn build(
    points: &[[f64; 3]],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut order[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in slice.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let value = points[slice[mid]][axis];
    nodes.push(Node::Leaf { start, end });
    // Left holds [start, start + mid), all with coordinate <= value.
    let left = build(points, order, start, start + mid, nodes);
    let right = build(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec3], q: &Vec3, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - q).norm_squared(), i))
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..2000)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..200 {
            let q = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            assert_eq!(tree.nearest(&q).unwrap().index, brute(&pts, &q, 1)[0]);
            let got: Vec<usize> = tree.k_nearest(&q, 8).iter().map(|n| n.index).collect();
            assert_eq!(got, brute(&pts, &q, 8));
        }
    }

    #[test]
    fn duplicates_resolve_to_lowest_index() {
        let pts = vec![Vec3::new(1.0, 0.0, 0.0); 40];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Vec3::zeros()).unwrap().index, 0);
        let k: Vec<usize> = tree.k_nearest(&Vec3::zeros(), 3).iter().map(|n| n.index).collect();
        assert_eq!(k, vec![0, 1, 2]);
    }

    #[test]
    fn k_larger_than_set() {
        let pts = vec![Vec3::zeros(), Vec3::x()];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.k_nearest(&Vec3::zeros(), 8).len(), 2);
        assert!(KdTree::new(&[]).nearest(&Vec3::zeros()).is_none());
    }
}
