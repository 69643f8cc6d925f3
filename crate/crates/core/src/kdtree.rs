//! Static 3D kd-tree for nearest-neighbor and radius queries.
//!
//! Ties at equal distance always resolve to the smaller point index, and
//! every query visits subtrees whose boundary distance equals the current
//! worst, so results are independent of tree layout.

use nalgebra::Vector3;

struct Node {
    /// Index into the original point slice.
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

pub struct KdTree {
    points: Vec<Vector3<f64>>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

/// Candidate ordered by (distance, index); the heap keeps the worst on top.
#[derive(PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist2
            .partial_cmp(&other.dist2)
            .expect("finite distances")
            .then(self.index.cmp(&other.index))
    }
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: None,
        };
        let mut order: Vec<usize> = (0..points.len()).collect();
        tree.root = tree.build(&mut order, 0);
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, order: &mut [usize], depth: usize) -> Option<usize> {
        if order.is_empty() {
            return None;
        }
        let axis = depth % 3;
        // Median split; the index tie-break makes the layout deterministic.
        order.sort_unstable_by(|&a, &b| {
            self.points[a][axis]
                .partial_cmp(&self.points[b][axis])
                .expect("finite coordinates")
                .then(a.cmp(&b))
        });
        let mid = order.len() / 2;
        let point = order[mid];
        let node_id = self.nodes.len();
        self.nodes.push(Node {
            point,
            axis,
            left: None,
            right: None,
        });
        let (lo, rest) = order.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build(lo, depth + 1);
        let right = self.build(hi, depth + 1);
        self.nodes[node_id].left = left;
        self.nodes[node_id].right = right;
        Some(node_id)
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, query: &Vector3<f64>) -> Option<(usize, f64)> {
        self.k_nearest(query, 1).into_iter().next()
    }

    /// The k nearest points as (index, squared distance), ascending by
    /// (distance, index).
    pub fn k_nearest(&self, query: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap: std::collections::BinaryHeap<Candidate> =
            std::collections::BinaryHeap::with_capacity(k + 1);
        self.knn_visit(self.root, query, k, &mut heap);
        let mut out: Vec<(usize, f64)> = heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| (c.index, c.dist2))
            .collect();
        out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        out
    }

    fn knn_visit(
        &self,
        node: Option<usize>,
        query: &Vector3<f64>,
        k: usize,
        heap: &mut std::collections::BinaryHeap<Candidate>,
    ) {
        let Some(id) = node else { return };
        let n = &self.nodes[id];
        let p = &self.points[n.point];
        let cand = Candidate {
            dist2: (p - query).norm_squared(),
            index: n.point,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if let Some(worst) = heap.peek() {
            if cand < *worst {
                heap.push(cand);
                heap.pop();
            }
        }
        let delta = query[n.axis] - p[n.axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.knn_visit(near, query, k, heap);
        let worst = heap.peek().map(|c| c.dist2).unwrap_or(f64::INFINITY);
        // Inclusive comparison: equal-distance candidates on the far side
        // may win ties by index.
        if heap.len() < k || delta * delta <= worst {
            self.knn_visit(far, query, k, heap);
        }
    }

    /// Indices of all points with distance <= radius, ascending.
    pub fn within_radius(&self, query: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_visit(self.root, query, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    fn radius_visit(
        &self,
        node: Option<usize>,
        query: &Vector3<f64>,
        r2: f64,
        out: &mut Vec<usize>,
    ) {
        let Some(id) = node else { return };
        let n = &self.nodes[id];
        let p = &self.points[n.point];
        if (p - query).norm_squared() <= r2 {
            out.push(n.point);
        }
        let delta = query[n.axis] - p[n.axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.radius_visit(near, query, r2, out);
        if delta * delta <= r2 {
            self.radius_visit(far, query, r2, out);
        }
    }
}
