//! Exact k-nearest-neighbor queries via a kd-tree.
//!
//! Exactness matters here: tetrahedron filtering is defined through k-NN
//! membership, so an approximate index would change which tetrahedra survive.
//! Ties in distance are broken by ascending point index, which keeps results
//! identical to a plain distance sort.

use nalgebra::Vector3;

const LEAF_SIZE: usize = 16;

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

pub struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Vector3<f64>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            let n = points.len();
            build_rec(points, &mut order, 0, n, &mut nodes);
        }
        KdTree {
            points,
            order,
            nodes,
        }
    }

    /// Indices of the k nearest neighbors of `query_point`, excluding
    /// `exclude` (pass `usize::MAX` to keep all), ordered by ascending
    /// (distance, index).
    pub fn knn(&self, query_point: &Vector3<f64>, k: usize, exclude: usize) -> Vec<usize> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.search(0, query_point, k, exclude, &mut best);
        best.into_iter().map(|(_, i)| i).collect()
    }

    fn search(
        &self,
        node: usize,
        q: &Vector3<f64>,
        k: usize,
        exclude: usize,
        best: &mut Vec<(f64, usize)>,
    ) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[*start..*end] {
                    let idx = idx as usize;
                    if idx == exclude {
                        continue;
                    }
                    let d2 = (self.points[idx] - q).norm_squared();
                    insert_candidate(best, k, d2, idx);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[*axis] - value;
                let (near, far) = if delta <= 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, q, k, exclude, best);
                // The far side can still hold a closer point, or an
                // equal-distance point with a smaller index.
                if best.len() < k || delta * delta <= best.last().unwrap().0 {
                    self.search(far, q, k, exclude, best);
                }
            }
        }
    }
}

fn insert_candidate(best: &mut Vec<(f64, usize)>, k: usize, d2: f64, idx: usize) {
    let key = (d2, idx);
    if best.len() == k {
        let worst = *best.last().unwrap();
        if (worst.0, worst.1) <= key {
            return;
        }
    }
    let pos = best.partition_point(|&(d, i)| (d, i) < key);
    best.insert(pos, (d2, idx));
    if best.len() > k {
        best.pop();
    }
}

fn build_rec(
    points: &[Vector3<f64>],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    // Split on the widest axis at the median.
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &i in &order[start..end] {
        let p = points[i as usize];
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    let extent = hi - lo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        (points[a as usize][axis], a)
            .partial_cmp(&(points[b as usize][axis], b))
            .unwrap()
    });
    let value = points[order[mid] as usize][axis];
    nodes.push(Node::Split {
        axis,
        value,
        left: 0,
        right: 0,
    });
    let left = build_rec(points, order, start, mid, nodes);
    let right = build_rec(points, order, mid, end, nodes);
    if let Node::Split {
        left: l, right: r, ..
    } = &mut nodes[id]
    {
        *l = left;
        *r = right;
    }
    id
}
