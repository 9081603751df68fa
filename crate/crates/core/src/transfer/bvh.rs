//! Axis-aligned bounding-volume hierarchy over tetrahedra.
//!
//! Accelerates point-in-tet candidate collection and nearest-face search.
//! Queries are conservative: containment boxes are padded so every candidate
//! the brute-force scans would accept is also visited here, and nearest-face
//! pruning only discards nodes strictly farther than the current best, which
//! keeps index-order tie-breaking identical to a full scan.

use nalgebra::Vector3;

#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn of_points<'a>(points: impl Iterator<Item = &'a Vector3<f64>>) -> Aabb {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Aabb { min, max }
    }

    fn merged(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    fn distance_squared(&self, p: &Vector3<f64>) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let d = (self.min[i] - p[i]).max(0.0).max(p[i] - self.max[i]);
            d2 += d * d;
        }
        d2
    }

    fn padded(&self, pad: f64) -> Aabb {
        Aabb {
            min: self.min.map(|c| c - pad),
            max: self.max.map(|c| c + pad),
        }
    }
}

enum Node {
    Leaf { start: usize, end: usize, aabb: Aabb },
    Inner { left: usize, right: usize, aabb: Aabb },
}

pub struct Bvh {
    nodes: Vec<Node>,
    items: Vec<u32>,
}

const LEAF_SIZE: usize = 8;

impl Bvh {
    /// Builds over item boxes; each box is padded by
    /// `1e-8 · its diagonal + 1e-14` so boundary-tolerant containment tests
    /// never lose candidates.
    pub fn build(aabbs: &[Aabb]) -> Bvh {
        let padded: Vec<Aabb> = aabbs
            .iter()
            .map(|b| b.padded(1e-8 * (b.max - b.min).norm() + 1e-14))
            .collect();
        let mut items: Vec<u32> = (0..aabbs.len() as u32).collect();
        let mut nodes = Vec::new();
        if !items.is_empty() {
            let n = items.len();
            build_rec(&padded, &mut items, 0, n, &mut nodes);
        }
        Bvh { nodes, items }
    }

    /// Item indices whose padded box contains `p`, ascending.
    pub fn candidates_containing(&self, p: &Vector3<f64>) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                Node::Leaf { start, end, aabb } => {
                    if aabb.contains(p) {
                        // Leaf boxes are unions; check the item boxes upstream.
                        out.extend(self.items[*start..*end].iter().map(|&i| i as usize));
                    }
                }
                Node::Inner { left, right, aabb } => {
                    if aabb.contains(p) {
                        stack.push(*right);
                        stack.push(*left);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Branch-and-bound traversal for a nearest-item search. `distance`
    /// returns the exact squared distance of `p` to the item; ties keep the
    /// lowest item index because equal-distance nodes are never pruned.
    pub fn nearest<F: FnMut(usize) -> f64>(
        &self,
        p: &Vector3<f64>,
        mut distance: F,
    ) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let aabb = match &self.nodes[id] {
                Node::Leaf { aabb, .. } | Node::Inner { aabb, .. } => aabb,
            };
            if let Some((_, bd)) = best {
                if aabb.distance_squared(p) > bd {
                    continue;
                }
            }
            match &self.nodes[id] {
                Node::Leaf { start, end, .. } => {
                    let mut leaf: Vec<usize> =
                        self.items[*start..*end].iter().map(|&i| i as usize).collect();
                    leaf.sort_unstable();
                    for item in leaf {
                        let d = distance(item);
                        let better = match best {
                            None => true,
                            Some((bi, bd)) => d < bd || (d == bd && item < bi),
                        };
                        if better {
                            best = Some((item, d));
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        best
    }
}

fn build_rec(aabbs: &[Aabb], items: &mut [u32], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let aabb = items[start..end]
        .iter()
        .map(|&i| aabbs[i as usize])
        .reduce(|a, b| a.merged(&b))
        .expect("non-empty range");
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end, aabb });
        return id;
    }
    let extent = aabb.max - aabb.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    items[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        let ca = aabbs[a as usize].min[axis] + aabbs[a as usize].max[axis];
        let cb = aabbs[b as usize].min[axis] + aabbs[b as usize].max[axis];
        (ca, a).partial_cmp(&(cb, b)).unwrap()
    });
    nodes.push(Node::Inner {
        left: 0,
        right: 0,
        aabb,
    });
    let left = build_rec(aabbs, items, start, mid, nodes);
    let right = build_rec(aabbs, items, mid, end, nodes);
    if let Node::Inner { left: l, right: r, .. } = &mut nodes[id] {
        *l = left;
        *r = right;
    }
    id
}
