//! Static kd-tree for k-nearest-neighbor and radius queries.
//!
//! Results are exact and deterministic: neighbors are ordered by
//! `(squared distance, index)`, so ties resolve toward lower indices and
//! every query agrees with a brute-force scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Point3;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// A neighbor hit: point index and Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl NeighborIndex {
    pub fn new(points: Vec<Point3>) -> Self {
        let mut index = Self {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        if !index.points.is_empty() {
            index.build(0, index.points.len());
        }
        index
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = &self.points[i];
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            start,
            end,
            children: None,
        });
        if end - start > LEAF_SIZE {
            let axis = (0..3)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0);
            let mid = (start + end) / 2;
            let pts = &self.points;
            self.order[start..end]
                .select_nth_unstable_by(mid - start, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
            let left = self.build(start, mid);
            let right = self.build(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    fn box_dist2(node: &Node, q: &Point3) -> f64 {
        (0..3)
            .map(|k| {
                let d = (node.lo[k] - q[k]).max(0.0).max(q[k] - node.hi[k]);
                d * d
            })
            .sum()
    }

    /// The `k` nearest points to `q`, nearest first.
    pub fn knn(&self, q: &Point3, k: usize) -> Vec<Neighbor> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Key> = BinaryHeap::with_capacity(k + 1);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if heap.len() == k && Self::box_dist2(node, q) > heap.peek().map_or(f64::INFINITY, |w| w.0) {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    let dl = Self::box_dist2(&self.nodes[l], q);
                    let dr = Self::box_dist2(&self.nodes[r], q);
                    // push the farther child first so the nearer is explored first
                    if dl <= dr {
                        stack.push(r);
                        stack.push(l);
                    } else {
                        stack.push(l);
                        stack.push(r);
                    }
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let key = Key((self.points[i] - q).norm_squared(), i);
                        if heap.len() < k {
                            heap.push(key);
                        } else if key < *heap.peek().expect("heap is full") {
                            heap.pop();
                            heap.push(key);
                        }
                    }
                }
            }
        }
        heap.into_sorted_vec()
            .into_iter()
            .map(|Key(d2, index)| Neighbor {
                index,
                distance: d2.sqrt(),
            })
            .collect()
    }

    /// The `k` nearest neighbors of member point `i`, excluding `i` itself.
    pub fn knn_of_member(&self, i: usize, k: usize) -> Vec<Neighbor> {
        let mut hits = self.knn(&self.points[i], k + 1);
        match hits.iter().position(|n| n.index == i) {
            Some(pos) => {
                hits.remove(pos);
            }
            None => {
                hits.truncate(k);
            }
        }
        hits
    }

    /// All points within `radius` (inclusive) of `q`, ordered by index.
    pub fn within_radius(&self, q: &Point3, radius: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        if self.points.is_empty() || !(radius >= 0.0) {
            return out;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if Self::box_dist2(node, q) > r2 {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let d2 = (self.points[i] - q).norm_squared();
                        if d2 <= r2 {
                            out.push(Neighbor {
                                index: i,
                                distance: d2.sqrt(),
                            });
                        }
                    }
                }
            }
        }
        out.sort_by_key(|n| n.index);
        out
    }

    pub fn count_within_radius(&self, q: &Point3, radius: f64) -> usize {
        self.within_radius(q, radius).len()
    }

    pub fn nearest(&self, q: &Point3) -> Option<Neighbor> {
        self.knn(q, 1).into_iter().next()
    }
}
