//! Neighbor queries under the max (Chebyshev) norm.
//!
//! [`KdTree`] is the production index; [`BruteForce`] scans every pair and
//! serves as the reference the tree is tested against.

/// Index over a row-major point set.
pub trait NeighborIndex {
    /// Distance from point `i` to its `k`-th nearest other point.
    fn kth_distance(&self, i: usize, k: usize) -> f64;
    /// Number of points `j != i` with distance to point `i` strictly below `radius`.
    fn count_within(&self, i: usize, radius: f64) -> usize;
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Keeps the `k` smallest values seen, sorted ascending.
struct Smallest {
    k: usize,
    vals: Vec<f64>,
}

impl Smallest {
    fn new(k: usize) -> Self {
        Self { k, vals: Vec::with_capacity(k + 1) }
    }

    fn worst(&self) -> f64 {
        if self.vals.len() < self.k {
            f64::INFINITY
        } else {
            self.vals[self.k - 1]
        }
    }

    fn push(&mut self, v: f64) {
        if v >= self.worst() {
            return;
        }
        let pos = self.vals.partition_point(|&x| x <= v);
        self.vals.insert(pos, v);
        self.vals.truncate(self.k);
    }
}

pub struct BruteForce<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> BruteForce<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        Self { data, dim }
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn len(&self) -> usize {
        self.data.len() / self.dim
    }
}

impl NeighborIndex for BruteForce<'_> {
    fn kth_distance(&self, i: usize, k: usize) -> f64 {
        let mut best = Smallest::new(k);
        let p = self.point(i);
        for j in (0..self.len()).filter(|&j| j != i) {
            best.push(max_dist(p, self.point(j)));
        }
        best.worst()
    }

    fn count_within(&self, i: usize, radius: f64) -> usize {
        let p = self.point(i);
        (0..self.len())
            .filter(|&j| j != i && max_dist(p, self.point(j)) < radius)
            .count()
    }
}

const LEAF_SIZE: usize = 16;

#[derive(Debug)]
struct Node {
    start: usize,
    end: usize,
    /// Child node indices; `None` for leaves.
    children: Option<(usize, usize)>,
}

/// Static kd-tree with per-node bounding boxes.
pub struct KdTree<'a> {
    data: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    nodes: Vec<Node>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a> KdTree<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        let n = data.len() / dim;
        let mut tree = Self {
            data,
            dim,
            order: (0..n).collect(),
            nodes: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    fn coord(&self, i: usize, d: usize) -> f64 {
        self.data[i * self.dim + d]
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node { start, end, children: None });
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for &i in &self.order[start..end] {
            for d in 0..self.dim {
                let v = self.coord(i, d);
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let (split_dim, spread) = (0..self.dim)
            .map(|d| (d, hi[d] - lo[d]))
            .fold((0, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        self.lo.extend_from_slice(&lo);
        self.hi.extend_from_slice(&hi);
        if end - start <= LEAF_SIZE || spread <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        let data = self.data;
        let dim = self.dim;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            data[a * dim + split_dim].total_cmp(&data[b * dim + split_dim])
        });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id].children = Some((left, right));
        id
    }

    /// Smallest and largest max-norm distance from `p` to node `id`'s box.
    fn box_dists(&self, id: usize, p: &[f64]) -> (f64, f64) {
        let lo = &self.lo[id * self.dim..(id + 1) * self.dim];
        let hi = &self.hi[id * self.dim..(id + 1) * self.dim];
        let mut near = 0.0f64;
        let mut far = 0.0f64;
        for d in 0..self.dim {
            near = near.max(lo[d] - p[d]).max(p[d] - hi[d]);
            far = far.max((p[d] - lo[d]).abs()).max((hi[d] - p[d]).abs());
        }
        (near, far)
    }

    fn knn_walk(&self, id: usize, i: usize, p: &[f64], best: &mut Smallest) {
        let node = &self.nodes[id];
        match node.children {
            None => {
                for &j in &self.order[node.start..node.end] {
                    if j != i {
                        best.push(max_dist(p, self.point(j)));
                    }
                }
            }
            Some((l, r)) => {
                let (dl, _) = self.box_dists(l, p);
                let (dr, _) = self.box_dists(r, p);
                let (first, df, second, ds) = if dl <= dr { (l, dl, r, dr) } else { (r, dr, l, dl) };
                if df < best.worst() {
                    self.knn_walk(first, i, p, best);
                }
                if ds < best.worst() {
                    self.knn_walk(second, i, p, best);
                }
            }
        }
    }

    fn count_walk(&self, id: usize, i: usize, p: &[f64], radius: f64) -> usize {
        let (near, far) = self.box_dists(id, p);
        if near >= radius {
            return 0;
        }
        let node = &self.nodes[id];
        if far < radius {
            let inside = node.end - node.start;
            let has_self = self.order[node.start..node.end].contains(&i);
            return inside - usize::from(has_self);
        }
        match node.children {
            None => self.order[node.start..node.end]
                .iter()
                .filter(|&&j| j != i && max_dist(p, self.point(j)) < radius)
                .count(),
            Some((l, r)) => self.count_walk(l, i, p, radius) + self.count_walk(r, i, p, radius),
        }
    }
}

impl NeighborIndex for KdTree<'_> {
    fn kth_distance(&self, i: usize, k: usize) -> f64 {
        let mut best = Smallest::new(k);
        if !self.nodes.is_empty() {
            self.knn_walk(0, i, self.point(i), &mut best);
        }
        best.worst()
    }

    fn count_within(&self, i: usize, radius: f64) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        self.count_walk(0, i, self.point(i), radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn tree_matches_brute_force(
            dim in 1usize..4,
            raw in prop::collection::vec(-5i32..5, 8..240),
            k in 1usize..6,
            r in 0.0f64..4.0,
        ) {
            // Small integer grid values force many exact ties.
            let n = raw.len() / dim;
            prop_assume!(n > k);
            let data: Vec<f64> = raw[..n * dim].iter().map(|&v| v as f64 * 0.5).collect();
            let tree = KdTree::new(&data, dim);
            let brute = BruteForce::new(&data, dim);
            for i in 0..n {
                prop_assert_eq!(tree.kth_distance(i, k), brute.kth_distance(i, k));
                prop_assert_eq!(tree.count_within(i, r), brute.count_within(i, r));
            }
        }
    }
}
