//! Layered orthogonal range tree for 1 to 4 dimensions.
//!
//! The level for dimension `k` is a balanced binary tree over the points
//! sorted by coordinate `k`, with leaf buckets of at most [`LEAF`] points.
//! Every inner node carries an associated level for dimension `k + 1` built
//! over the points of its subtree. The last dimension is a plain sorted
//! array searched by bisection. A box query visits O(log n) canonical nodes
//! per level, so it costs O(log^d n + output), and the structure holds
//! O(n log^(d-1) n) entries.
//!
//! Coordinates are stored once; every level holds `u32` point indices.
//! Points with a NaN coordinate are left out, since no inclusive box
//! contains them.

/// Maximum points per leaf bucket.
pub const LEAF: usize = 16;
/// Maximum supported dimensionality.
pub const MAX_DIMS: usize = 4;
/// Documented constant of the size bound `C * n * max(1, log2 n)^(d-1)`
/// that [`RangeTree::node_count`] satisfies.
pub const SIZE_CONSTANT: f64 = 2.0;

#[derive(Debug)]
enum Level {
    /// Last dimension: points sorted by coordinate, with the keys cached.
    Sorted { pts: Vec<u32>, keys: Vec<f64> },
    Tree { nodes: Vec<Node>, root: u32 },
}

#[derive(Debug)]
struct Node {
    /// Coordinate range of the subtree on this level's dimension.
    lo: f64,
    hi: f64,
    kind: NodeKind,
}

#[derive(Debug)]
enum NodeKind {
    Leaf(Vec<u32>),
    Inner { left: u32, right: u32, assoc: Box<Level> },
}

#[derive(Debug)]
pub struct RangeTree {
    dims: usize,
    coords: Vec<f64>,
    root: Option<Level>,
    entries: usize,
}

impl RangeTree {
    /// Builds a tree over points `coords[i*dims .. (i+1)*dims]`.
    pub fn build(dims: usize, coords: Vec<f64>) -> RangeTree {
        assert!((1..=MAX_DIMS).contains(&dims), "range tree supports 1..=4 dimensions");
        assert_eq!(coords.len() % dims, 0);
        let n = coords.len() / dims;
        let mut pts: Vec<u32> = (0..n as u32)
            .filter(|&i| (0..dims).all(|k| !coords[i as usize * dims + k].is_nan()))
            .collect();
        let mut tree = RangeTree {
            dims,
            coords,
            root: None,
            entries: 0,
        };
        if !pts.is_empty() {
            tree.sort_by_dim(&mut pts, 0);
            let mut entries = 0;
            let root = tree.build_level(0, pts, &mut entries);
            tree.root = Some(root);
            tree.entries = entries;
        }
        tree
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Structural size: tree nodes plus point entries over all levels.
    pub fn node_count(&self) -> usize {
        self.entries
    }

    /// The size bound this structure guarantees for `n` points.
    pub fn size_bound(n: usize, dims: usize) -> f64 {
        let log = (n.max(2) as f64).log2().max(1.0);
        SIZE_CONSTANT * n.max(1) as f64 * log.powi(dims as i32 - 1)
    }

    fn coord(&self, p: u32, k: usize) -> f64 {
        self.coords[p as usize * self.dims + k]
    }

    fn sort_by_dim(&self, pts: &mut [u32], k: usize) {
        pts.sort_unstable_by(|&a, &b| self.coord(a, k).total_cmp(&self.coord(b, k)).then(a.cmp(&b)));
    }

    /// `pts` must be sorted by dimension `k`.
    fn build_level(&self, k: usize, pts: Vec<u32>, entries: &mut usize) -> Level {
        if k + 1 == self.dims {
            *entries += pts.len();
            let keys = pts.iter().map(|&p| self.coord(p, k)).collect();
            return Level::Sorted { pts, keys };
        }
        let mut nodes = Vec::new();
        let root = self.build_node(k, &pts, &mut nodes, entries);
        Level::Tree { nodes, root }
    }

    fn build_node(&self, k: usize, pts: &[u32], nodes: &mut Vec<Node>, entries: &mut usize) -> u32 {
        *entries += 1;
        let lo = self.coord(pts[0], k);
        let hi = self.coord(pts[pts.len() - 1], k);
        let kind = if pts.len() <= LEAF {
            *entries += pts.len();
            NodeKind::Leaf(pts.to_vec())
        } else {
            let mid = pts.len() / 2;
            let left = self.build_node(k, &pts[..mid], nodes, entries);
            let right = self.build_node(k, &pts[mid..], nodes, entries);
            let mut next = pts.to_vec();
            self.sort_by_dim(&mut next, k + 1);
            let assoc = Box::new(self.build_level(k + 1, next, entries));
            NodeKind::Inner { left, right, assoc }
        };
        nodes.push(Node { lo, hi, kind });
        (nodes.len() - 1) as u32
    }

    /// Point indices inside the inclusive box `lo[k] <= x[k] <= hi[k]`, in
    /// ascending index order. A NaN bound or `lo > hi` in any dimension
    /// yields nothing.
    pub fn query(&self, lo: &[f64], hi: &[f64]) -> Vec<u32> {
        assert_eq!(lo.len(), self.dims, "box dimensionality mismatch");
        assert_eq!(hi.len(), self.dims, "box dimensionality mismatch");
        let mut out = Vec::new();
        if (0..self.dims).any(|k| !(lo[k] <= hi[k])) {
            return out;
        }
        if let Some(root) = &self.root {
            self.query_level(root, 0, lo, hi, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn inside_from(&self, p: u32, k: usize, lo: &[f64], hi: &[f64]) -> bool {
        (k..self.dims).all(|j| {
            let c = self.coord(p, j);
            lo[j] <= c && c <= hi[j]
        })
    }

    fn query_level(&self, level: &Level, k: usize, lo: &[f64], hi: &[f64], out: &mut Vec<u32>) {
        match level {
            Level::Sorted { pts, keys } => {
                let a = keys.partition_point(|&x| x < lo[k]);
                let b = keys.partition_point(|&x| x <= hi[k]);
                if a < b {
                    out.extend_from_slice(&pts[a..b]);
                }
            }
            Level::Tree { nodes, root } => self.query_node(nodes, *root, k, lo, hi, out),
        }
    }

    fn query_node(&self, nodes: &[Node], i: u32, k: usize, lo: &[f64], hi: &[f64], out: &mut Vec<u32>) {
        let node = &nodes[i as usize];
        if node.hi < lo[k] || node.lo > hi[k] {
            return;
        }
        let covered = lo[k] <= node.lo && node.hi <= hi[k];
        match &node.kind {
            NodeKind::Leaf(pts) => {
                let from = if covered { k + 1 } else { k };
                out.extend(pts.iter().copied().filter(|&p| self.inside_from(p, from, lo, hi)));
            }
            NodeKind::Inner { left, right, assoc } => {
                if covered {
                    self.query_level(assoc, k + 1, lo, hi, out);
                } else {
                    self.query_node(nodes, *left, k, lo, hi, out);
                    self.query_node(nodes, *right, k, lo, hi, out);
                }
            }
        }
    }
}
