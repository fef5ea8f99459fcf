//! Binary bounding-volume hierarchy over (space x time) interval leaves.
//!
//! Topology is built once by longest-axis median split and then only changes
//! by leaf subdivision: a leaf is replaced in place by an internal node with
//! the two half-interval children, leaving every other leaf untouched. Boxes
//! are refit against the current trajectory before each query; a freshly
//! subdivided child inherits its parent's box, which stays conservative
//! until the next refit.

use crate::geometry::Aabb;

#[derive(Debug, Clone)]
pub enum NodeKind {
    Internal { left: usize, right: usize },
    Leaf { pair: usize, t0: f64, t1: f64 },
}

#[derive(Debug, Clone)]
pub struct Node {
    pub aabb: Aabb,
    pub kind: NodeKind,
}

#[derive(Debug, Clone)]
pub struct STBvh {
    nodes: Vec<Node>,
    root: Option<usize>,
    /// Node id per (pair, interval index), kept aligned with the partition
    /// lists owned by the constraint set.
    leaf_ids: Vec<Vec<usize>>,
}

impl STBvh {
    /// Builds over one entry per (pair, interval), in pair-major order.
    pub fn build(pair_count: usize, leaves: &[(usize, f64, f64, Aabb)]) -> Self {
        let mut bvh = STBvh {
            nodes: Vec::with_capacity(2 * leaves.len()),
            root: None,
            leaf_ids: vec![Vec::new(); pair_count],
        };
        if leaves.is_empty() {
            return bvh;
        }
        let mut order: Vec<usize> = (0..leaves.len()).collect();
        let root = bvh.build_recursive(leaves, &mut order);
        bvh.root = Some(root);
        // leaf_ids must follow interval order per pair; collect and sort.
        for per_pair in &mut bvh.leaf_ids {
            per_pair.clear();
        }
        let mut found: Vec<(usize, f64, usize)> = Vec::with_capacity(leaves.len());
        for (id, node) in bvh.nodes.iter().enumerate() {
            if let NodeKind::Leaf { pair, t0, .. } = node.kind {
                found.push((pair, t0, id));
            }
        }
        found.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()));
        for (pair, _, id) in found {
            bvh.leaf_ids[pair].push(id);
        }
        bvh
    }

    fn build_recursive(
        &mut self,
        leaves: &[(usize, f64, f64, Aabb)],
        order: &mut [usize],
    ) -> usize {
        if order.len() == 1 {
            let (pair, t0, t1, aabb) = leaves[order[0]];
            self.nodes.push(Node {
                aabb,
                kind: NodeKind::Leaf { pair, t0, t1 },
            });
            return self.nodes.len() - 1;
        }
        let mut bounds = leaves[order[0]].3;
        for &i in order.iter().skip(1) {
            bounds = bounds.union(&leaves[i].3);
        }
        let axis = bounds.longest_axis();
        // Median split on box centers; ties resolve by (pair, t0) so the
        // topology is independent of the input permutation.
        order.sort_by(|&a, &b| {
            let ca = leaves[a].3.center()[axis];
            let cb = leaves[b].3.center()[axis];
            ca.partial_cmp(&cb)
                .unwrap()
                .then(leaves[a].0.cmp(&leaves[b].0))
                .then(leaves[a].1.partial_cmp(&leaves[b].1).unwrap())
        });
        let mid = order.len() / 2;
        let (left_order, right_order) = order.split_at_mut(mid);
        let left = self.build_recursive(leaves, left_order);
        let right = self.build_recursive(leaves, right_order);
        let aabb = self.nodes[left].aabb.union(&self.nodes[right].aabb);
        self.nodes.push(Node {
            aabb,
            kind: NodeKind::Internal { left, right },
        });
        self.nodes.len() - 1
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_ids.iter().map(Vec::len).sum()
    }

    /// Replaces leaf `interval` of `pair` with an internal node whose
    /// children carry the two half-intervals.
    pub fn subdivide_leaf(&mut self, pair: usize, interval: usize, mid: f64) {
        let node_id = self.leaf_ids[pair][interval];
        let (t0, t1, aabb) = match self.nodes[node_id].kind {
            NodeKind::Leaf { t0, t1, .. } => (t0, t1, self.nodes[node_id].aabb),
            NodeKind::Internal { .. } => unreachable!("leaf_ids points at a leaf"),
        };
        debug_assert!(t0 < mid && mid < t1);
        let left = self.nodes.len();
        self.nodes.push(Node {
            aabb,
            kind: NodeKind::Leaf { pair, t0, t1: mid },
        });
        let right = self.nodes.len();
        self.nodes.push(Node {
            aabb,
            kind: NodeKind::Leaf { pair, t0: mid, t1 },
        });
        self.nodes[node_id].kind = NodeKind::Internal { left, right };
        self.leaf_ids[pair].splice(interval..=interval, [left, right]);
    }

    /// Recomputes every box bottom-up from a per-leaf box function.
    pub fn refit(&mut self, leaf_box: &mut dyn FnMut(usize, f64, f64) -> Aabb) {
        if let Some(root) = self.root {
            self.refit_node(root, leaf_box);
        }
    }

    fn refit_node(&mut self, id: usize, leaf_box: &mut dyn FnMut(usize, f64, f64) -> Aabb) -> Aabb {
        let kind = self.nodes[id].kind.clone();
        let aabb = match kind {
            NodeKind::Leaf { pair, t0, t1 } => leaf_box(pair, t0, t1),
            NodeKind::Internal { left, right } => {
                let l = self.refit_node(left, leaf_box);
                let r = self.refit_node(right, leaf_box);
                l.union(&r)
            }
        };
        self.nodes[id].aabb = aabb;
        aabb
    }

    /// Collects leaves whose box is within `margin` of `target`.
    pub fn query(&self, target: &Aabb, margin: f64, out: &mut Vec<(usize, f64, f64)>) {
        if let Some(root) = self.root {
            self.query_node(root, target, margin, out);
        }
    }

    fn query_node(
        &self,
        id: usize,
        target: &Aabb,
        margin: f64,
        out: &mut Vec<(usize, f64, f64)>,
    ) {
        let node = &self.nodes[id];
        if node.aabb.distance_to(target) > margin {
            return;
        }
        match node.kind {
            NodeKind::Leaf { pair, t0, t1 } => out.push((pair, t0, t1)),
            NodeKind::Internal { left, right } => {
                self.query_node(left, target, margin, out);
                self.query_node(right, target, margin, out);
            }
        }
    }

    /// Every leaf box together with its interval, for soundness checks.
    pub fn leaves(&self) -> Vec<(usize, f64, f64, Aabb)> {
        let mut out = Vec::with_capacity(self.leaf_count());
        for per_pair in &self.leaf_ids {
            for &id in per_pair {
                if let NodeKind::Leaf { pair, t0, t1 } = self.nodes[id].kind {
                    out.push((pair, t0, t1, self.nodes[id].aabb));
                }
            }
        }
        out
    }

    /// Checks the enclosure invariant: every node's box contains its
    /// children's boxes.
    #[cfg(test)]
    pub fn boxes_are_nested(&self) -> bool {
        self.nodes.iter().all(|node| match node.kind {
            NodeKind::Leaf { .. } => true,
            NodeKind::Internal { left, right } => {
                node.aabb.contains(&self.nodes[left].aabb)
                    && node.aabb.contains(&self.nodes[right].aabb)
            }
        })
    }
}
