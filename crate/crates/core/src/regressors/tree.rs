//! CART regression tree: exhaustive split search over features and
//! midpoints between consecutive sorted unique values, maximizing weighted
//! variance (squared-error) reduction. Ties break toward the lowest feature
//! index, then the lowest threshold, so fits are reproducible.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Maximum number of split levels below the root; `None` grows until
    /// leaves are pure or too small.
    pub max_depth: Option<u32>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == Some(0) {
            return Err(Error::invalid("max_depth must be ≥ 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be ≥ 2"));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::invalid("min_samples_leaf must be ≥ 1"));
        }
        if self.max_features == Some(0) {
            return Err(Error::invalid("max_features must be ≥ 1"));
        }
        Ok(())
    }
}

/// Flat node storage; children are indices into the tree's node vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
        n_samples: u32,
    },
}

/// Wire format: trees serialize as nested nodes. In memory the nodes stay
/// flat for cache-friendly traversal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum NestedNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<NestedNode>,
        right: Box<NestedNode>,
    },
    Leaf {
        value: f64,
        n_samples: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeDump", into = "TreeDump")]
pub struct Tree {
    nodes: Vec<Node>,
    n_features: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TreeDump {
    n_features: usize,
    root: NestedNode,
}

impl From<Tree> for TreeDump {
    fn from(tree: Tree) -> Self {
        fn nest(nodes: &[Node], i: u32) -> NestedNode {
            match &nodes[i as usize] {
                Node::Leaf { value, n_samples } => NestedNode::Leaf {
                    value: *value,
                    n_samples: *n_samples,
                },
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => NestedNode::Internal {
                    feature: *feature,
                    threshold: *threshold,
                    left: Box::new(nest(nodes, *left)),
                    right: Box::new(nest(nodes, *right)),
                },
            }
        }
        TreeDump {
            n_features: tree.n_features,
            root: nest(&tree.nodes, 0),
        }
    }
}

impl TryFrom<TreeDump> for Tree {
    type Error = Error;

    fn try_from(dump: TreeDump) -> Result<Tree> {
        fn flatten(node: &NestedNode, nodes: &mut Vec<Node>) -> u32 {
            let index = nodes.len() as u32;
            nodes.push(Node::Leaf {
                value: 0.0,
                n_samples: 0,
            });
            match node {
                NestedNode::Leaf { value, n_samples } => {
                    nodes[index as usize] = Node::Leaf {
                        value: *value,
                        n_samples: *n_samples,
                    };
                }
                NestedNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let l = flatten(left, nodes);
                    let r = flatten(right, nodes);
                    nodes[index as usize] = Node::Internal {
                        feature: *feature,
                        threshold: *threshold,
                        left: l,
                        right: r,
                    };
                }
            }
            index
        }
        let mut nodes = Vec::new();
        flatten(&dump.root, &mut nodes);
        if dump.n_features == 0 {
            return Err(Error::invalid("tree dump has zero features"));
        }
        Ok(Tree {
            nodes,
            n_features: dump.n_features,
        })
    }
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    params: &'a TreeParams,
    n_split_features: usize,
    /// Per-feature row ids sorted by that feature's value; all features
    /// share segment boundaries during the build.
    sorted: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    /// Left-membership mask indexed by row id (duplicated bootstrap rows
    /// always land on the same side).
    mask: Vec<bool>,
    nodes: Vec<Node>,
    rng: Option<ChaCha8Rng>,
    feature_pool: Vec<usize>,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
    n_left: usize,
}

impl<'a> Builder<'a> {
    fn leaf(&mut self, lo: usize, hi: usize) -> u32 {
        let rows = &self.sorted[0][lo..hi];
        let sum: f64 = rows.iter().map(|&r| self.y[r as usize]).sum();
        let value = sum / rows.len() as f64;
        self.nodes.push(Node::Leaf {
            value,
            n_samples: rows.len() as u32,
        });
        (self.nodes.len() - 1) as u32
    }

    /// Pick the split features for this node: all of them, or a seeded
    /// sample without replacement, returned in ascending order.
    fn split_features(&mut self) -> Vec<usize> {
        let d = self.x.n_cols();
        if self.n_split_features >= d {
            return (0..d).collect();
        }
        let rng = self.rng.as_mut().expect("feature subsampling needs an RNG");
        let pool = &mut self.feature_pool;
        pool.clear();
        pool.extend(0..d);
        for i in 0..self.n_split_features {
            let j = rng.random_range(i..d);
            pool.swap(i, j);
        }
        let mut picked: Vec<usize> = pool[..self.n_split_features].to_vec();
        picked.sort_unstable();
        picked
    }

    fn find_split(&mut self, lo: usize, hi: usize) -> Option<BestSplit> {
        let n = hi - lo;
        let msl = self.params.min_samples_leaf;
        let total: f64 = self.sorted[0][lo..hi]
            .iter()
            .map(|&r| self.y[r as usize])
            .sum();
        let parent_score = total * total / n as f64;

        let mut best: Option<BestSplit> = None;
        for f in self.split_features() {
            let rows = &self.sorted[f][lo..hi];
            let mut left_sum = 0.0;
            for (i, &r) in rows[..n - 1].iter().enumerate() {
                left_sum += self.y[r as usize];
                let here = self.x.row(r as usize)[f];
                let next = self.x.row(rows[i + 1] as usize)[f];
                if here == next {
                    continue;
                }
                let n_left = i + 1;
                let n_right = n - n_left;
                if n_left < msl || n_right < msl {
                    continue;
                }
                let right_sum = total - left_sum;
                let score =
                    left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64;
                let better = match &best {
                    None => score > parent_score,
                    Some(b) => score > b.score,
                };
                if better {
                    best = Some(BestSplit {
                        score,
                        feature: f,
                        threshold: 0.5 * (here + next),
                        n_left,
                    });
                }
            }
        }
        best
    }

    /// Stable partition of every feature's sorted segment by the chosen
    /// split, preserving sort order within both children.
    fn partition(&mut self, lo: usize, hi: usize, split: &BestSplit) {
        for &r in &self.sorted[split.feature][lo..hi] {
            self.mask[r as usize] = self.x.row(r as usize)[split.feature] <= split.threshold;
        }
        for f in 0..self.x.n_cols() {
            self.scratch.clear();
            let mut write = lo;
            // In-place left compaction: the write cursor never passes the
            // read cursor, so rows are consumed before being overwritten.
            for pos in lo..hi {
                let r = self.sorted[f][pos];
                if self.mask[r as usize] {
                    self.sorted[f][write] = r;
                    write += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            debug_assert_eq!(write, lo + split.n_left);
            self.sorted[f][write..hi].copy_from_slice(&self.scratch);
        }
    }

    fn build(&mut self, lo: usize, hi: usize, depth: u32) -> u32 {
        let n = hi - lo;
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        if n < self.params.min_samples_split || depth_reached || self.is_pure(lo, hi) {
            return self.leaf(lo, hi);
        }
        let Some(split) = self.find_split(lo, hi) else {
            return self.leaf(lo, hi);
        };
        self.partition(lo, hi, &split);

        // Reserve this node's slot before building the subtrees.
        let index = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf {
            value: 0.0,
            n_samples: 0,
        });
        let mid = lo + split.n_left;
        let left = self.build(lo, mid, depth + 1);
        let right = self.build(mid, hi, depth + 1);
        self.nodes[index as usize] = Node::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        index
    }

    fn is_pure(&self, lo: usize, hi: usize) -> bool {
        let rows = &self.sorted[0][lo..hi];
        let first = self.y[rows[0] as usize];
        rows.iter().all(|&r| self.y[r as usize] == first)
    }
}

impl Tree {
    /// Fit on the rows named by `row_ids` (duplicates allowed, e.g. from a
    /// bootstrap resample). The RNG is only consulted when `max_features`
    /// restricts the per-split candidate set.
    pub fn fit_on_rows(
        x: &FeatureMatrix,
        y: &[f64],
        row_ids: &[u32],
        params: &TreeParams,
        rng: Option<ChaCha8Rng>,
    ) -> Result<Tree> {
        params.validate()?;
        if x.n_rows() != y.len() {
            return Err(Error::invalid(format!(
                "feature rows ({}) and targets ({}) differ",
                x.n_rows(),
                y.len()
            )));
        }
        if row_ids.is_empty() {
            return Err(Error::invalid("cannot fit a tree on zero rows"));
        }
        let d = x.n_cols();
        let sorted: Vec<Vec<u32>> = (0..d)
            .map(|f| {
                let mut ids = row_ids.to_vec();
                ids.sort_by(|&a, &b| {
                    x.row(a as usize)[f].total_cmp(&x.row(b as usize)[f])
                });
                ids
            })
            .collect();
        let mut builder = Builder {
            x,
            y,
            params,
            n_split_features: params.max_features.unwrap_or(d).min(d),
            sorted,
            scratch: Vec::with_capacity(row_ids.len()),
            mask: vec![false; x.n_rows()],
            nodes: Vec::new(),
            rng,
            feature_pool: Vec::with_capacity(d),
        };
        builder.build(0, row_ids.len(), 0);
        Ok(Tree {
            nodes: builder.nodes,
            n_features: d,
        })
    }

    pub fn fit(x: &FeatureMatrix, y: &[f64], params: &TreeParams, rng: Option<ChaCha8Rng>) -> Result<Tree> {
        let rows: Vec<u32> = (0..x.n_rows() as u32).collect();
        Tree::fit_on_rows(x, y, &rows, params, rng)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        loop {
            match node {
                Node::Leaf { value, .. } => return *value,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        &self.nodes[*left as usize]
                    } else {
                        &self.nodes[*right as usize]
                    };
                }
            }
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.n_cols(),
            });
        }
        Ok(x.rows().map(|r| self.predict_row(r)).collect())
    }

    pub fn max_depth(&self) -> u32 {
        fn depth(nodes: &[Node], i: u32) -> u32 {
            match &nodes[i as usize] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => {
                    1 + depth(nodes, *left).max(depth(nodes, *right))
                }
            }
        }
        depth(&self.nodes, 0)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn depth_one_stump_on_two_points() {
        let x = matrix(&[vec![0.0], vec![1.0]]);
        let y = [0.0, 10.0];
        let params = TreeParams {
            max_depth: Some(1),
            ..TreeParams::default()
        };
        let tree = Tree::fit(&x, &y, &params, None).unwrap();
        let preds = tree.predict(&matrix(&[vec![0.2], vec![0.9]])).unwrap();
        assert_eq!(preds, vec![0.0, 10.0]);
        assert_eq!(tree.max_depth(), 1);
    }

    #[test]
    fn constant_target_yields_single_leaf() {
        let x = matrix(&[vec![0.0], vec![1.0], vec![2.0]]);
        let y = [7.0, 7.0, 7.0];
        let tree = Tree::fit(&x, &y, &TreeParams::default(), None).unwrap();
        assert_eq!(tree.n_nodes(), 1);
        assert_eq!(tree.predict(&x).unwrap(), vec![7.0; 3]);
    }

    #[test]
    fn deep_tree_memorizes_distinct_rows() {
        let x = matrix(&[
            vec![1.0, 5.0],
            vec![2.0, 5.0],
            vec![3.0, 1.0],
            vec![4.0, 9.0],
        ]);
        let y = [10.0, 20.0, 30.0, 40.0];
        let tree = Tree::fit(&x, &y, &TreeParams::default(), None).unwrap();
        assert_eq!(tree.predict(&x).unwrap(), y.to_vec());
    }

    #[test]
    fn duplicate_features_become_mean_leaf() {
        // Replicated configs with different measurements cannot be split.
        let x = matrix(&[vec![1.0, 2.0], vec![1.0, 2.0]]);
        let y = [10.0, 20.0];
        let tree = Tree::fit(&x, &y, &TreeParams::default(), None).unwrap();
        assert_eq!(tree.n_nodes(), 1);
        assert_eq!(tree.predict_row(&[1.0, 2.0]), 15.0);
    }

    #[test]
    fn tie_breaks_prefer_lowest_feature_then_threshold() {
        // Both features separate the targets identically; feature 0 must win.
        let x = matrix(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
        let y = [0.0, 1.0];
        let tree = Tree::fit(&x, &y, &TreeParams::default(), None).unwrap();
        match &tree.nodes()[0] {
            Node::Internal { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
            }
            other => panic!("expected internal root, got {other:?}"),
        }
    }

    #[test]
    fn min_samples_leaf_respected() {
        let x = matrix(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let y = [0.0, 0.0, 0.0, 100.0];
        let params = TreeParams {
            min_samples_leaf: 2,
            ..TreeParams::default()
        };
        let tree = Tree::fit(&x, &y, &params, None).unwrap();
        fn check(nodes: &[Node], i: u32) {
            match &nodes[i as usize] {
                Node::Leaf { n_samples, .. } => assert!(*n_samples >= 2),
                Node::Internal { left, right, .. } => {
                    check(nodes, *left);
                    check(nodes, *right);
                }
            }
        }
        check(tree.nodes(), 0);
    }

    #[test]
    fn dimension_mismatch_on_predict() {
        let x = matrix(&[vec![0.0], vec![1.0]]);
        let tree = Tree::fit(&x, &[0.0, 1.0], &TreeParams::default(), None).unwrap();
        assert!(tree.predict(&matrix(&[vec![0.0, 1.0]])).is_err());
    }
}
