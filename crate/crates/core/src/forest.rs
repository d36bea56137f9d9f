//! Random forest of CART classification trees.
//!
//! Each tree is grown on a bootstrap resample of the training rows, drawing
//! `floor(sqrt(n_features))` candidate features at every node (constant
//! features do not count toward that budget) and splitting on the lowest
//! weighted Gini impurity. Tree `i` draws from the ChaCha stream `(seed, i)`,
//! so trees can be grown in any order and the result is reproducible.
//!
//! Prediction is a majority vote; ties go to the lowest class index.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::{seeded, SeededRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 40,
            min_samples_leaf: 1,
            seed: 42,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig(
                "n_trees, max_depth and min_samples_leaf must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Leaf {
        class: u32,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class as usize,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| (c as f64 / n) * (c as f64 / n))
        .sum::<f64>()
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    n_features: usize,
    max_features: usize,
    config: &'a ForestConfig,
    rng: SeededRng,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

struct BestSplit {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> u32 {
        let mut counts = vec![0usize; self.n_classes];
        for &i in idx.iter() {
            counts[self.y[i]] += 1;
        }
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: majority(&counts) as u32,
        });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.config.max_depth || idx.len() < 2 * self.config.min_samples_leaf {
            return slot as u32;
        }
        let Some(best) = self.best_split(idx) else {
            return slot as u32;
        };

        let (f, t) = (best.feature, best.threshold);
        let x = self.x;
        idx.sort_by(|&a, &b| (x[a][f] > t).cmp(&(x[b][f] > t)).then(a.cmp(&b)));
        let n_left = idx.iter().take_while(|&&i| x[i][f] <= t).count();
        let (l, r) = idx.split_at_mut(n_left);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: f as u32,
            threshold: t,
            left,
            right,
        };
        slot as u32
    }

    fn best_split(&mut self, idx: &mut [usize]) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.config.min_samples_leaf;
        let mut features = core::mem::take(&mut self.features);
        features.shuffle(&mut self.rng);

        let mut best: Option<BestSplit> = None;
        let mut visited = 0usize;
        let mut left = vec![0usize; self.n_classes];
        let mut total = vec![0usize; self.n_classes];
        for &i in idx.iter() {
            total[self.y[i]] += 1;
        }
        for &f in &features {
            if visited >= self.max_features {
                break;
            }
            let x = self.x;
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            if x[idx[0]][f] == x[idx[n - 1]][f] {
                continue;
            }
            visited += 1;
            left.iter_mut().for_each(|c| *c = 0);
            let mut right = total.clone();
            for pos in 0..n - 1 {
                let c = self.y[idx[pos]];
                left[c] += 1;
                right[c] -= 1;
                let (lo, hi) = (x[idx[pos]][f], x[idx[pos + 1]][f]);
                let n_left = pos + 1;
                if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let impurity = (n_left as f64 * gini(&left, n_left)
                    + (n - n_left) as f64 * gini(&right, n - n_left))
                    / n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some(BestSplit {
                        impurity,
                        feature: f,
                        threshold: if mid < hi { mid } else { lo },
                    });
                }
            }
        }
        self.features = features;
        best
    }
}

/// The result of a forest vote.
#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub class: usize,
    /// Fraction of trees voting for each class; sums to 1.
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    config: ForestConfig,
    n_features: usize,
    n_classes: usize,
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Grows `config.n_trees` trees on rows `x` with class indices `y`.
    pub fn fit(
        config: &ForestConfig,
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
    ) -> Result<Self> {
        config.validate()?;
        let trees = (0..config.n_trees)
            .map(|t| Self::fit_tree(config, x, y, n_classes, t))
            .collect::<Result<Vec<_>>>()?;
        Self::from_trees(config, x[0].len(), n_classes, trees)
    }

    /// Grows tree number `tree_index` alone, for callers that parallelize.
    pub fn fit_tree(
        config: &ForestConfig,
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        tree_index: usize,
    ) -> Result<DecisionTree> {
        if x.is_empty() {
            return Err(Error::EmptyInput("forest training rows"));
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        let n_features = x[0].len();
        if n_features == 0 {
            return Err(Error::EmptyInput("forest features"));
        }
        if let Some(r) = x.iter().find(|r| r.len() != n_features) {
            return Err(Error::ShapeMismatch {
                expected: n_features,
                found: r.len(),
            });
        }
        if let Some(&c) = y.iter().find(|&&c| c >= n_classes) {
            return Err(Error::ShapeMismatch {
                expected: n_classes,
                found: c + 1,
            });
        }

        let mut rng = seeded(config.seed, tree_index as u64);
        let n = x.len();
        let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let max_features = (libm::sqrt(n_features as f64) as usize).max(1);
        let mut grower = Grower {
            x,
            y,
            n_classes,
            n_features,
            max_features,
            config,
            rng,
            nodes: Vec::new(),
            features: (0..n_features).collect(),
        };
        grower.grow(&mut idx, 0);
        debug_assert!(grower.n_features == n_features);
        Ok(DecisionTree {
            nodes: grower.nodes,
        })
    }

    pub fn from_trees(
        config: &ForestConfig,
        n_features: usize,
        n_classes: usize,
        trees: Vec<DecisionTree>,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::EmptyInput("forest trees"));
        }
        Ok(RandomForest {
            config: *config,
            n_features,
            n_classes,
            trees,
        })
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn predict(&self, row: &[f64]) -> Result<Vote> {
        if row.len() != self.n_features {
            return Err(Error::ShapeMismatch {
                expected: self.n_features,
                found: row.len(),
            });
        }
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict(row)] += 1;
        }
        let n = self.trees.len() as f64;
        Ok(Vote {
            class: majority(&votes),
            fractions: votes.iter().map(|&v| v as f64 / n).collect(),
        })
    }

    /// Versioned little-endian encoding; see [`RandomForest::from_bytes`].
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FOREST_MAGIC);
        put_u32(&mut out, FOREST_VERSION);
        put_u32(&mut out, self.config.n_trees as u32);
        put_u32(&mut out, self.config.max_depth as u32);
        put_u32(&mut out, self.config.min_samples_leaf as u32);
        out.extend_from_slice(&self.config.seed.to_le_bytes());
        put_u32(&mut out, self.n_features as u32);
        put_u32(&mut out, self.n_classes as u32);
        put_u32(&mut out, self.trees.len() as u32);
        for t in &self.trees {
            put_u32(&mut out, t.nodes.len() as u32);
            for node in &t.nodes {
                match *node {
                    Node::Leaf { class } => {
                        out.push(0);
                        put_u32(&mut out, class);
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        out.push(1);
                        put_u32(&mut out, feature);
                        out.extend_from_slice(&threshold.to_le_bytes());
                        put_u32(&mut out, left);
                        put_u32(&mut out, right);
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != FOREST_MAGIC {
            return Err(Error::Decode("bad forest magic".into()));
        }
        let version = r.u32()?;
        if version != FOREST_VERSION {
            return Err(Error::Decode(alloc::format!(
                "unsupported forest version {version}"
            )));
        }
        let config = ForestConfig {
            n_trees: r.u32()? as usize,
            max_depth: r.u32()? as usize,
            min_samples_leaf: r.u32()? as usize,
            seed: r.u64()?,
        };
        let n_features = r.u32()? as usize;
        let n_classes = r.u32()? as usize;
        let n_trees = r.u32()? as usize;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            let n_nodes = r.u32()? as usize;
            if n_nodes == 0 {
                return Err(Error::Decode("empty tree".into()));
            }
            let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
            for i in 0..n_nodes {
                let node = match r.take(1)?[0] {
                    0 => Node::Leaf { class: r.u32()? },
                    1 => Node::Split {
                        feature: r.u32()?,
                        threshold: f64::from_bits(r.u64()?),
                        left: r.u32()?,
                        right: r.u32()?,
                    },
                    tag => return Err(Error::Decode(alloc::format!("bad node tag {tag}"))),
                };
                let ok = match node {
                    Node::Leaf { class } => (class as usize) < n_classes,
                    Node::Split {
                        feature,
                        left,
                        right,
                        ..
                    } => {
                        (feature as usize) < n_features
                            && (left as usize) > i
                            && (right as usize) > i
                            && (left as usize) < n_nodes
                            && (right as usize) < n_nodes
                    }
                };
                if !ok {
                    return Err(Error::Decode(alloc::format!("node {i} out of range")));
                }
                nodes.push(node);
            }
            trees.push(DecisionTree { nodes });
        }
        if r.pos != bytes.len() {
            return Err(Error::Decode("trailing bytes after forest".into()));
        }
        Self::from_trees(&config, n_features, n_classes, trees)
    }
}

const FOREST_MAGIC: &[u8; 4] = b"RFC1";
const FOREST_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Decode("truncated forest".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
