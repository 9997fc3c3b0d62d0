//! Weighted CART regression trees shared by the forest baseline and the
//! boosted risk classifier.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; clamped to `1..=n_features`.
    pub mtry: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

/// Training view. `x` is row-major; `rows` may repeat indices (bootstrap).
pub struct TrainSet<'a> {
    pub x: &'a [Vec<f64>],
    pub target: &'a [f64],
    pub weight: &'a [f64],
}

/// Node size times candidate features above which split search fans out.
const PARALLEL_WORK: usize = 50_000;

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Tree {
    /// Grows one tree minimizing weighted squared error on `target`.
    /// `leaf_value` computes the output of each terminal node from its rows.
    pub fn grow<R: Rng + ?Sized>(
        data: &TrainSet<'_>,
        rows: Vec<usize>,
        params: &TreeParams,
        rng: &mut R,
        leaf_value: &dyn Fn(&[usize]) -> f64,
    ) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        let n_features = data.x.first().map_or(0, Vec::len);
        tree.build(data, rows, 0, n_features, params, rng, leaf_value);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn build<R: Rng + ?Sized>(
        &mut self,
        data: &TrainSet<'_>,
        rows: Vec<usize>,
        depth: usize,
        n_features: usize,
        params: &TreeParams,
        rng: &mut R,
        leaf_value: &dyn Fn(&[usize]) -> f64,
    ) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let min_leaf = params.min_samples_leaf.max(1);
        let split = if depth < params.max_depth && rows.len() >= 2 * min_leaf && n_features > 0 {
            best_split(data, &rows, n_features, params, min_leaf, rng)
        } else {
            None
        };
        match split {
            None => {
                self.nodes[slot] = Node::Leaf {
                    value: leaf_value(&rows),
                };
            }
            Some(best) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| data.x[i][best.feature] <= best.threshold);
                drop(rows);
                let left = self.build(data, l, depth + 1, n_features, params, rng, leaf_value);
                let right = self.build(data, r, depth + 1, n_features, params, rng, leaf_value);
                self.nodes[slot] = Node::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left,
                    right,
                };
            }
        }
        slot
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn best_split<R: Rng + ?Sized>(
    data: &TrainSet<'_>,
    rows: &[usize],
    n_features: usize,
    params: &TreeParams,
    min_leaf: usize,
    rng: &mut R,
) -> Option<Best> {
    let (mut sw, mut sy) = (0.0, 0.0);
    for &i in rows {
        sw += data.weight[i];
        sy += data.weight[i] * data.target[i];
    }
    if sw <= 0.0 {
        return None;
    }
    let parent = sy * sy / sw;
    let floor = 1e-12 * parent.abs().max(1e-12);

    let mtry = params.mtry.clamp(1, n_features);
    let mut features = index::sample(rng, n_features, mtry).into_vec();
    features.sort_unstable();

    let scan = |f: usize| -> Option<Best> {
        let mut col: Vec<(f64, usize)> = rows.iter().map(|&i| (data.x[i][f], i)).collect();
        col.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n = col.len();
        let (mut lw, mut ly) = (0.0, 0.0);
        let mut best: Option<Best> = None;
        for k in 0..n - 1 {
            let (v, i) = col[k];
            lw += data.weight[i];
            ly += data.weight[i] * data.target[i];
            let next = col[k + 1].0;
            if k + 1 < min_leaf || n - k - 1 < min_leaf || v == next {
                continue;
            }
            let rw = sw - lw;
            if lw <= 0.0 || rw <= 0.0 {
                continue;
            }
            let ry = sy - ly;
            let gain = ly * ly / lw + ry * ry / rw - parent;
            // relative floor keeps float noise from producing pointless splits
            if gain > floor && best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = 0.5 * (v + next);
                if threshold >= next {
                    threshold = v;
                }
                best = Some(Best {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
        best
    };

    let per_feature: Vec<Option<Best>> = if rows.len() * features.len() >= PARALLEL_WORK {
        features.par_iter().map(|&f| scan(f)).collect()
    } else {
        features.iter().map(|&f| scan(f)).collect()
    };
    // reduce in feature order so ties resolve the same way on every run
    per_feature.into_iter().flatten().fold(None, |acc: Option<Best>, b| match acc {
        Some(a) if a.gain >= b.gain => Some(a),
        _ => Some(b),
    })
}

/// Writes a model as one JSON header line followed by one line per tree.
pub fn write_model<H: Serialize>(w: &mut impl Write, header: &H, trees: &[Tree]) -> std::io::Result<()> {
    writeln!(w, "{}", serde_json::to_string(header)?)?;
    for t in trees {
        writeln!(w, "{}", serde_json::to_string(t)?)?;
    }
    Ok(())
}

/// Reads the format produced by [`write_model`].
pub fn read_model<H: DeserializeOwned>(r: impl BufRead) -> Result<(H, Vec<Tree>)> {
    let mut lines = r.lines();
    let header: H = match lines.next() {
        Some(l) => serde_json::from_str(&l.map_err(|e| Error::data(e.to_string()))?)?,
        None => return Err(Error::data("empty model file")),
    };
    let trees = lines
        .map(|l| Ok(serde_json::from_str(&l.map_err(|e| Error::data(e.to_string()))?)?))
        .collect::<Result<Vec<Tree>>>()?;
    Ok((header, trees))
}

/// Weighted mean of `target` over `rows`. Accumulated as offsets from the
/// first row so a constant column comes back exactly.
pub fn weighted_mean(data: &TrainSet<'_>, rows: &[usize]) -> f64 {
    let Some(&first) = rows.first() else {
        return 0.0;
    };
    let origin = data.target[first];
    let (mut sw, mut sd) = (0.0, 0.0);
    for &i in rows {
        sw += data.weight[i];
        sd += data.weight[i] * (data.target[i] - origin);
    }
    if sw > 0.0 {
        origin + sd / sw
    } else {
        origin
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fit(x: &[Vec<f64>], y: &[f64], depth: usize, min_leaf: usize) -> Tree {
        let w = vec![1.0; y.len()];
        let data = TrainSet {
            x,
            target: y,
            weight: &w,
        };
        let params = TreeParams {
            max_depth: depth,
            min_samples_leaf: min_leaf,
            mtry: usize::MAX,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Tree::grow(&data, (0..y.len()).collect(), &params, &mut rng, &|r| weighted_mean(&data, r))
    }

    #[test]
    fn single_split_by_hand() {
        // best cut separates {1,2} from {10,11}: threshold midway between 2 and 10
        let x = vec![vec![1.0], vec![2.0], vec![10.0], vec![11.0]];
        let y = [0.0, 1.0, 5.0, 7.0];
        let t = fit(&x, &y, 1, 1);
        assert_eq!(
            t.nodes[0],
            Node::Split {
                feature: 0,
                threshold: 6.0,
                left: 1,
                right: 2
            }
        );
        assert_eq!(t.predict(&[0.0]), 0.5);
        assert_eq!(t.predict(&[6.0]), 0.5);
        assert_eq!(t.predict(&[6.5]), 6.0);
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let t = fit(&x, &[0.8; 20], 8, 1);
        assert_eq!(t.nodes, vec![Node::Leaf { value: 0.8 }]);
    }

    #[test]
    fn depth_and_leaf_size_limits() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64).collect();
        let t = fit(&x, &y, 3, 1);
        assert!(t.depth() <= 3);
        let t = fit(&x, &y, 20, 8);
        let mut counts = std::collections::BTreeMap::new();
        for r in &x {
            *counts.entry(t.predict(r).to_bits()).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 8));
    }
}
