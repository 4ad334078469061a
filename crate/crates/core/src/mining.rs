//! Frequent topic patterns by FP-growth, and random-forest feature ranking by
//! mean decrease in Gini impurity.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::csv_field;
use crate::error::{Error, Result};

/// Minimum absolute support used when none is configured.
pub const DEFAULT_MIN_SUPPORT: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: String,
    pub items: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pattern {
    /// Sorted ascending.
    pub items: Vec<u32>,
    pub support: u64,
}

/// Itemsets ordered by support descending, then size, then items.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSet {
    pub min_support: u64,
    pub patterns: Vec<Pattern>,
}

impl PatternSet {
    fn from_patterns(min_support: u64, mut patterns: Vec<Pattern>) -> Self {
        patterns.sort_by(|a, b| {
            b.support
                .cmp(&a.support)
                .then(a.items.len().cmp(&b.items.len()))
                .then_with(|| a.items.cmp(&b.items))
        });
        PatternSet {
            min_support,
            patterns,
        }
    }

    pub fn support_of(&self, items: &[u32]) -> Option<u64> {
        let mut key = items.to_vec();
        key.sort_unstable();
        self.patterns
            .iter()
            .find(|p| p.items == key)
            .map(|p| p.support)
    }

    /// CSV `items,support`, items `;`-joined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("items,support\n");
        for p in &self.patterns {
            let items: Vec<String> = p.items.iter().map(u32::to_string).collect();
            out.push_str(&format!("{},{}\n", items.join(";"), p.support));
        }
        out
    }
}

#[derive(Debug)]
struct FpNode {
    item: u32,
    count: u64,
    parent: usize,
    children: Vec<usize>,
}

const ROOT: usize = 0;

struct FpTree {
    nodes: Vec<FpNode>,
    /// Nodes of each item, in insertion order.
    header: BTreeMap<u32, Vec<usize>>,
    /// Frequent items in tree order: support descending, then id.
    order: Vec<(u32, u64)>,
}

impl FpTree {
    fn build(weighted: &[(Vec<u32>, u64)], min_support: u64) -> Self {
        let mut freq: HashMap<u32, u64> = HashMap::new();
        for (items, w) in weighted {
            for &i in items {
                *freq.entry(i).or_default() += w;
            }
        }
        let mut order: Vec<(u32, u64)> = freq
            .into_iter()
            .filter(|&(_, c)| c >= min_support)
            .collect();
        order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let rank: HashMap<u32, usize> = order
            .iter()
            .enumerate()
            .map(|(r, &(i, _))| (i, r))
            .collect();

        let mut tree = FpTree {
            nodes: vec![FpNode {
                item: u32::MAX,
                count: 0,
                parent: ROOT,
                children: Vec::new(),
            }],
            header: BTreeMap::new(),
            order,
        };
        let mut path = Vec::new();
        for (items, w) in weighted {
            path.clear();
            path.extend(items.iter().copied().filter(|i| rank.contains_key(i)));
            path.sort_by_key(|i| rank[i]);
            path.dedup();
            let mut at = ROOT;
            for &item in &path {
                let existing = tree.nodes[at]
                    .children
                    .iter()
                    .copied()
                    .find(|&c| tree.nodes[c].item == item);
                at = match existing {
                    Some(c) => c,
                    None => {
                        let id = tree.nodes.len();
                        tree.nodes.push(FpNode {
                            item,
                            count: 0,
                            parent: at,
                            children: Vec::new(),
                        });
                        tree.nodes[at].children.push(id);
                        tree.header.entry(item).or_default().push(id);
                        id
                    }
                };
                tree.nodes[at].count += w;
            }
        }
        tree
    }

    fn prefix_path(&self, mut node: usize) -> Vec<u32> {
        let mut path = Vec::new();
        node = self.nodes[node].parent;
        while node != ROOT {
            path.push(self.nodes[node].item);
            node = self.nodes[node].parent;
        }
        path.reverse();
        path
    }
}

fn mine(weighted: &[(Vec<u32>, u64)], min_support: u64, suffix: &[u32], out: &mut Vec<Pattern>) {
    let tree = FpTree::build(weighted, min_support);
    // least frequent first, as in the classic formulation
    for &(item, support) in tree.order.iter().rev() {
        let mut items = suffix.to_vec();
        items.push(item);
        items.sort_unstable();
        out.push(Pattern {
            items: items.clone(),
            support,
        });
        let base: Vec<(Vec<u32>, u64)> = tree.header[&item]
            .iter()
            .map(|&n| (tree.prefix_path(n), tree.nodes[n].count))
            .filter(|(p, _)| !p.is_empty())
            .collect();
        if !base.is_empty() {
            mine(&base, min_support, &items, out);
        }
    }
}

/// All itemsets with support at least `min_support` (which must be ≥ 1).
pub fn fpgrowth<T: AsRef<[u32]>>(transactions: &[T], min_support: u64) -> Result<PatternSet> {
    if min_support == 0 {
        return Err(Error::Config("min_support must be at least 1".into()));
    }
    let weighted: Vec<(Vec<u32>, u64)> = transactions
        .iter()
        .map(|t| (t.as_ref().to_vec(), 1))
        .collect();
    let mut out = Vec::new();
    mine(&weighted, min_support, &[], &mut out);
    Ok(PatternSet::from_patterns(min_support, out))
}

/// The `top_n` most frequent itemsets of size two.
pub fn frequent_pairs<T: AsRef<[u32]>>(
    transactions: &[T],
    top_n: usize,
    min_support: u64,
) -> Result<Vec<Pattern>> {
    let set = fpgrowth(transactions, min_support)?;
    Ok(set
        .patterns
        .into_iter()
        .filter(|p| p.items.len() == 2)
        .take(top_n)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    /// Candidate features per split; `None` means ⌈√F⌉.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            max_features: None,
            bootstrap: true,
            max_depth: None,
            min_samples_leaf: 1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TreeNode {
    Leaf {
        positive: f64,
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
    nodes: Vec<TreeNode>,
    /// Weighted impurity decrease credited to each feature.
    importance: Vec<f64>,
    /// Rows drawn for this tree (with multiplicity).
    in_bag: Vec<u32>,
}

impl Tree {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { positive } => return *positive,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub cfg: ForestConfig,
    pub n_features: usize,
    trees: Vec<Tree>,
}

fn gini(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    weight: Vec<f64>,
    total_weight: f64,
    max_features: usize,
    cfg: &'a ForestConfig,
    nodes: Vec<TreeNode>,
    importance: Vec<f64>,
    features: Vec<usize>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Grower<'_> {
    fn node_stats(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(p, t), &r| {
            (
                p + if self.y[r] { self.weight[r] } else { 0.0 },
                t + self.weight[r],
            )
        })
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        let (pos, total) = self.node_stats(&rows);
        self.nodes.push(TreeNode::Leaf {
            positive: pos / total,
        });
        let impurity = gini(pos, total);
        let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);
        if impurity == 0.0 || !depth_ok || rows.len() < 2 * self.cfg.min_samples_leaf {
            return id;
        }
        let Some(best) = self.best_split(&rows, pos, total, impurity, rng) else {
            return id;
        };
        self.importance[best.feature] += best.decrease;
        let left = self.grow(best.left, depth + 1, rng);
        let right = self.grow(best.right, depth + 1, rng);
        self.nodes[id] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Tries features in random order until `max_features` non-constant
    /// ones have been evaluated.
    fn best_split(
        &mut self,
        rows: &[usize],
        pos: f64,
        total: f64,
        impurity: f64,
        rng: &mut ChaCha8Rng,
    ) -> Option<BestSplit> {
        self.features.shuffle(rng);
        let mut best: Option<(usize, f64, f64, usize)> = None;
        let mut visited = 0;
        let mut sorted = rows.to_vec();
        let min_leaf = self.cfg.min_samples_leaf;
        for fi in 0..self.features.len() {
            if visited >= self.max_features {
                break;
            }
            let f = self.features[fi];
            sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            if self.x[sorted[0]][f] == self.x[sorted[sorted.len() - 1]][f] {
                continue;
            }
            visited += 1;
            let (mut lp, mut lt) = (0.0, 0.0);
            for i in 0..sorted.len() - 1 {
                let r = sorted[i];
                lt += self.weight[r];
                if self.y[r] {
                    lp += self.weight[r];
                }
                let (v, next) = (self.x[r][f], self.x[sorted[i + 1]][f]);
                if v == next || i + 1 < min_leaf || sorted.len() - i - 1 < min_leaf {
                    continue;
                }
                let (rp, rt) = (pos - lp, total - lt);
                let child = (lt / total) * gini(lp, lt) + (rt / total) * gini(rp, rt);
                let decrease = (total / self.total_weight) * (impurity - child);
                if best.is_none_or(|b| decrease > b.2) {
                    let mut threshold = v / 2.0 + next / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some((f, threshold, decrease, i + 1));
                }
            }
        }
        let (feature, threshold, decrease, _) = best?;
        let (left, right) = rows.iter().partition(|&&r| self.x[r][feature] <= threshold);
        Some(BestSplit {
            feature,
            threshold,
            decrease: decrease.max(0.0),
            left,
            right,
        })
    }
}

fn grow_tree(
    x: &[Vec<f64>],
    y: &[bool],
    cfg: &ForestConfig,
    max_features: usize,
    seed: u64,
) -> Tree {
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_bag: Vec<u32> = if cfg.bootstrap {
        (0..n).map(|_| rng.random_range(0..n as u32)).collect()
    } else {
        (0..n as u32).collect()
    };
    let mut weight = vec![0.0; n];
    for &r in &in_bag {
        weight[r as usize] += 1.0;
    }
    let rows: Vec<usize> = (0..n).filter(|&r| weight[r] > 0.0).collect();
    let f = x[0].len();
    let mut g = Grower {
        x,
        y,
        total_weight: weight.iter().sum(),
        weight,
        max_features,
        cfg,
        nodes: Vec::new(),
        importance: vec![0.0; f],
        features: (0..f).collect(),
    };
    g.grow(rows, 0, &mut rng);
    Tree {
        nodes: g.nodes,
        importance: g.importance,
        in_bag,
    }
}

/// Fits `cfg.trees` CART trees on bootstrap samples with Gini splits. Tree
/// seeds are drawn up front from `cfg.seed`, so the forest does not depend
/// on how trees are scheduled across threads.
pub fn train_forest(x: &[Vec<f64>], y: &[bool], cfg: &ForestConfig) -> Result<Forest> {
    if cfg.trees == 0 || cfg.min_samples_leaf == 0 {
        return Err(Error::Config(
            "forest needs at least one tree and min_samples_leaf >= 1".into(),
        ));
    }
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Config(format!(
            "{} feature rows for {} labels",
            x.len(),
            y.len()
        )));
    }
    let f = x[0].len();
    if f == 0 || x.iter().any(|r| r.len() != f) {
        return Err(Error::Config(
            "feature rows must share a non-zero width".into(),
        ));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config("features must be finite".into()));
    }
    let positives = y.iter().filter(|&&b| b).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::SingleClass);
    }
    if positives < 2 || y.len() - positives < 2 {
        return Err(Error::Config(
            "each class needs at least two samples".into(),
        ));
    }
    let max_features = cfg
        .max_features
        .unwrap_or_else(|| (f as f64).sqrt().ceil() as usize)
        .clamp(1, f);
    let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.trees).map(|_| seeder.random()).collect();
    let trees = seeds
        .par_iter()
        .map(|&s| grow_tree(x, y, cfg, max_features, s))
        .collect();
    Ok(Forest {
        cfg: cfg.clone(),
        n_features: f,
        trees,
    })
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_proba(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.predict_proba(x) > 0.5
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[bool]) -> f64 {
        let hits = x
            .iter()
            .zip(y)
            .filter(|(r, &l)| self.predict(r) == l)
            .count();
        hits as f64 / y.len() as f64
    }

    /// Accuracy over rows using only the trees that did not draw them;
    /// `None` when every row was in every bag.
    pub fn oob_accuracy(&self, x: &[Vec<f64>], y: &[bool]) -> Option<f64> {
        let mut hits = 0usize;
        let mut scored = 0usize;
        let bags: Vec<Vec<bool>> = self
            .trees
            .iter()
            .map(|t| {
                let mut b = vec![false; x.len()];
                t.in_bag.iter().for_each(|&r| b[r as usize] = true);
                b
            })
            .collect();
        for (r, row) in x.iter().enumerate() {
            let probs: Vec<f64> = self
                .trees
                .iter()
                .zip(&bags)
                .filter(|(_, b)| !b[r])
                .map(|(t, _)| t.predict_proba(row))
                .collect();
            if probs.is_empty() {
                continue;
            }
            scored += 1;
            let p = probs.iter().sum::<f64>() / probs.len() as f64;
            if (p > 0.5) == y[r] {
                hits += 1;
            }
        }
        (scored > 0).then(|| hits as f64 / scored as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub features: Vec<String>,
    pub importances: Vec<f64>,
    /// Feature indices, most important first (ties by index).
    pub ranking: Vec<usize>,
}

impl ImportanceReport {
    /// CSV `rank,feature,mdi`, ranks starting at 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,feature,mdi\n");
        for (rank, &f) in self.ranking.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{:.6}\n",
                rank + 1,
                csv_field(&self.features[f]),
                self.importances[f]
            ));
        }
        out
    }
}

/// Mean decrease in impurity: each split credits its feature with
/// (node weight fraction) × (Gini decrease); credits are averaged over trees
/// and normalised to sum to 1. A forest without any split reports zeros.
pub fn mdi<S: AsRef<str>>(forest: &Forest, names: &[S]) -> ImportanceReport {
    let f = forest.n_features;
    let mut imp = vec![0.0; f];
    for t in &forest.trees {
        for (a, b) in imp.iter_mut().zip(&t.importance) {
            *a += b;
        }
    }
    let total: f64 = imp.iter().sum();
    if total > 0.0 {
        imp.iter_mut().for_each(|v| *v /= total);
    }
    let mut ranking: Vec<usize> = (0..f).collect();
    ranking.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
    ImportanceReport {
        features: (0..f)
            .map(|i| {
                names
                    .get(i)
                    .map_or_else(|| format!("f{i}"), |s| s.as_ref().to_string())
            })
            .collect(),
        importances: imp,
        ranking,
    }
}

/// Feature matrix as CSV: `broadcast_id`, one column per feature, `label` last.
pub fn feature_matrix_csv<S: AsRef<str>>(
    names: &[S],
    ids: &[String],
    x: &[Vec<f64>],
    y: &[bool],
) -> String {
    let mut out = String::from("broadcast_id");
    for n in names {
        out.push(',');
        out.push_str(&csv_field(n.as_ref()));
    }
    out.push_str(",label\n");
    for ((id, row), &label) in ids.iter().zip(x).zip(y) {
        out.push_str(&csv_field(id));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(if label { ",1\n" } else { ",0\n" });
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::collections::BTreeSet;

    /// Support of every non-empty itemset over the items present, by
    /// enumerating subsets of each transaction.
    pub(crate) fn brute_force<T: AsRef<[u32]>>(
        transactions: &[T],
        min_support: u64,
    ) -> Vec<Pattern> {
        let mut counts: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
        for t in transactions {
            let items: Vec<u32> = t
                .as_ref()
                .iter()
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            for mask in 1u32..(1 << items.len()) {
                let subset: Vec<u32> = (0..items.len())
                    .filter(|&i| mask & (1 << i) != 0)
                    .map(|i| items[i])
                    .collect();
                *counts.entry(subset).or_default() += 1;
            }
        }
        let mut out: Vec<Pattern> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_support)
            .map(|(items, support)| Pattern { items, support })
            .collect();
        out.sort();
        out
    }

    fn sorted(mut p: Vec<Pattern>) -> Vec<Pattern> {
        p.sort();
        p
    }

    #[test]
    fn small_example() {
        let (a, b, c) = (0, 1, 2);
        let tx = vec![vec![a, b, c], vec![a, b], vec![b, c]];
        let got = fpgrowth(&tx, 2).unwrap();
        let expected = vec![
            (vec![b], 3),
            (vec![a], 2),
            (vec![c], 2),
            (vec![a, b], 2),
            (vec![b, c], 2),
        ];
        let got: Vec<(Vec<u32>, u64)> = got
            .patterns
            .into_iter()
            .map(|p| (p.items, p.support))
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn empty_and_single_transaction() {
        assert!(fpgrowth(&Vec::<Vec<u32>>::new(), 1)
            .unwrap()
            .patterns
            .is_empty());
        let got = fpgrowth(&[vec![7, 3]], 1).unwrap();
        assert_eq!(got.patterns.len(), 3);
        assert!(got.patterns.iter().all(|p| p.support == 1));
        assert!(fpgrowth(&[vec![1]], 0).is_err());
    }

    #[test]
    fn pair_tie_rule() {
        let tx = vec![vec![1, 2, 3], vec![1, 2], vec![2, 3]];
        let top = frequent_pairs(&tx, 1, 1).unwrap();
        assert_eq!(
            top,
            vec![Pattern {
                items: vec![1, 2],
                support: 2
            }]
        );
        let singles = vec![vec![1], vec![2], vec![1]];
        assert!(frequent_pairs(&singles, 5, 1).unwrap().is_empty());
    }

    #[test]
    fn csv_shape() {
        let set = fpgrowth(&[vec![3, 1]], 1).unwrap();
        assert_eq!(set.to_csv(), "items,support\n1,1\n3,1\n1;3,1\n");
    }

    fn planted(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let label = rng.random_bool(0.5);
            let mut row: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            row.insert(
                3,
                if label {
                    1.0 + rng.random::<f64>()
                } else {
                    rng.random::<f64>()
                },
            );
            x.push(row);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn separable_feature_is_learned_exactly() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let forest = train_forest(&x, &y, &ForestConfig::default()).unwrap();
        assert_eq!(forest.accuracy(&x, &y), 1.0);
    }

    #[test]
    fn rejects_single_class() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            train_forest(&x, &[true, true], &ForestConfig::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn constant_feature_gets_zero_importance() {
        let (mut x, y) = planted(4, 200);
        x.iter_mut().for_each(|r| r.push(5.0));
        let forest = train_forest(
            &x,
            &y,
            &ForestConfig {
                trees: 20,
                ..Default::default()
            },
        )
        .unwrap();
        let rep = mdi(&forest, &[] as &[&str]);
        assert_eq!(rep.importances[7], 0.0);
        assert_eq!(rep.ranking[0], 3);
        assert!((rep.importances.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(rep.to_csv().starts_with("rank,feature,mdi\n1,f3,"));
    }

    #[test]
    fn forest_is_reproducible() {
        let (x, y) = planted(2, 100);
        let cfg = ForestConfig {
            trees: 15,
            seed: 8,
            ..Default::default()
        };
        let a = train_forest(&x, &y, &cfg).unwrap();
        let b = train_forest(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn depth_limit_is_respected() {
        let (x, y) = planted(3, 100);
        let cfg = ForestConfig {
            trees: 5,
            max_depth: Some(2),
            ..Default::default()
        };
        let forest = train_forest(&x, &y, &cfg).unwrap();
        assert!(forest.trees().iter().all(|t| t.depth() <= 2));
    }

    #[test]
    fn uninformative_features_give_majority_rate_oob() {
        let mut total = 0.0;
        let seeds = 20;
        for s in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + s);
            let x: Vec<Vec<f64>> = (0..120)
                .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
                .collect();
            let y: Vec<bool> = (0..120).map(|_| rng.random_bool(0.7)).collect();
            let forest = train_forest(
                &x,
                &y,
                &ForestConfig {
                    seed: s,
                    ..Default::default()
                },
            )
            .unwrap();
            let majority = y
                .iter()
                .filter(|&&b| b)
                .count()
                .max(y.iter().filter(|&&b| !b).count()) as f64
                / 120.0;
            total += forest.oob_accuracy(&x, &y).unwrap() - majority;
        }
        assert!(
            (total / seeds as f64).abs() <= 0.1,
            "{}",
            total / seeds as f64
        );
    }

    #[test]
    fn duplication_keeps_signal_ranked_first() {
        let mut stable = 0;
        for s in 0..100 {
            let (x, y) = planted(1000 + s, 60);
            let cfg = ForestConfig {
                trees: 20,
                seed: s,
                ..Default::default()
            };
            let once = mdi(&train_forest(&x, &y, &cfg).unwrap(), &[] as &[&str]);
            let x2: Vec<Vec<f64>> = x.iter().chain(&x).cloned().collect();
            let y2: Vec<bool> = y.iter().chain(&y).copied().collect();
            let twice = mdi(&train_forest(&x2, &y2, &cfg).unwrap(), &[] as &[&str]);
            if once.ranking[0] == twice.ranking[0] {
                stable += 1;
            }
        }
        assert!(stable >= 95, "{stable}");
    }

    #[test]
    fn matrix_csv_has_label_last() {
        let csv = feature_matrix_csv(&["a", "b"], &["x1".to_string()], &[vec![1.0, 0.5]], &[true]);
        assert_eq!(csv, "broadcast_id,a,b,label\nx1,1,0.5,1\n");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn matches_brute_force(
                tx in prop::collection::vec(prop::collection::btree_set(0u32..10, 1..6), 0..25),
                min_support in 1u64..4,
            ) {
                let tx: Vec<Vec<u32>> = tx.into_iter().map(|s| s.into_iter().collect()).collect();
                let got = fpgrowth(&tx, min_support).unwrap();
                prop_assert_eq!(sorted(got.patterns.clone()), brute_force(&tx, min_support));
                for p in &got.patterns {
                    for q in &got.patterns {
                        if q.items.len() == p.items.len() + 1 && p.items.iter().all(|i| q.items.contains(i)) {
                            prop_assert!(p.support >= q.support);
                        }
                    }
                }
            }

            #[test]
            fn importances_form_a_distribution(seed in 0u64..1000) {
                let (x, y) = planted(seed, 40);
                let forest = train_forest(&x, &y, &ForestConfig { trees: 5, seed, ..Default::default() }).unwrap();
                let rep = mdi(&forest, &[] as &[&str]);
                prop_assert!((rep.importances.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(rep.importances.iter().all(|&v| v >= 0.0));
            }
        }
    }
}
