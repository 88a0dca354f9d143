//! CART decision trees: Gini impurity for classification, squared error for regression.

use serde::{Deserialize, Serialize};

use super::logistic::class_indices;
use super::{require_finite, LearnedState, OperationError};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf { value: f64, probs: Vec<f64> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    labels: Vec<usize>,
    classes: usize,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
}

/// `classes == 0` selects regression.
pub(super) fn fit(
    op: &str,
    x: &Matrix,
    y: &[f64],
    classes: usize,
    max_depth: usize,
    min_leaf: usize,
) -> Result<LearnedState, OperationError> {
    require_finite(op, x)?;
    let labels = if classes > 0 { class_indices(op, y, classes)? } else { Vec::new() };
    if classes == 0 && y.iter().any(|v| !v.is_finite()) {
        return Err(OperationError::Fit { operation: op.into(), reason: "target contains non-finite values".into() });
    }
    let mut b = Builder { x, y, labels, classes, max_depth, min_leaf, nodes: Vec::new() };
    let all: Vec<usize> = (0..x.rows()).collect();
    b.grow(all, 0);
    Ok(LearnedState::Tree { nodes: b.nodes, classes })
}

impl Builder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(self.leaf(&idx));
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&idx) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x.get(i, feature) <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = TreeNode::Split { feature, threshold, left, right };
        id
    }

    fn leaf(&self, idx: &[usize]) -> TreeNode {
        if self.classes == 0 {
            let value = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len().max(1) as f64;
            return TreeNode::Leaf { value, probs: Vec::new() };
        }
        let mut probs = vec![0.0; self.classes];
        for &i in idx {
            probs[self.labels[i]] += 1.0;
        }
        let total = idx.len().max(1) as f64;
        probs.iter_mut().for_each(|p| *p /= total);
        let value = argmax(&probs) as f64;
        TreeNode::Leaf { value, probs }
    }

    /// Lowest weighted impurity split; ties keep the first candidate found.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let parent = self.impurity_of(idx);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x.cols() {
            order.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)).then(a.cmp(&b)));
            let mut acc = Acc::new(self.classes);
            let mut total = Acc::new(self.classes);
            for &i in &order {
                total.add(self, i);
            }
            for pos in 0..n - 1 {
                acc.add(self, order[pos]);
                let left_n = pos + 1;
                if left_n < self.min_leaf || n - left_n < self.min_leaf {
                    continue;
                }
                let (a, b) = (self.x.get(order[pos], f), self.x.get(order[pos + 1], f));
                if a == b {
                    continue;
                }
                let score = acc.impurity() + total.minus(&acc).impurity();
                if score < parent - 1e-12 && best.map_or(true, |(s, _, _)| score < s) {
                    best = Some((score, f, a + (b - a) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn impurity_of(&self, idx: &[usize]) -> f64 {
        let mut acc = Acc::new(self.classes);
        for &i in idx {
            acc.add(self, i);
        }
        acc.impurity()
    }
}

/// Sufficient statistics for impurity: class counts, or (n, sum, sum of squares).
#[derive(Clone)]
struct Acc {
    n: f64,
    sum: f64,
    sq: f64,
    counts: Vec<f64>,
}

impl Acc {
    fn new(classes: usize) -> Self {
        Self { n: 0.0, sum: 0.0, sq: 0.0, counts: vec![0.0; classes] }
    }

    fn add(&mut self, b: &Builder<'_>, i: usize) {
        self.n += 1.0;
        if b.classes == 0 {
            self.sum += b.y[i];
            self.sq += b.y[i] * b.y[i];
        } else {
            self.counts[b.labels[i]] += 1.0;
        }
    }

    fn minus(&self, other: &Acc) -> Acc {
        Acc {
            n: self.n - other.n,
            sum: self.sum - other.sum,
            sq: self.sq - other.sq,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a - b).collect(),
        }
    }

    /// Size-weighted impurity (n * gini, or sum of squared deviations).
    fn impurity(&self) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        if self.counts.is_empty() {
            (self.sq - self.sum * self.sum / self.n).max(0.0)
        } else {
            self.n - self.counts.iter().map(|c| c * c).sum::<f64>() / self.n
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = i;
        }
    }
    best
}

pub(super) fn predict(nodes: &[TreeNode], classes: usize, x: &Matrix) -> (Vec<f64>, Option<Matrix>) {
    let mut values = Vec::with_capacity(x.rows());
    let mut probs = (classes > 0).then(|| Matrix::zeros(x.rows(), classes));
    for r in 0..x.rows() {
        let mut at = 0;
        loop {
            match &nodes[at] {
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if x.get(r, *feature) <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { value, probs: p } => {
                    values.push(*value);
                    if let Some(m) = probs.as_mut() {
                        m.row_mut(r).copy_from_slice(p);
                    }
                    break;
                }
            }
        }
    }
    (values, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> (Matrix, Vec<f64>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for rep in 0..5 {
            for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
                rows.push(vec![a + rep as f64 * 0.01, b]);
                y.push(if (a > 0.5) != (b > 0.5) { 1.0 } else { 0.0 });
            }
        }
        (Matrix::from_rows(&rows), y)
    }

    fn accuracy(depth: usize) -> f64 {
        let (x, y) = xor();
        let LearnedState::Tree { nodes, classes } = fit("t", &x, &y, 2, depth, 1).unwrap() else { panic!() };
        let (pred, _) = predict(&nodes, classes, &x);
        pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    #[test]
    fn stump_cannot_solve_xor() {
        // Every axis-aligned threshold on XOR leaves at least a quarter misclassified.
        assert!(accuracy(1) <= 0.75);
    }

    #[test]
    fn regression_tree_fits_step() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = xs.iter().map(|&v| if v < 10.0 { 1.0 } else { 5.0 }).collect();
        let LearnedState::Tree { nodes, .. } = fit("t", &Matrix::column_vector(&xs), &y, 0, 3, 1).unwrap() else {
            panic!()
        };
        let (pred, probs) = predict(&nodes, 0, &Matrix::column_vector(&[2.0, 15.0]));
        assert_eq!(pred, vec![1.0, 5.0]);
        assert!(probs.is_none());
    }

    #[test]
    fn leaf_size_is_respected() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let y = xs.clone();
        let LearnedState::Tree { nodes, .. } = fit("t", &Matrix::column_vector(&xs), &y, 0, 6, 5).unwrap() else {
            panic!()
        };
        assert_eq!(nodes.len(), 3);
    }
}
