//! Gradient-boosted regression trees with squared loss on pre-binned
//! features, with the number of rounds picked by K-fold cross-validation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmConfig {
    pub max_depth: usize,
    pub shrinkage: f64,
    pub max_rounds: usize,
    pub min_leaf: usize,
    pub max_bins: usize,
    /// Cross-validation stops once this many rounds pass without a new
    /// best validation loss.
    pub patience: usize,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            shrinkage: 0.05,
            max_rounds: 2000,
            min_leaf: 5,
            max_bins: 64,
            patience: 100,
        }
    }
}

/// Per-feature split points. A value's bin is the number of edges strictly
/// below it, so `bin <= b` is equivalent to `x <= edges[b]`.
#[derive(Debug, Clone)]
struct Binner {
    edges: Vec<Vec<f64>>,
}

impl Binner {
    fn fit(x: &DMatrix<f64>, max_bins: usize) -> Self {
        let edges = (0..x.ncols())
            .map(|j| {
                let mut v: Vec<f64> = x.column(j).iter().copied().collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                if v.len() <= max_bins {
                    v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
                } else {
                    let mut e: Vec<f64> = (1..max_bins)
                        .map(|k| {
                            let i = k * v.len() / max_bins;
                            0.5 * (v[i - 1] + v[i])
                        })
                        .collect();
                    e.dedup();
                    e
                }
            })
            .collect();
        Self { edges }
    }

    /// Row-major bin codes.
    fn codes(&self, x: &DMatrix<f64>) -> Vec<u16> {
        let p = self.edges.len();
        let mut out = vec![0u16; x.nrows() * p];
        for (j, e) in self.edges.iter().enumerate() {
            for (i, &v) in x.column(j).iter().enumerate() {
                out[i * p + j] = e.partition_point(|&t| t < v) as u16;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        feature: usize,
        bin: u16,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    fn predict_binned(&self, codes: &[u16], p: usize, r: usize) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    bin,
                    left,
                    right,
                    ..
                } => i = if codes[r * p + feature] <= *bin { *left } else { *right },
            }
        }
    }
}

struct Grower<'a> {
    codes: &'a [u16],
    edges: &'a [Vec<f64>],
    /// Start of each feature's block in the flat histograms.
    offsets: &'a [usize],
    grad: &'a [f64],
    cfg: &'a GbmConfig,
    nodes: Vec<Node>,
    scratch: Vec<usize>,
}

/// Per-bin `[gradient sum, row count]`, all features back to back.
type Histogram = Vec<[f64; 2]>;

impl Grower<'_> {
    fn histogram(&self, rows: &[usize]) -> Histogram {
        let p = self.edges.len();
        let mut h = vec![[0.0; 2]; *self.offsets.last().unwrap_or(&0)];
        for &r in rows {
            let g = self.grad[r];
            let row = &self.codes[r * p..(r + 1) * p];
            for (&b, &off) in row.iter().zip(self.offsets) {
                let cell = &mut h[off + b as usize];
                cell[0] += g;
                cell[1] += 1.0;
            }
        }
        h
    }

    fn splittable(&self, n: usize, depth: usize) -> bool {
        depth < self.cfg.max_depth && n >= 2 * self.cfg.min_leaf
    }

    /// Grow the subtree on `rows`; `hist` is their histogram when the node
    /// can split and empty otherwise.
    fn grow(&mut self, rows: &mut [usize], depth: usize, mut hist: Histogram) -> usize {
        let id = self.nodes.len();
        let total: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let n = rows.len();
        self.nodes.push(Node::Leaf(total / n as f64 * self.cfg.shrinkage));
        if !self.splittable(n, depth) {
            return id;
        }
        let Some((feature, bin)) = self.best_split(&hist, n, total) else {
            return id;
        };
        let p = self.edges.len();
        let codes = self.codes;
        let mid = partition(rows, &mut self.scratch, |r| codes[r * p + feature] <= bin);
        let (l, r) = rows.split_at_mut(mid);
        // Build the smaller child's histogram and get the larger one by
        // subtraction from the parent.
        let (lh, rh) = match (self.splittable(l.len(), depth + 1), self.splittable(r.len(), depth + 1)) {
            (false, false) => (Vec::new(), Vec::new()),
            (true, false) => (self.histogram(l), Vec::new()),
            (false, true) => (Vec::new(), self.histogram(r)),
            (true, true) => {
                let small_left = l.len() <= r.len();
                let small = self.histogram(if small_left { l } else { r });
                for (c, s) in hist.iter_mut().zip(&small) {
                    c[0] -= s[0];
                    c[1] -= s[1];
                }
                if small_left {
                    (small, hist)
                } else {
                    (hist, small)
                }
            }
        };
        let left = self.grow(l, depth + 1, lh);
        let right = self.grow(r, depth + 1, rh);
        self.nodes[id] = Node::Split {
            feature,
            bin,
            threshold: self.edges[feature][bin as usize],
            left,
            right,
        };
        id
    }

    fn best_split(&self, hist: &[[f64; 2]], n: usize, total: f64) -> Option<(usize, u16)> {
        let min_leaf = self.cfg.min_leaf as f64;
        let nf = n as f64;
        let base = total * total / nf;
        let mut best: Option<(f64, usize, u16)> = None;
        for (j, edges) in self.edges.iter().enumerate() {
            let nb = edges.len() + 1;
            if nb < 2 {
                continue;
            }
            let cells = &hist[self.offsets[j]..self.offsets[j] + nb];
            let (mut sl, mut nl) = (0.0, 0.0);
            for (b, cell) in cells[..nb - 1].iter().enumerate() {
                sl += cell[0];
                nl += cell[1];
                let nr = nf - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let sr = total - sl;
                let gain = sl * sl / nl + sr * sr / nr - base;
                // Strict comparison keeps the first (lowest feature, lowest
                // bin) split among ties.
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, j, b as u16));
                }
            }
        }
        best.map(|(_, j, b)| (j, b))
    }
}

/// Stable in-place partition; returns the number of rows satisfying `pred`.
fn partition(rows: &mut [usize], scratch: &mut Vec<usize>, pred: impl Fn(usize) -> bool) -> usize {
    scratch.clear();
    let mut k = 0;
    for i in 0..rows.len() {
        let r = rows[i];
        if pred(r) {
            rows[k] = r;
            k += 1;
        } else {
            scratch.push(r);
        }
    }
    rows[k..].copy_from_slice(scratch);
    k
}

/// A fitted boosted ensemble.
#[derive(Debug, Clone)]
pub struct Gbm {
    init: f64,
    trees: Vec<Tree>,
}

impl Gbm {
    pub fn rounds(&self) -> usize {
        self.trees.len()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut row = vec![0.0; x.ncols()];
        (0..x.nrows())
            .map(|i| {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = x[(i, j)];
                }
                self.init + self.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>()
            })
            .collect()
    }
}

/// Boosting state on one training set, optionally tracking a validation set.
struct Booster {
    binner: Binner,
    codes: Vec<u16>,
    offsets: Vec<usize>,
    y: Vec<f64>,
    pred: Vec<f64>,
    init: f64,
    trees: Vec<Tree>,
    rows: Vec<usize>,
}

impl Booster {
    fn new(x: &DMatrix<f64>, y: &[f64], cfg: &GbmConfig) -> Self {
        let binner = Binner::fit(x, cfg.max_bins);
        let codes = binner.codes(x);
        let mut offsets = Vec::with_capacity(binner.edges.len() + 1);
        let mut acc = 0;
        for e in &binner.edges {
            offsets.push(acc);
            acc += e.len() + 1;
        }
        offsets.push(acc);
        let init = mean(y);
        Self {
            binner,
            codes,
            offsets,
            y: y.to_vec(),
            pred: vec![init; y.len()],
            init,
            trees: Vec::new(),
            rows: (0..y.len()).collect(),
        }
    }

    fn step(&mut self, cfg: &GbmConfig) -> &Tree {
        let grad: Vec<f64> = self.y.iter().zip(&self.pred).map(|(y, p)| y - p).collect();
        for (i, r) in self.rows.iter_mut().enumerate() {
            *r = i;
        }
        let mut g = Grower {
            codes: &self.codes,
            edges: &self.binner.edges,
            offsets: &self.offsets,
            grad: &grad,
            cfg,
            nodes: Vec::new(),
            scratch: Vec::with_capacity(self.y.len()),
        };
        let hist = if g.splittable(self.rows.len(), 0) {
            g.histogram(&self.rows)
        } else {
            Vec::new()
        };
        g.grow(&mut self.rows, 0, hist);
        let tree = Tree { nodes: g.nodes };
        for (r, p) in self.pred.iter_mut().enumerate() {
            *p += tree.predict_binned(&self.codes, self.binner.edges.len(), r);
        }
        self.trees.push(tree);
        self.trees.last().expect("tree just pushed")
    }

    fn finish(self) -> Gbm {
        Gbm {
            init: self.init,
            trees: self.trees,
        }
    }
}

/// Fit exactly `rounds` boosting rounds.
pub fn fit_gbm(x: &DMatrix<f64>, y: &[f64], rounds: usize, cfg: &GbmConfig) -> Result<Gbm> {
    if x.nrows() != y.len() || y.is_empty() {
        return Err(Error::invalid(format!(
            "boosting needs matching nonempty inputs ({} rows, {} responses)",
            x.nrows(),
            y.len()
        )));
    }
    let mut b = Booster::new(x, y, cfg);
    for _ in 0..rounds {
        b.step(cfg);
    }
    Ok(b.finish())
}

/// Result of cross-validated boosting.
#[derive(Debug, Clone)]
pub struct CvFit {
    pub model: Gbm,
    pub best_rounds: usize,
    pub cv_loss: f64,
}

/// Choose the number of rounds by `folds`-fold cross-validation (folds are
/// contiguous blocks of a fixed interleaving, `i mod folds`), then refit on
/// all rows with that many rounds.
pub fn fit_gbm_cv(x: &DMatrix<f64>, y: &[f64], folds: usize, cfg: &GbmConfig) -> Result<CvFit> {
    let n = y.len();
    if folds < 2 || n < 2 * folds {
        return Err(Error::invalid(format!(
            "cross-validation needs at least {} rows for {folds} folds, found {n}",
            2 * folds
        )));
    }
    let mut boosters = Vec::with_capacity(folds);
    let mut holdouts = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|i| i % folds != f).collect();
        let test: Vec<usize> = (0..n).filter(|i| i % folds == f).collect();
        let xt = crate::linalg::select_rows(x, &train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let b = Booster::new(&xt, &yt, cfg);
        let xv = crate::linalg::select_rows(x, &test);
        let yv: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let pv = vec![b.init; yv.len()];
        boosters.push(b);
        holdouts.push((xv, yv, pv));
    }
    let loss = |holdouts: &[(DMatrix<f64>, Vec<f64>, Vec<f64>)]| {
        holdouts
            .iter()
            .flat_map(|(_, yv, pv)| yv.iter().zip(pv).map(|(a, b)| (a - b) * (a - b)))
            .sum::<f64>()
            / n as f64
    };
    let mut best_loss = loss(&holdouts);
    let mut best_rounds = 0;
    let mut row = vec![0.0; x.ncols()];
    for round in 1..=cfg.max_rounds {
        for (b, (xv, _, pv)) in boosters.iter_mut().zip(holdouts.iter_mut()) {
            let tree = b.step(cfg);
            for (i, p) in pv.iter_mut().enumerate() {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = xv[(i, j)];
                }
                *p += tree.predict_row(&row);
            }
        }
        let l = loss(&holdouts);
        if l < best_loss {
            best_loss = l;
            best_rounds = round;
        } else if round - best_rounds >= cfg.patience {
            break;
        }
    }
    let model = fit_gbm(x, y, best_rounds, cfg)?;
    Ok(CvFit {
        model,
        best_rounds,
        cv_loss: best_loss,
    })
}
