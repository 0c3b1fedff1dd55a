//! Linear-chain dynamic programs over raw-token emission scores.
//!
//! Transition matrices are `(L+2) × (L+2)` with START at index `L` and STOP at
//! `L+1`. A path `y_0..y_{n-1}` scores
//! `T[START,y_0] + Σ E[i,y_i] + Σ T[y_{i-1},y_i] + T[y_{n-1},STOP]`; masked
//! transitions score `-inf`.

use ndarray::{Array2, ArrayView2};

use crate::tags::TagScheme;

/// Allowed transitions, including START and STOP rows/columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMask {
    labels: usize,
    allowed: Vec<bool>,
}

impl TransitionMask {
    fn structural(labels: usize, rule: impl Fn(Option<usize>, usize) -> bool) -> Self {
        let size = labels + 2;
        let mut allowed = vec![false; size * size];
        for to in 0..labels {
            allowed[labels * size + to] = rule(None, to);
            for from in 0..labels {
                allowed[from * size + to] = rule(Some(from), to);
            }
        }
        for from in 0..labels {
            allowed[from * size + labels + 1] = true;
        }
        TransitionMask { labels, allowed }
    }

    /// BIO constraints: `I-x` only after `B-x` or `I-x`.
    pub fn bio(scheme: TagScheme) -> Self {
        Self::structural(scheme.len(), |from, to| {
            scheme.label(to).may_follow(from.map(|f| scheme.label(f)))
        })
    }

    /// Every label transition allowed; nothing enters START or leaves STOP.
    pub fn unconstrained(labels: usize) -> Self {
        Self::structural(labels, |_, _| true)
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn start(&self) -> usize {
        self.labels
    }

    pub fn stop(&self) -> usize {
        self.labels + 1
    }

    pub fn allows(&self, from: usize, to: usize) -> bool {
        self.allowed[from * (self.labels + 2) + to]
    }

    /// Forbids a single transition.
    pub fn forbid(&mut self, from: usize, to: usize) {
        let size = self.labels + 2;
        self.allowed[from * size + to] = false;
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
fn trans(t: &ArrayView2<'_, f64>, mask: &TransitionMask, from: usize, to: usize) -> f64 {
    if mask.allows(from, to) {
        t[[from, to]]
    } else {
        f64::NEG_INFINITY
    }
}

/// Score of a fixed path, `-inf` if it uses a masked transition.
pub fn path_score(
    emissions: ArrayView2<'_, f64>,
    transitions: ArrayView2<'_, f64>,
    mask: &TransitionMask,
    path: &[usize],
) -> f64 {
    assert_eq!(path.len(), emissions.nrows());
    let mut score = 0.0;
    let mut prev = mask.start();
    for (i, &y) in path.iter().enumerate() {
        score += trans(&transitions, mask, prev, y) + emissions[[i, y]];
        prev = y;
    }
    score + trans(&transitions, mask, prev, mask.stop())
}

fn forward(
    emissions: &ArrayView2<'_, f64>,
    transitions: &ArrayView2<'_, f64>,
    mask: &TransitionMask,
) -> Array2<f64> {
    let (n, labels) = emissions.dim();
    let mut alpha = Array2::from_elem((n, labels), f64::NEG_INFINITY);
    for y in 0..labels {
        alpha[[0, y]] = trans(transitions, mask, mask.start(), y) + emissions[[0, y]];
    }
    for i in 1..n {
        for y in 0..labels {
            let prev = (0..labels).map(|a| alpha[[i - 1, a]] + trans(transitions, mask, a, y));
            alpha[[i, y]] = log_sum_exp(prev) + emissions[[i, y]];
        }
    }
    alpha
}

fn backward(
    emissions: &ArrayView2<'_, f64>,
    transitions: &ArrayView2<'_, f64>,
    mask: &TransitionMask,
) -> Array2<f64> {
    let (n, labels) = emissions.dim();
    let mut beta = Array2::from_elem((n, labels), f64::NEG_INFINITY);
    for y in 0..labels {
        beta[[n - 1, y]] = trans(transitions, mask, y, mask.stop());
    }
    for i in (0..n - 1).rev() {
        for y in 0..labels {
            let next = (0..labels).map(|b| {
                trans(transitions, mask, y, b) + emissions[[i + 1, b]] + beta[[i + 1, b]]
            });
            beta[[i, y]] = log_sum_exp(next);
        }
    }
    beta
}

/// Log of the sum of `exp(path score)` over all allowed paths.
pub fn log_partition(
    emissions: ArrayView2<'_, f64>,
    transitions: ArrayView2<'_, f64>,
    mask: &TransitionMask,
) -> f64 {
    let n = emissions.nrows();
    assert!(n > 0, "log_partition needs at least one position");
    let alpha = forward(&emissions, &transitions, mask);
    log_sum_exp(
        (0..emissions.ncols())
            .map(|y| alpha[[n - 1, y]] + trans(&transitions, mask, y, mask.stop())),
    )
}

/// Posterior expectations under the chain distribution.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub log_partition: f64,
    /// `n × L` label marginals.
    pub unary: Array2<f64>,
    /// `(L+2) × (L+2)` expected transition counts, START/STOP included.
    pub transitions: Array2<f64>,
}

pub fn marginals(
    emissions: ArrayView2<'_, f64>,
    transitions: ArrayView2<'_, f64>,
    mask: &TransitionMask,
) -> Marginals {
    let (n, labels) = emissions.dim();
    let alpha = forward(&emissions, &transitions, mask);
    let beta = backward(&emissions, &transitions, mask);
    let log_z = log_sum_exp(
        (0..labels).map(|y| alpha[[n - 1, y]] + trans(&transitions, mask, y, mask.stop())),
    );
    let unary = Array2::from_shape_fn((n, labels), |(i, y)| {
        (alpha[[i, y]] + beta[[i, y]] - log_z).exp()
    });
    let mut pairs = Array2::zeros((labels + 2, labels + 2));
    for y in 0..labels {
        pairs[[mask.start(), y]] = unary[[0, y]];
        pairs[[y, mask.stop()]] = unary[[n - 1, y]];
    }
    for i in 0..n.saturating_sub(1) {
        for a in 0..labels {
            if alpha[[i, a]] == f64::NEG_INFINITY {
                continue;
            }
            for b in 0..labels {
                if !mask.allows(a, b) {
                    continue;
                }
                let lp = alpha[[i, a]]
                    + transitions[[a, b]]
                    + emissions[[i + 1, b]]
                    + beta[[i + 1, b]]
                    - log_z;
                pairs[[a, b]] += lp.exp();
            }
        }
    }
    Marginals {
        log_partition: log_z,
        unary,
        transitions: pairs,
    }
}

/// Highest-scoring allowed path. Ties go to the lower label index at every
/// backpointer decision and at the final position.
pub fn viterbi(
    emissions: ArrayView2<'_, f64>,
    transitions: ArrayView2<'_, f64>,
    mask: &TransitionMask,
) -> Vec<usize> {
    let (n, labels) = emissions.dim();
    if n == 0 {
        return Vec::new();
    }
    let mut delta = Array2::from_elem((n, labels), f64::NEG_INFINITY);
    let mut back = Array2::<usize>::zeros((n, labels));
    for y in 0..labels {
        delta[[0, y]] = trans(&transitions, mask, mask.start(), y) + emissions[[0, y]];
    }
    for i in 1..n {
        for y in 0..labels {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for a in 0..labels {
                let v = delta[[i - 1, a]] + trans(&transitions, mask, a, y);
                if v > best {
                    best = v;
                    arg = a;
                }
            }
            delta[[i, y]] = best + emissions[[i, y]];
            back[[i, y]] = arg;
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for y in 0..labels {
        let v = delta[[n - 1, y]] + trans(&transitions, mask, y, mask.stop());
        if v > best {
            best = v;
            last = y;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for i in (1..n).rev() {
        path[i - 1] = back[[i, path[i]]];
    }
    path
}
