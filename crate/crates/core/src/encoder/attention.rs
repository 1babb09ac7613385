use ndarray::Array2;

/// Which (query, key) pairs may attend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttentionPattern {
    Dense,
    /// `(i, j)` allowed iff `|i - j| <= window / 2`, or either is global.
    Windowed { window: usize, global: Vec<usize> },
}

impl AttentionPattern {
    pub fn windowed(window: usize, global: Vec<usize>) -> Self {
        AttentionPattern::Windowed { window, global }
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        match self {
            AttentionPattern::Dense => true,
            AttentionPattern::Windowed { window, global } => {
                i.abs_diff(j) <= window / 2 || global.contains(&i) || global.contains(&j)
            }
        }
    }

    /// True when every pair of an `n`-token sequence is allowed.
    pub fn is_dense_for(&self, n: usize) -> bool {
        match self {
            AttentionPattern::Dense => true,
            AttentionPattern::Windowed { window, .. } => n == 0 || n - 1 <= window / 2,
        }
    }

    /// Sets disallowed entries of an `n x n` score matrix to `-inf`.
    pub fn mask_scores(&self, scores: &mut Array2<f64>) {
        let n = scores.nrows();
        if self.is_dense_for(n) {
            return;
        }
        let AttentionPattern::Windowed { window, global } = self else {
            return;
        };
        let half = window / 2;
        let is_global: Vec<bool> = (0..n).map(|i| global.contains(&i)).collect();
        for i in 0..n {
            if is_global[i] {
                continue;
            }
            let mut row = scores.row_mut(i);
            for j in 0..n {
                if i.abs_diff(j) > half && !is_global[j] {
                    row[j] = f64::NEG_INFINITY;
                }
            }
        }
    }
}
