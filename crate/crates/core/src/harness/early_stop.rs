/// Patience-based stopping on a validation score (lower is better).
///
/// Iterations are numbered from 1. Training stops after iteration `t` when
/// `t - best >= patience` and `t >= min_iterations`, where `best` is the
/// iteration with the lowest score so far.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    min_iterations: usize,
    iteration: usize,
    best: Option<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_iterations: usize) -> Self {
        Self {
            patience,
            min_iterations,
            iteration: 0,
            best: None,
        }
    }

    pub fn observe(&mut self, score: f64) -> Decision {
        self.iteration += 1;
        let improved = self.best.is_none_or(|(_, b)| score < b);
        if improved {
            self.best = Some((self.iteration, score));
        }
        let best_at = self.best.map_or(0, |(i, _)| i);
        Decision {
            improved,
            stop: self.iteration - best_at >= self.patience
                && self.iteration >= self.min_iterations,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// `(iteration, score)` of the best observation.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}
