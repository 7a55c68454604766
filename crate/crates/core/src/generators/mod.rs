//! Benchmark instance sources: planted-pattern instances with empirical
//! targets, planted exponential families with exact targets, and the
//! Bayesian-network demographic benchmark with analytic targets.

pub mod planted;
pub mod synistat;
pub mod wu;

use crate::metrics::PopulationView;

/// An owned N×K matrix of category indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMatrix {
    pub data: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
}

impl SampleMatrix {
    pub fn new(data: Vec<usize>, rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols);
        SampleMatrix { data, rows, cols }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn view(&self) -> PopulationView<'_> {
        PopulationView::new(&self.data, self.rows, self.cols)
    }
}
