//! Dense class-probability matrices and argmax conventions.

/// Index of the largest entry; ties go to the lowest index.
///
/// NaN entries never win a comparison.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-major `[rows × classes]` probability matrix in double precision.
///
/// Rows are examples; which examples depends on the producer (all examples
/// of a log, or the rows of an explicit subset in subset order).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    num_classes: usize,
    data: Vec<f64>,
}

impl ProbMatrix {
    pub fn new(num_classes: usize, data: Vec<f64>) -> Self {
        assert!(num_classes > 0, "probability matrix needs at least one class");
        assert_eq!(data.len() % num_classes, 0, "ragged probability matrix");
        Self { num_classes, data }
    }

    pub fn zeros(rows: usize, num_classes: usize) -> Self {
        Self::new(num_classes, vec![0.0; rows * num_classes])
    }

    pub fn from_f32(num_classes: usize, data: &[f32]) -> Self {
        Self::new(num_classes, data.iter().map(|&v| v as f64).collect())
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.num_classes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.num_classes)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Keep only the listed rows, in the listed order.
    pub fn select_rows(&self, rows: &[usize]) -> ProbMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.num_classes);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        ProbMatrix::new(self.num_classes, data)
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.rows().map(argmax).collect()
    }

    /// `eps * other + (1 - eps) * self`, elementwise.
    pub fn mix(&self, other: &ProbMatrix, eps: f64) -> ProbMatrix {
        assert_eq!(self.data.len(), other.data.len());
        assert_eq!(self.num_classes, other.num_classes);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| mix_value(a, b, eps))
            .collect();
        ProbMatrix::new(self.num_classes, data)
    }

    /// Largest absolute deviation of a row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        self.rows()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// The single mixing expression used by fitting and inference alike, so both
/// paths produce bitwise identical probabilities.
#[inline]
pub(crate) fn mix_value(current: f64, alternative: f64, eps: f64) -> f64 {
    eps * alternative + (1.0 - eps) * current
}
