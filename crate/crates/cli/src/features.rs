//! Point sets supplied as files or generated from a JSON description.

use std::path::Path;

use forgefuse_core::deep_linear::{pca_rotate, synthesize_gaussian_classes, GaussianSpec, SpectralData, TargetEncoding};
use nalgebra::DMatrix;

use crate::error::CliError;

/// Read a headed CSV whose first column is an integer label and whose other
/// columns are features. Returns `[d × n]` points.
pub fn read_features(path: &Path) -> Result<(DMatrix<f64>, Vec<u32>), CliError> {
    let bad = |msg: String| CliError::invalid("features", format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let d = reader.headers().map_err(|e| bad(e.to_string()))?.len().saturating_sub(1);
    if d == 0 {
        return Err(bad("need a label column and at least one feature column".into()));
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let line = row + 2;
        labels.push(
            record[0]
                .trim()
                .parse::<u32>()
                .map_err(|_| bad(format!("line {line}: label {:?} is not a class index", &record[0])))?,
        );
        for cell in record.iter().skip(1) {
            let v: f64 = cell
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| bad(format!("line {line}: feature {cell:?} is not a finite number")))?;
            values.push(v);
        }
    }
    let n = labels.len();
    // rows were read point by point, which is column-major for [d × n]
    Ok((DMatrix::from_vec(d, n, values), labels))
}

pub fn read_generator(path: &Path) -> Result<GaussianSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::invalid("io", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::invalid("config", format!("{}: {e}", path.display())))
}

pub fn generate(spec: &GaussianSpec, seed: u64) -> Result<(DMatrix<f64>, Vec<u32>), CliError> {
    Ok(synthesize_gaussian_classes(spec, seed)?)
}

/// Binary targets for at most two classes, one-hot otherwise.
pub fn encoding_for(labels: &[u32]) -> TargetEncoding {
    let classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
    if classes <= 2 {
        TargetEncoding::Binary
    } else {
        TargetEncoding::OneHot { num_classes: classes }
    }
}

pub fn rotate(points: &DMatrix<f64>, labels: &[u32]) -> Result<SpectralData, CliError> {
    Ok(pca_rotate(points, labels, encoding_for(labels))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_points_as_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "label,a,b\n0,1,2\n1,3,4\n1,5,6\n").unwrap();
        let (x, labels) = read_features(&path).unwrap();
        assert_eq!(labels, vec![0, 1, 1]);
        assert_eq!(x.shape(), (2, 3));
        assert_eq!(x[(1, 2)], 6.0);
        assert_eq!(encoding_for(&labels), TargetEncoding::Binary);
    }

    #[test]
    fn rejects_non_numeric_features() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "label,a\n0,x\n").unwrap();
        let err = read_features(&path).unwrap_err();
        assert_eq!(err.kind, "features");
        assert!(err.message.contains("line 2"));
    }
}
