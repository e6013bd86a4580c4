use std::path::Path;

use super::idx::{load_idx_images, load_idx_labels};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Features (one sample per column) with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub images: Matrix,
    pub labels: Vec<usize>,
}

impl RawDataset {
    pub fn new(images: Matrix, labels: Vec<usize>) -> Result<Self> {
        if images.cols() != labels.len() {
            return Err(Error::shape(
                "RawDataset",
                images.shape(),
                (labels.len(), 1),
            ));
        }
        Ok(Self { images, labels })
    }

    pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        let x = load_idx_images(images)?;
        let y = load_idx_labels(labels)?;
        Self::new(x, y.into_iter().map(usize::from).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` samples (all of them when `n` exceeds the count).
    pub fn subset(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let cols: Vec<usize> = (0..n).collect();
        Self {
            images: self.images.select_columns(&cols),
            labels: self.labels[..n].to_vec(),
        }
    }
}

/// Target encoding for one-hot labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelEncoding {
    /// 1 for the class, 0 elsewhere (pairs with softmax).
    ZeroOne,
    /// 1 for the class, −1 elsewhere (pairs with tanh).
    PlusMinusOne,
}

impl LabelEncoding {
    pub fn off_value(self) -> f64 {
        match self {
            LabelEncoding::ZeroOne => 0.0,
            LabelEncoding::PlusMinusOne => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDataset {
    /// Centered features with a final row of ones, `(n+1)×m`.
    pub x_block: Matrix,
    /// One-hot targets, `c×m`.
    pub y_block: Matrix,
    pub labels: Vec<usize>,
    /// Per-feature mean subtracted from `x_block`, `n×1`.
    pub feature_mean: Matrix,
}

impl PreparedDataset {
    pub fn len(&self) -> usize {
        self.x_block.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.x_block.cols() == 0
    }
}

pub fn one_hot(labels: &[usize], classes: usize, encoding: LabelEncoding) -> Result<Matrix> {
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidConfig(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let off = encoding.off_value();
    Ok(Matrix::from_fn(classes, labels.len(), |r, c| {
        if labels[c] == r {
            1.0
        } else {
            off
        }
    }))
}

/// Per-feature mean as an `n×1` matrix; zeros for an empty dataset.
pub fn feature_mean(features: &Matrix) -> Matrix {
    let m = features.cols();
    Matrix::from_fn(features.rows(), 1, |r, _| {
        if m == 0 {
            0.0
        } else {
            features.row_slice(r).iter().sum::<f64>() / m as f64
        }
    })
}

/// Centers the features (with `feature_mean` when given, otherwise with
/// their own mean), appends the bias row and one-hot encodes the labels.
pub fn prepare(
    raw: &RawDataset,
    encoding: LabelEncoding,
    classes: usize,
    feature_mean_override: Option<&Matrix>,
) -> Result<PreparedDataset> {
    let mean = match feature_mean_override {
        Some(mean) => {
            if mean.shape() != (raw.images.rows(), 1) {
                return Err(Error::shape(
                    "prepare",
                    mean.shape(),
                    (raw.images.rows(), 1),
                ));
            }
            mean.clone()
        }
        None => feature_mean(&raw.images),
    };
    let centered = Matrix::from_fn(raw.images.rows(), raw.images.cols(), |r, c| {
        raw.images[(r, c)] - mean[(r, 0)]
    });
    Ok(PreparedDataset {
        x_block: centered.with_ones_row(),
        y_block: one_hot(&raw.labels, classes, encoding)?,
        labels: raw.labels.clone(),
        feature_mean: mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centering_by_hand() {
        let raw = RawDataset::new(Matrix::row(&[2.0, 4.0]), vec![0, 1]).unwrap();
        let p = prepare(&raw, LabelEncoding::ZeroOne, 2, None).unwrap();
        assert_eq!(
            p.x_block,
            Matrix::from_rows(&[[-1.0, 1.0], [1.0, 1.0]]).unwrap()
        );
        assert_eq!(p.feature_mean.as_slice(), &[3.0]);
    }

    #[test]
    fn one_hot_encodings() {
        let y = one_hot(&[3], 10, LabelEncoding::ZeroOne).unwrap();
        let expected: Vec<f64> = (0..10).map(|i| if i == 3 { 1.0 } else { 0.0 }).collect();
        assert_eq!(y.as_slice(), expected.as_slice());
        let y = one_hot(&[1], 3, LabelEncoding::PlusMinusOne).unwrap();
        assert_eq!(y.as_slice(), &[-1.0, 1.0, -1.0]);
        assert!(one_hot(&[10], 10, LabelEncoding::ZeroOne).is_err());
    }

    #[test]
    fn zero_mean_is_identity() {
        let images = Matrix::from_rows(&[[0.5, 0.25], [1.0, 0.0]]).unwrap();
        let raw = RawDataset::new(images.clone(), vec![0, 1]).unwrap();
        let p = prepare(&raw, LabelEncoding::ZeroOne, 2, Some(&Matrix::zeros(2, 1))).unwrap();
        assert_eq!(p.x_block, images.with_ones_row());
    }

    #[test]
    fn test_split_reuses_training_mean() {
        let train = RawDataset::new(Matrix::row(&[1.0, 3.0]), vec![0, 0]).unwrap();
        let test = RawDataset::new(Matrix::row(&[10.0]), vec![0]).unwrap();
        let p = prepare(&train, LabelEncoding::ZeroOne, 1, None).unwrap();
        let q = prepare(&test, LabelEncoding::ZeroOne, 1, Some(&p.feature_mean)).unwrap();
        assert_eq!(q.x_block.as_slice(), &[8.0, 1.0]);
        assert_eq!(q.feature_mean, p.feature_mean);
    }

    #[test]
    fn count_mismatch_rejected() {
        assert!(RawDataset::new(Matrix::zeros(2, 3), vec![0, 1]).is_err());
    }
}
