use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{shape_err, NnError};

pub const LOG_FLOOR: f64 = 1e-12;

/// Max-subtracted softmax.
pub fn softmax(logits: ArrayView1<f64>) -> Result<Array1<f64>, NnError> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteInput);
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.mapv(|v| (v - max).exp());
    let s = e.sum();
    Ok(e / s)
}

pub fn softmax_rows(logits: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
    let mut out = Array2::zeros(logits.raw_dim());
    for (src, mut dst) in logits.rows().into_iter().zip(out.rows_mut()) {
        dst.assign(&softmax(src)?);
    }
    Ok(out)
}

/// Mean categorical cross-entropy against one-hot targets.
pub fn cross_entropy(probs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64, NnError> {
    if probs.dim() != targets.dim() || probs.nrows() == 0 {
        return Err(shape_err(format!("probs {:?} vs targets {:?}", probs.dim(), targets.dim())));
    }
    let mut classes = Vec::with_capacity(targets.nrows());
    for (t, row) in targets.rows().into_iter().enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(NnError::NonOneHot(t));
        }
        classes.push(row.iter().position(|&v| v == 1.0).expect("one entry is 1"));
    }
    Ok(cross_entropy_indices(probs, &classes))
}

/// Same loss with class indices instead of one-hot rows.
pub fn cross_entropy_indices(probs: ArrayView2<f64>, classes: &[usize]) -> f64 {
    let total: f64 = classes
        .iter()
        .enumerate()
        .map(|(t, &c)| -probs[[t, c]].max(LOG_FLOOR).ln())
        .sum();
    total / classes.len() as f64
}

pub fn one_hot(classes: &[usize], n_classes: usize) -> Array2<f64> {
    let mut m = Array2::zeros((classes.len(), n_classes));
    for (t, &c) in classes.iter().enumerate() {
        m[[t, c]] = 1.0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(array![0.0, 0.0].view()).unwrap(), array![0.5, 0.5]);
        assert_eq!(softmax(array![1000.0, 1000.0].view()).unwrap(), array![0.5, 0.5]);
        let p = softmax(array![2f64.ln(), 0.0].view()).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(softmax(array![f64::NAN, 0.0].view()), Err(NnError::NonFiniteInput));
    }

    #[test]
    fn cross_entropy_examples() {
        let perfect = cross_entropy(array![[1.0, 0.0]].view(), array![[1.0, 0.0]].view()).unwrap();
        assert!(perfect.abs() < 1e-12);
        let uniform = cross_entropy(array![[0.5, 0.5], [0.5, 0.5]].view(), array![[1.0, 0.0], [0.0, 1.0]].view()).unwrap();
        assert!((uniform - 2f64.ln()).abs() < 1e-15);
        let l = cross_entropy(array![[0.25, 0.75]].view(), array![[0.0, 1.0]].view()).unwrap();
        assert!((l - 0.287_682_072_451_780_9).abs() < 1e-12);
        assert_eq!(
            cross_entropy(array![[0.5, 0.5]].view(), array![[1.0, 1.0]].view()),
            Err(NnError::NonOneHot(0))
        );
        assert!(cross_entropy(array![[0.5, 0.5]].view(), array![[1.0, 0.0, 0.0]].view()).is_err());
    }
}
