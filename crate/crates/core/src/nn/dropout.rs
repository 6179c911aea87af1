use ndarray::Array2;
use rand::Rng;

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Infer,
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng>(
    shape: (usize, usize),
    rate: f64,
    rng: &mut R,
) -> Result<Array2<f64>, NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::InvalidRate(rate));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

pub fn dropout<R: Rng>(
    x: &Array2<f64>,
    rate: f64,
    mode: DropoutMode,
    rng: &mut R,
) -> Result<Array2<f64>, NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::InvalidRate(rate));
    }
    match mode {
        DropoutMode::Infer => Ok(x.clone()),
        DropoutMode::Train if rate == 0.0 => Ok(x.clone()),
        DropoutMode::Train => Ok(x * &dropout_mask(x.dim(), rate, rng)?),
    }
}
