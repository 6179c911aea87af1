use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use super::init::glorot_uniform;
use super::{shape_err, Activation, NnError, Params};

/// `y = act(x W + b)`. Applied row-wise it is the time-distributed dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `input × output`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    pub output: Array2<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self { w: Array2::zeros((input, output)), b: Array1::zeros(output), activation }
    }

    pub fn init<R: Rng>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        Self { w: glorot_uniform(input, output, rng), b: Array1::zeros(output), activation }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Result<Array1<f64>, NnError> {
        if x.len() != self.input_dim() {
            return Err(shape_err(format!("dense expects {} inputs, got {}", self.input_dim(), x.len())));
        }
        let act = self.activation;
        Ok((x.dot(&self.w) + &self.b).mapv(|v| act.apply(v)))
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<DenseCache, NnError> {
        if x.ncols() != self.input_dim() {
            return Err(shape_err(format!("dense expects {} inputs, got {}", self.input_dim(), x.ncols())));
        }
        let pre = x.dot(&self.w) + &self.b;
        let act = self.activation;
        let output = pre.mapv(|v| act.apply(v));
        Ok(DenseCache { input: x.to_owned(), pre, output })
    }

    pub fn backward(
        &self,
        cache: &DenseCache,
        d_out: ArrayView2<f64>,
        grads: &mut Dense,
    ) -> Result<Array2<f64>, NnError> {
        if d_out.dim() != cache.output.dim() {
            return Err(shape_err("dense output gradient shape"));
        }
        let act = self.activation;
        let d_pre = Zip::from(&d_out)
            .and(&cache.pre)
            .and(&cache.output)
            .map_collect(|&g, &p, &o| g * act.derivative(p, o));
        grads.w += &cache.input.t().dot(&d_pre);
        grads.b += &d_pre.sum_axis(Axis(0));
        Ok(d_pre.dot(&self.w.t()))
    }
}

impl Params for Dense {
    fn blocks(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice().expect("standard layout"), self.b.as_slice().expect("contiguous")]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_slice_mut().expect("standard layout"), self.b.as_slice_mut().expect("contiguous")]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_weights() {
        let d = Dense { w: Array2::eye(3), b: Array1::zeros(3), activation: Activation::Identity };
        assert_eq!(d.apply(array![1.0, -2.0, 3.5].view()).unwrap(), array![1.0, -2.0, 3.5]);
    }

    #[test]
    fn activations() {
        let relu = Dense { w: Array2::eye(1), b: Array1::zeros(1), activation: Activation::Relu };
        assert_eq!(relu.apply(array![-1.0].view()).unwrap()[0], 0.0);
        let sig = Dense { activation: Activation::Sigmoid, ..relu.clone() };
        assert_eq!(sig.apply(array![0.0].view()).unwrap()[0], 0.5);
        assert!(relu.apply(array![1.0, 2.0].view()).is_err());
    }
}
