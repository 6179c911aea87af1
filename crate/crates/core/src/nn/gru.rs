//! Gated recurrent unit.
//!
//! ```text
//! z  = σ(x W_z + h U_z + b_z)
//! r  = σ(x W_r + h U_r + b_r)
//! h~ = tanh(x W_h + (r ⊙ h) U_h + b_h)
//! h' = z ⊙ h + (1 - z) ⊙ h~
//! ```
//!
//! The update gate interpolates toward the previous state: `z → 1` copies it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use super::init::{glorot_uniform, orthogonal};
use super::{shape_err, sigmoid, NnError, Params};

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    /// `input × hidden`
    pub w_z: Array2<f64>,
    pub w_r: Array2<f64>,
    pub w_h: Array2<f64>,
    /// `hidden × hidden`
    pub u_z: Array2<f64>,
    pub u_r: Array2<f64>,
    pub u_h: Array2<f64>,
    pub b_z: Array1<f64>,
    pub b_r: Array1<f64>,
    pub b_h: Array1<f64>,
}

/// Per-step intermediates kept for backpropagation, all `T × hidden`.
#[derive(Debug, Clone)]
pub struct GruCache {
    input: Array2<f64>,
    h_prev: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    r_h: Array2<f64>,
    candidate: Array2<f64>,
    pub output: Array2<f64>,
}

impl GruLayer {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Array2::zeros((input, hidden));
        let u = || Array2::zeros((hidden, hidden));
        let b = || Array1::zeros(hidden);
        Self { w_z: w(), w_r: w(), w_h: w(), u_z: u(), u_r: u(), u_h: u(), b_z: b(), b_r: b(), b_h: b() }
    }

    /// Glorot-uniform input weights, orthogonal recurrent weights, zero biases.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let w_z = glorot_uniform(input, hidden, rng);
        let w_r = glorot_uniform(input, hidden, rng);
        let w_h = glorot_uniform(input, hidden, rng);
        let u_z = orthogonal(hidden, rng);
        let u_r = orthogonal(hidden, rng);
        let u_h = orthogonal(hidden, rng);
        let b = || Array1::zeros(hidden);
        Self { w_z, w_r, w_h, u_z, u_r, u_h, b_z: b(), b_r: b(), b_h: b() }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.nrows()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_z.ncols()
    }

    pub fn check_shapes(&self) -> Result<(), NnError> {
        let (i, h) = (self.input_dim(), self.hidden_size());
        let ok = [&self.w_r, &self.w_h].iter().all(|w| w.dim() == (i, h))
            && [&self.u_z, &self.u_r, &self.u_h].iter().all(|u| u.dim() == (h, h))
            && [&self.b_z, &self.b_r, &self.b_h].iter().all(|b| b.len() == h);
        if ok {
            Ok(())
        } else {
            Err(shape_err("inconsistent GRU parameter shapes"))
        }
    }

    /// One recurrence step.
    pub fn step(&self, x: ArrayView1<f64>, h_prev: ArrayView1<f64>) -> Result<Array1<f64>, NnError> {
        if x.len() != self.input_dim() || h_prev.len() != self.hidden_size() {
            return Err(shape_err(format!(
                "gru step expects x[{}], h[{}], got x[{}], h[{}]",
                self.input_dim(),
                self.hidden_size(),
                x.len(),
                h_prev.len()
            )));
        }
        let z = (x.dot(&self.w_z) + h_prev.dot(&self.u_z) + &self.b_z).mapv(sigmoid);
        let r = (x.dot(&self.w_r) + h_prev.dot(&self.u_r) + &self.b_r).mapv(sigmoid);
        let r_h = &r * &h_prev;
        let cand = (x.dot(&self.w_h) + r_h.dot(&self.u_h) + &self.b_h).mapv(f64::tanh);
        Ok(&z * &h_prev + &(1.0 - &z) * &cand)
    }

    /// All hidden states for the sequence `x (T × input)`, starting from
    /// `h0` (zeros when `None`).
    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        h0: Option<ArrayView1<f64>>,
    ) -> Result<Array2<f64>, NnError> {
        Ok(self.forward_cached(x, h0)?.output)
    }

    pub fn forward_cached(
        &self,
        x: ArrayView2<f64>,
        h0: Option<ArrayView1<f64>>,
    ) -> Result<GruCache, NnError> {
        let hidden = self.hidden_size();
        if x.ncols() != self.input_dim() {
            return Err(shape_err(format!(
                "gru expects {} input features, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(shape_err("gru needs at least one time step"));
        }
        let mut h = match h0 {
            Some(h0) if h0.len() != hidden => return Err(shape_err("h0 length")),
            Some(h0) => h0.to_owned(),
            None => Array1::zeros(hidden),
        };
        let t_len = x.nrows();
        let xz = x.dot(&self.w_z) + &self.b_z;
        let xr = x.dot(&self.w_r) + &self.b_r;
        let xh = x.dot(&self.w_h) + &self.b_h;
        let mut cache = GruCache {
            input: x.to_owned(),
            h_prev: Array2::zeros((t_len, hidden)),
            z: Array2::zeros((t_len, hidden)),
            r: Array2::zeros((t_len, hidden)),
            r_h: Array2::zeros((t_len, hidden)),
            candidate: Array2::zeros((t_len, hidden)),
            output: Array2::zeros((t_len, hidden)),
        };
        for t in 0..t_len {
            let z = (&xz.row(t) + &h.dot(&self.u_z)).mapv(sigmoid);
            let r = (&xr.row(t) + &h.dot(&self.u_r)).mapv(sigmoid);
            let r_h = &r * &h;
            let cand = (&xh.row(t) + &r_h.dot(&self.u_h)).mapv(f64::tanh);
            let next = Zip::from(&z).and(&h).and(&cand).map_collect(|&z, &h, &c| z * h + (1.0 - z) * c);
            cache.h_prev.row_mut(t).assign(&h);
            cache.z.row_mut(t).assign(&z);
            cache.r.row_mut(t).assign(&r);
            cache.r_h.row_mut(t).assign(&r_h);
            cache.candidate.row_mut(t).assign(&cand);
            cache.output.row_mut(t).assign(&next);
            h = next;
        }
        Ok(cache)
    }

    /// Backpropagates `d_out` (gradient w.r.t. every output state) through
    /// time, adds parameter gradients into `grads` and returns the gradient
    /// w.r.t. the layer input. The initial state is treated as a constant.
    pub fn backward(
        &self,
        cache: &GruCache,
        d_out: ArrayView2<f64>,
        grads: &mut GruLayer,
    ) -> Result<Array2<f64>, NnError> {
        if d_out.dim() != cache.output.dim() {
            return Err(shape_err("gru output gradient shape"));
        }
        let (t_len, hidden) = cache.output.dim();
        let mut d_zpre = Array2::zeros((t_len, hidden));
        let mut d_rpre = Array2::zeros((t_len, hidden));
        let mut d_cpre = Array2::zeros((t_len, hidden));
        let mut carry: Array1<f64> = Array1::zeros(hidden);
        for t in (0..t_len).rev() {
            let dh = &d_out.row(t) + &carry;
            let z = cache.z.row(t);
            let r = cache.r.row(t);
            let h_prev = cache.h_prev.row(t);
            let cand = cache.candidate.row(t);

            let dc = Zip::from(&dh).and(&z).and(&cand).map_collect(|&d, &z, &c| d * (1.0 - z) * (1.0 - c * c));
            let dz = Zip::from(&dh).and(&z).and(&h_prev).and(&cand)
                .map_collect(|&d, &z, &hp, &c| d * (hp - c) * z * (1.0 - z));
            let d_rh = self.u_h.dot(&dc);
            let dr = Zip::from(&d_rh).and(&h_prev).and(&r).map_collect(|&g, &hp, &r| g * hp * r * (1.0 - r));

            let mut next = &dh * &z + &d_rh * &r;
            next += &self.u_z.dot(&dz);
            next += &self.u_r.dot(&dr);
            carry = next;

            d_zpre.row_mut(t).assign(&dz);
            d_rpre.row_mut(t).assign(&dr);
            d_cpre.row_mut(t).assign(&dc);
        }
        let xt = cache.input.t();
        grads.w_z += &xt.dot(&d_zpre);
        grads.w_r += &xt.dot(&d_rpre);
        grads.w_h += &xt.dot(&d_cpre);
        grads.u_z += &cache.h_prev.t().dot(&d_zpre);
        grads.u_r += &cache.h_prev.t().dot(&d_rpre);
        grads.u_h += &cache.r_h.t().dot(&d_cpre);
        grads.b_z += &d_zpre.sum_axis(Axis(0));
        grads.b_r += &d_rpre.sum_axis(Axis(0));
        grads.b_h += &d_cpre.sum_axis(Axis(0));

        let mut dx = d_zpre.dot(&self.w_z.t());
        dx += &d_rpre.dot(&self.w_r.t());
        dx += &d_cpre.dot(&self.w_h.t());
        Ok(dx)
    }
}

impl Params for GruLayer {
    fn blocks(&self) -> Vec<&[f64]> {
        [&self.w_z, &self.u_z, &self.w_r, &self.u_r, &self.w_h, &self.u_h]
            .into_iter()
            .map(|a| a.as_slice().expect("standard layout"))
            .chain([&self.b_z, &self.b_r, &self.b_h].into_iter().map(|b| b.as_slice().expect("contiguous")))
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let GruLayer { w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h } = self;
        [w_z, u_z, w_r, u_r, w_h, u_h]
            .into_iter()
            .map(|a| a.as_slice_mut().expect("standard layout"))
            .chain([b_z, b_r, b_h].into_iter().map(|b| b.as_slice_mut().expect("contiguous")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_stay_at_zero() {
        let g = GruLayer::zeros(3, 4);
        let h = g.step(array![1.0, -2.0, 0.5].view(), Array1::zeros(4).view()).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_update_gate_copies_state() {
        let mut g = GruLayer::zeros(2, 3);
        g.b_z.fill(100.0);
        let prev = array![0.3, -0.7, 0.9];
        let h = g.step(array![5.0, -5.0].view(), prev.view()).unwrap();
        for (a, b) in h.iter().zip(&prev) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = GruLayer::zeros(1, 1);
        for b in g.blocks_mut() {
            b[0] = rng.random_range(-0.5..0.5);
        }
        let (x, hp) = (0.8, -0.35);
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let z = s(g.w_z[[0, 0]] * x + g.u_z[[0, 0]] * hp + g.b_z[0]);
        let r = s(g.w_r[[0, 0]] * x + g.u_r[[0, 0]] * hp + g.b_r[0]);
        let c = (g.w_h[[0, 0]] * x + g.u_h[[0, 0]] * (r * hp) + g.b_h[0]).tanh();
        let expected = z * hp + (1.0 - z) * c;
        let got = g.step(array![x].view(), array![hp].view()).unwrap()[0];
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn forward_composes_steps_and_is_order_sensitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = GruLayer::init(3, 5, &mut rng);
        let x = Array2::from_shape_fn((3, 3), |(t, i)| ((t * 3 + i) as f64 * 0.9).sin());
        let out = g.forward(x.view(), None).unwrap();
        let mut h = Array1::zeros(5);
        for t in 0..3 {
            h = g.step(x.row(t), h.view()).unwrap();
            for (a, b) in out.row(t).iter().zip(&h) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        let rev = x.slice(ndarray::s![..;-1, ..]).to_owned();
        let out_rev = g.forward(rev.view(), None).unwrap();
        assert!((&out_rev.row(2) - &out.row(2)).iter().any(|v| v.abs() > 1e-6));
    }

    #[test]
    fn shape_errors() {
        let g = GruLayer::zeros(3, 4);
        assert!(g.step(array![1.0].view(), Array1::zeros(4).view()).is_err());
        assert!(g.forward(Array2::zeros((0, 3)).view(), None).is_err());
        assert!(g.forward(Array2::zeros((2, 2)).view(), None).is_err());
    }
}
