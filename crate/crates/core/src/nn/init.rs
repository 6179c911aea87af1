use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Glorot-uniform `fan_in × fan_out` matrix.
pub fn glorot_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit))
}

/// Square orthogonal matrix from modified Gram-Schmidt on Gaussian columns.
pub fn orthogonal<R: Rng>(n: usize, rng: &mut R) -> Array2<f64> {
    loop {
        let mut q: Array2<f64> =
            Array2::from_shape_simple_fn((n, n), || StandardNormal.sample(rng));
        let mut ok = true;
        for j in 0..n {
            for k in 0..j {
                let proj = q.column(j).dot(&q.column(k));
                let qk = q.column(k).to_owned();
                q.column_mut(j).scaled_add(-proj, &qk);
            }
            let norm = q.column(j).dot(&q.column(j)).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            q.column_mut(j).mapv_inplace(|v| v / norm);
        }
        if ok {
            return q;
        }
    }
}
