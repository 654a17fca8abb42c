//! Multi-output feed-forward network mapping a market state to a DIM profile.
//!
//! Inputs are min-max normalized to `[0, 1]`, hidden layers use ReLU and the
//! output layer is linear with one unit per monitoring time.

mod adam;
mod train;

pub use adam::AdamState;
pub use train::{train, EarlyStop, EpochRecord, StopReason, TrainConfig, TrainReport};

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

const MAGIC: &[u8; 8] = b"DIMMLP\0\0";
const VERSION: u32 = 1;

/// Hidden widths used throughout the experiments.
pub const DEFAULT_HIDDEN: [usize; 3] = [256, 256, 256];

/// Dense layer; `weights` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    norm_bounds: Vec<(f64, f64)>,
    config_digest: [u8; 32],
}

/// Per-layer gradients, same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::config(format!("invalid layer dims {dims:?}")));
    }
    Ok(())
}

/// Glorot-uniform weights and zero biases for `dims = [d, h1, ..., N]`.
pub fn glorot_init(dims: &[usize], seed: u64) -> Result<Vec<Layer>> {
    check_dims(dims)?;
    let mut rng = rng::seeded(seed);
    Ok(dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights =
                Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-limit..limit));
            Layer {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect())
}

/// Mean over outputs of the squared difference.
pub fn mse_loss(pred: &[f64], label: &[f64]) -> Result<f64> {
    if pred.len() != label.len() {
        return Err(Error::Dimension {
            expected: label.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = pred.iter().zip(label).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(s / pred.len() as f64)
}

/// Mean over rows and columns of the squared difference.
pub fn batch_mse(pred: ArrayView2<'_, f64>, label: ArrayView2<'_, f64>) -> f64 {
    let n = pred.len();
    if n == 0 {
        return 0.0;
    }
    let mut s = 0.0;
    Zip::from(pred)
        .and(label)
        .for_each(|p, y| s += (p - y) * (p - y));
    s / n as f64
}

impl MlpModel {
    /// Fresh network with Glorot weights. `norm_bounds` has one entry per input.
    pub fn new(dims: &[usize], norm_bounds: Vec<(f64, f64)>, seed: u64) -> Result<Self> {
        let layers = glorot_init(dims, seed)?;
        Self::from_layers(layers, norm_bounds)
    }

    pub fn from_layers(layers: Vec<Layer>, norm_bounds: Vec<(f64, f64)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].weights.ncols() != pair[1].weights.nrows() {
                return Err(Error::config("layer dims do not chain"));
            }
        }
        for l in &layers {
            if l.bias.len() != l.weights.ncols() {
                return Err(Error::config("bias length does not match layer width"));
            }
        }
        if norm_bounds.len() != layers[0].weights.nrows() {
            return Err(Error::Dimension {
                expected: layers[0].weights.nrows(),
                got: norm_bounds.len(),
            });
        }
        if norm_bounds
            .iter()
            .any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
        {
            return Err(Error::config(
                "normalization bounds must be finite with min <= max",
            ));
        }
        Ok(Self {
            layers,
            norm_bounds,
            config_digest: [0; 32],
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].weights.nrows()];
        dims.extend(self.layers.iter().map(|l| l.weights.ncols()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weights.ncols()
    }

    pub fn norm_bounds(&self) -> &[(f64, f64)] {
        &self.norm_bounds
    }

    pub fn config_digest(&self) -> String {
        hex::encode(self.config_digest)
    }

    pub fn set_config_digest(&mut self, bytes: &[u8]) {
        self.config_digest = Sha256::digest(bytes).into();
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// True if any input lies outside the normalization box.
    pub fn is_extrapolating(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.norm_bounds)
            .any(|(&v, &(lo, hi))| v < lo || v > hi)
    }

    /// Maps raw inputs to `[0, 1]`; a pinned dimension (`min == max`) maps to 0.
    pub fn normalize_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for (mut col, &(lo, hi)) in out.axis_iter_mut(Axis(1)).zip(&self.norm_bounds) {
            let width = hi - lo;
            col.mapv_inplace(|v| if width > 0.0 { (v - lo) / width } else { 0.0 });
        }
        Ok(out)
    }

    fn forward_normalized(&self, x: &Array2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.weights);
            z += &l.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Predictions for a batch of raw inputs, one row per state.
    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_normalized(&self.normalize_batch(x)?))
    }

    /// Predicted DIM profile for one raw input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        Ok(self.predict_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Batch MSE and its gradient for normalized inputs `x` and labels `y`.
    pub fn loss_and_gradients(&self, x: &Array2<f64>, y: ArrayView2<'_, f64>) -> (f64, Gradients) {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.weights);
            z += &l.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        let pred = &acts[last + 1];
        let loss = batch_mse(pred.view(), y);

        let scale = 2.0 / pred.len() as f64;
        let mut delta = pred - &y;
        delta *= scale;
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let dw = acts[i].t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut prev = delta.dot(&self.layers[i].weights.t());
                // ReLU derivative from the stored (post-activation) values
                Zip::from(&mut prev).and(&acts[i]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
            grads.push(Layer {
                weights: dw,
                bias: db,
            });
        }
        grads.reverse();
        (loss, Gradients { layers: grads })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let dims = self.dims();
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in &dims {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for &(lo, hi) in &self.norm_bounds {
            w.write_all(&lo.to_le_bytes())?;
            w.write_all(&hi.to_le_bytes())?;
        }
        w.write_all(&self.config_digest)?;
        for l in &self.layers {
            for v in l.weights.iter().chain(l.bias.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> std::result::Result<Self, String> {
        let mut take = |n: usize| -> std::result::Result<Vec<u8>, String> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf)
                .map_err(|e| format!("truncated model file: {e}"))?;
            Ok(buf)
        };
        if take(8)? != MAGIC {
            return Err("not a network file (bad magic)".into());
        }
        let u32_ = |b: Vec<u8>| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_(take(4)?);
        if version != VERSION {
            return Err(format!("unsupported model version {version}"));
        }
        let n_dims = u32_(take(4)?) as usize;
        if !(2..=64).contains(&n_dims) {
            return Err(format!("implausible layer count {n_dims}"));
        }
        let mut dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            dims.push(u32_(take(4)?) as usize);
        }
        check_dims(&dims).map_err(|e| e.to_string())?;
        let floats = |b: Vec<u8>| -> Vec<f64> {
            b.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        };
        let nb = floats(take(16 * dims[0])?);
        let norm_bounds: Vec<(f64, f64)> = nb.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let digest: [u8; 32] = take(32)?.try_into().expect("32 bytes");
        let mut layers = Vec::with_capacity(n_dims - 1);
        for w in dims.windows(2) {
            let vals = floats(take(8 * (w[0] * w[1] + w[1]))?);
            let (wv, bv) = vals.split_at(w[0] * w[1]);
            layers.push(Layer {
                weights: Array2::from_shape_vec((w[0], w[1]), wv.to_vec()).expect("shape"),
                bias: Array1::from_vec(bv.to_vec()),
            });
        }
        let mut m = Self::from_layers(layers, norm_bounds).map_err(|e| e.to_string())?;
        m.config_digest = digest;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file)).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// SHA-256 over the serialized model.
    pub fn digest(&self) -> String {
        let mut buf = Vec::with_capacity(8 * self.n_params() + 256);
        self.write_to(&mut buf).expect("write to memory");
        hex::encode(Sha256::digest(&buf))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bounds_moments_determinism() {
        let layers = glorot_init(&[2, 3], 1).unwrap();
        let lim = (6.0f64 / 5.0).sqrt();
        assert!(layers[0].weights.iter().all(|w| w.abs() <= lim));
        assert!(layers[0].bias.iter().all(|&b| b == 0.0));

        let big = glorot_init(&[200, 500], 2).unwrap();
        let w = &big[0].weights;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let target = 2.0 / 700.0;
        assert!((var / target - 1.0).abs() < 0.05, "var {var} vs {target}");

        assert_eq!(
            glorot_init(&[4, 8, 2], 9).unwrap(),
            glorot_init(&[4, 8, 2], 9).unwrap()
        );
        assert_ne!(
            glorot_init(&[4, 8, 2], 9).unwrap(),
            glorot_init(&[4, 8, 2], 10).unwrap()
        );
        assert!(glorot_init(&[4], 9).is_err());
        assert!(glorot_init(&[4, 0, 2], 9).is_err());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut m = MlpModel::new(&[3, 5, 5, 4], vec![(0.0, 1.0); 3], 1).unwrap();
        for l in m.layers_mut() {
            l.weights.fill(0.0);
        }
        assert_eq!(m.forward(&[0.3, 0.1, 0.9]).unwrap(), vec![0.0; 4]);
        assert!(m.forward(&[0.3, 0.1]).is_err());
    }

    #[test]
    fn linear_identity_wiring() {
        let layer = Layer {
            weights: Array2::eye(3),
            bias: Array1::zeros(3),
        };
        let m = MlpModel::from_layers(vec![layer], vec![(0.0, 1.0); 3]).unwrap();
        assert_eq!(
            m.forward(&[0.25, -0.5, 2.0]).unwrap(),
            vec![0.25, -0.5, 2.0]
        );
        let scaled = MlpModel::from_layers(m.layers().to_vec(), vec![(1.0, 3.0); 3]).unwrap();
        assert_eq!(
            scaled.forward(&[2.0, 1.0, 3.0]).unwrap(),
            vec![0.5, 0.0, 1.0]
        );
        assert!(scaled.is_extrapolating(&[0.0, 2.0, 2.0]));
        assert!(!scaled.is_extrapolating(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn loss_values() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[1.5, 2.5, 0.5], &[1.0, 2.0, 0.0]).unwrap(), 0.25);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p: Vec<f64> = (0..40).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..40).map(|_| rng.gen()).collect();
        let mut acc = 0.0;
        for i in 0..40 {
            let d = p[i] - y[i];
            acc += d * d;
        }
        assert!((mse_loss(&p, &y).unwrap() - acc / 40.0).abs() < 1e-15);
        let pa = Array2::from_shape_vec((4, 10), p.clone()).unwrap();
        let ya = Array2::from_shape_vec((4, 10), y.clone()).unwrap();
        assert!((batch_mse(pa.view(), ya.view()) - acc / 40.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_absorbs_power_of_two_rescale() {
        let m = MlpModel::new(&[2, 8, 3], vec![(-1.0, 3.0), (0.5, 0.75)], 3).unwrap();
        let m2 =
            MlpModel::from_layers(m.layers().to_vec(), vec![(-4.0, 12.0), (2.0, 3.0)]).unwrap();
        let x = [0.37, 0.61];
        assert_eq!(
            m.forward(&x).unwrap(),
            m2.forward(&[4.0 * x[0], 4.0 * x[1]]).unwrap()
        );
    }

    #[test]
    fn pinned_dimension_normalizes_to_zero() {
        let m = MlpModel::new(&[2, 4, 2], vec![(0.5, 0.5), (0.0, 1.0)], 3).unwrap();
        let x = array![[0.5, 0.2], [0.9, 0.2]];
        let n = m.normalize_batch(x.view()).unwrap();
        assert_eq!(n.column(0).to_vec(), vec![0.0, 0.0]);
        assert!(MlpModel::new(&[2, 4, 2], vec![(1.0, 0.5), (0.0, 1.0)], 3).is_err());
    }

    #[test]
    fn file_round_trip() {
        let mut m =
            MlpModel::new(&[3, 6, 6, 2], vec![(0.0, 1.0), (-1.0, 1.0), (2.0, 5.0)], 7).unwrap();
        m.set_config_digest(b"cfg");
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = MlpModel::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.digest(), m.digest());
        assert!(MlpModel::read_from(&mut &buf[..buf.len() - 1]).is_err());
        assert!(MlpModel::read_from(&mut &b"garbage!"[..]).is_err());
    }

    fn random_net(rng: &mut ChaCha8Rng) -> (MlpModel, Array2<f64>, Array2<f64>) {
        let d = rng.gen_range(1..=4);
        let n_hidden = rng.gen_range(1..=3);
        let mut dims = vec![d];
        for _ in 0..n_hidden {
            dims.push(rng.gen_range(2..=8));
        }
        let n_out = rng.gen_range(1..=6);
        dims.push(n_out);
        let mut m = MlpModel::new(&dims, vec![(0.0, 1.0); d], rng.gen()).unwrap();
        for l in m.layers_mut() {
            l.bias.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
        }
        let b = rng.gen_range(1..=5);
        let x = Array2::from_shape_fn((b, d), |_| rng.gen_range(0.0..1.0));
        let y = Array2::from_shape_fn((b, n_out), |_| rng.gen_range(-1.0..1.0));
        (m, x, y)
    }

    /// Smallest |pre-activation| over all hidden units; finite differences
    /// across a ReLU kink are meaningless.
    fn kink_distance(m: &MlpModel, x: &Array2<f64>) -> f64 {
        let mut a = x.clone();
        let mut closest = f64::INFINITY;
        let last = m.layers().len() - 1;
        for (i, l) in m.layers().iter().enumerate() {
            let mut z = a.dot(&l.weights);
            z += &l.bias;
            if i < last {
                closest = z.iter().fold(closest, |c, v| c.min(v.abs()));
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        closest
    }

    #[test]
    fn backprop_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut trials = 0;
        let eps = 1e-6;
        while trials < 100 {
            let (m, x, y) = random_net(&mut rng);
            if kink_distance(&m, &x) < 1e-3 {
                continue;
            }
            trials += 1;
            let (_, g) = m.loss_and_gradients(&x, y.view());
            let loss_at = |mm: &MlpModel| batch_mse(mm.forward_normalized(&x).view(), y.view());
            for li in 0..m.layers().len() {
                let shape = m.layers()[li].weights.dim();
                for r in 0..shape.0 {
                    for c in 0..shape.1 {
                        let mut p = m.clone();
                        p.layers_mut()[li].weights[[r, c]] += eps;
                        let mut q = m.clone();
                        q.layers_mut()[li].weights[[r, c]] -= eps;
                        let fd = (loss_at(&p) - loss_at(&q)) / (2.0 * eps);
                        let bp = g.layers[li].weights[[r, c]];
                        let scale = fd.abs().max(bp.abs());
                        assert!(
                            (fd - bp).abs() <= 1e-5 * scale + 1e-9,
                            "weights {li} [{r},{c}]: {bp} vs {fd}"
                        );
                    }
                }
                for c in 0..shape.1 {
                    let mut p = m.clone();
                    p.layers_mut()[li].bias[c] += eps;
                    let mut q = m.clone();
                    q.layers_mut()[li].bias[c] -= eps;
                    let fd = (loss_at(&p) - loss_at(&q)) / (2.0 * eps);
                    let bp = g.layers[li].bias[c];
                    let scale = fd.abs().max(bp.abs());
                    assert!(
                        (fd - bp).abs() <= 1e-5 * scale + 1e-9,
                        "bias {li} [{c}]: {bp} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn output_zero_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let eps = 1e-4;
        let mut trials = 0;
        while trials < 100 {
            let (m, x, _) = random_net(&mut rng);
            let x = x.slice(ndarray::s![0..1, ..]).to_owned();
            if kink_distance(&m, &x) < 1e-2 {
                continue;
            }
            trials += 1;
            // target off by one in output 0 only: dL/dθ = (2/n_out)·dŷ_0/dθ
            let mut y = m.forward_normalized(&x);
            y[[0, 0]] -= 1.0;
            let n_out = y.ncols() as f64;
            let (_, g) = m.loss_and_gradients(&x, y.view());
            let out0 = |mm: &MlpModel| mm.forward_normalized(&x)[[0, 0]];
            for li in 0..m.layers().len() {
                let (rows, cols) = m.layers()[li].weights.dim();
                for r in 0..rows {
                    for c in 0..cols {
                        let at = |dv: f64| {
                            let mut p = m.clone();
                            p.layers_mut()[li].weights[[r, c]] += dv;
                            out0(&p)
                        };
                        let fd = (at(-2.0 * eps) - 8.0 * at(-eps) + 8.0 * at(eps) - at(2.0 * eps))
                            / (12.0 * eps);
                        let bp = g.layers[li].weights[[r, c]] * n_out / 2.0;
                        let scale = fd.abs().max(bp.abs());
                        assert!(
                            (fd - bp).abs() <= 1e-6 * scale + 1e-10,
                            "weights {li} [{r},{c}]: {bp} vs {fd}"
                        );
                    }
                }
            }
        }
    }
}
