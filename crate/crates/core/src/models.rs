//! Small fully connected embedding networks with hand-written backprop.
//!
//! Networks output raw (unnormalized) embeddings; normalization happens in
//! the losses.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::numkit::{Mat, Seed};

const MLP_MAGIC: &[u8; 8] = b"ADDMLP01";
const MAT_MAGIC: &[u8; 8] = b"ADDMAT01";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Layer widths from input to embedding; the activation applies to hidden
/// layers only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Self {
        MlpSpec { layer_widths, activation }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::InvalidSpec("network needs at least input and output widths".into()));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::InvalidSpec(format!("zero layer width in {:?}", self.layer_widths)));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }

    pub fn layer_count(&self) -> usize {
        self.layer_widths.len() - 1
    }

    /// Same input and output, hidden widths doubled.
    pub fn widened(&self) -> MlpSpec {
        let last = self.layer_widths.len() - 1;
        let widths = self
            .layer_widths
            .iter()
            .enumerate()
            .map(|(i, &w)| if i == 0 || i == last { w } else { 2 * w })
            .collect();
        MlpSpec { layer_widths: widths, activation: self.activation }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    spec: MlpSpec,
    /// Layer weights, `out x in`.
    weights: Vec<Mat>,
    biases: Vec<Vec<f64>>,
}

/// Activations retained by [`MlpNetwork::forward`] for one backward pass.
#[derive(Debug, Clone)]
pub struct BatchCache {
    /// Input to each layer (the batch itself for layer 0).
    layer_inputs: Vec<Mat>,
    /// Affine outputs of each layer before the activation.
    pre_activations: Vec<Mat>,
    consumed: bool,
}

impl BatchCache {
    pub fn is_consumed(&self) -> bool {
        self.consumed
    }
}

/// Parameter gradients, shaped like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    /// Flat views in the same order as [`MlpNetwork::params_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .map(Mat::as_slice)
            .chain(self.biases.iter().map(Vec::as_slice))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct MlpHeader {
    format_version: u32,
    spec: MlpSpec,
    weight_shapes: Vec<(usize, usize)>,
    bias_lens: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct MatHeader {
    format_version: u32,
    rows: usize,
    cols: usize,
}

fn affine(input: &Mat, weight: &Mat, bias: &[f64]) -> Mat {
    let (n, _) = input.shape();
    let out_dim = weight.rows();
    let mut out = Mat::zeros(n, out_dim);
    for i in 0..n {
        let x = input.row(i);
        let row = out.row_mut(i);
        for (o, (w, b)) in row.iter_mut().zip(weight.iter_rows().zip(bias)) {
            *o = b + x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

impl MlpNetwork {
    /// Fresh network: zero-mean Gaussian weights scaled by fan-in (He for
    /// relu, Xavier for tanh), zero biases.
    pub fn init(spec: &MlpSpec, seed: Seed) -> Result<Self> {
        spec.validate()?;
        let mut rng = seed.rng();
        let mut weights = Vec::with_capacity(spec.layer_count());
        let mut biases = Vec::with_capacity(spec.layer_count());
        for pair in spec.layer_widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = match spec.activation {
                Activation::Relu => (2.0 / fan_in as f64).sqrt(),
                Activation::Tanh => (2.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            let data = (0..fan_in * fan_out)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            weights.push(Mat::from_vec(fan_out, fan_in, data)?);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(MlpNetwork { spec: spec.clone(), weights, biases })
    }

    /// Network from explicit parameters; shapes must chain with `spec`.
    pub fn from_parameters(spec: MlpSpec, weights: Vec<Mat>, biases: Vec<Vec<f64>>) -> Result<Self> {
        spec.validate()?;
        if weights.len() != spec.layer_count() || biases.len() != spec.layer_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} layers in spec, {} weights, {} biases",
                spec.layer_count(),
                weights.len(),
                biases.len()
            )));
        }
        for (l, pair) in spec.layer_widths.windows(2).enumerate() {
            if weights[l].shape() != (pair[1], pair[0]) || biases[l].len() != pair[1] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l}: weight {:?}, bias {} for widths {:?}",
                    weights[l].shape(),
                    biases[l].len(),
                    pair
                )));
            }
            if biases[l].iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite(format!("bias of layer {l}")));
            }
        }
        Ok(MlpNetwork { spec, weights, biases })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Mat] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.as_slice().len()).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Mutable flat views of all parameters: weights by layer, then biases.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.weights.iter_mut().map(Mat::as_mut_slice).collect();
        out.extend(self.biases.iter_mut().map(Vec::as_mut_slice));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Mat::is_finite)
            && self.biases.iter().flatten().all(|b| b.is_finite())
    }

    fn check_input(&self, inputs: &Mat) -> Result<()> {
        if inputs.cols() != self.spec.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.spec.input_dim(), found: inputs.cols() });
        }
        Ok(())
    }

    /// Embeddings for a batch, keeping what the backward pass needs.
    pub fn forward(&self, inputs: &Mat) -> Result<(Mat, BatchCache)> {
        self.check_input(inputs)?;
        let layers = self.spec.layer_count();
        let mut layer_inputs = Vec::with_capacity(layers);
        let mut pre_activations = Vec::with_capacity(layers);
        let mut current = inputs.clone();
        for l in 0..layers {
            let z = affine(&current, &self.weights[l], &self.biases[l]);
            let next = if l + 1 < layers {
                let mut a = z.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v = self.spec.activation.apply(*v));
                a
            } else {
                z.clone()
            };
            layer_inputs.push(std::mem::replace(&mut current, next));
            pre_activations.push(z);
        }
        Ok((current, BatchCache { layer_inputs, pre_activations, consumed: false }))
    }

    /// Embeddings without a cache, for evaluation and frozen teachers.
    pub fn embed(&self, inputs: &Mat) -> Result<Mat> {
        self.check_input(inputs)?;
        let layers = self.spec.layer_count();
        let mut current = inputs.clone();
        for l in 0..layers {
            let mut z = affine(&current, &self.weights[l], &self.biases[l]);
            if l + 1 < layers {
                z.as_mut_slice().iter_mut().for_each(|v| *v = self.spec.activation.apply(*v));
            }
            current = z;
        }
        Ok(current)
    }

    /// Parameter gradients of `sum(grad_embeddings .* embeddings)`.
    ///
    /// Consumes the cache: a second call with the same cache fails with
    /// `StaleCache`.
    pub fn backward(&self, cache: &mut BatchCache, grad_embeddings: &Mat) -> Result<MlpGrads> {
        if cache.consumed {
            return Err(Error::StaleCache);
        }
        let layers = self.spec.layer_count();
        if cache.pre_activations.len() != layers {
            return Err(Error::ShapeMismatch(format!(
                "cache has {} layers, network {}",
                cache.pre_activations.len(),
                layers
            )));
        }
        for (l, z) in cache.pre_activations.iter().enumerate() {
            if z.cols() != self.spec.layer_widths[l + 1] {
                return Err(Error::ShapeMismatch(format!("cache layer {l} width {}", z.cols())));
            }
        }
        let out = &cache.pre_activations[layers - 1];
        if grad_embeddings.shape() != out.shape() {
            return Err(Error::ShapeMismatch(format!(
                "gradient {:?} for embeddings {:?}",
                grad_embeddings.shape(),
                out.shape()
            )));
        }
        cache.consumed = true;

        let mut weight_grads = vec![Mat::zeros(0, 0); layers];
        let mut bias_grads = vec![Vec::new(); layers];
        let mut delta = grad_embeddings.clone();
        for l in (0..layers).rev() {
            let input = &cache.layer_inputs[l];
            let weight = &self.weights[l];
            let (out_dim, in_dim) = weight.shape();
            let mut gw = Mat::zeros(out_dim, in_dim);
            let mut gb = vec![0.0; out_dim];
            for i in 0..delta.rows() {
                let d = delta.row(i);
                let x = input.row(i);
                for (o, &dv) in d.iter().enumerate() {
                    gb[o] += dv;
                    for (g, xv) in gw.row_mut(o).iter_mut().zip(x) {
                        *g += dv * xv;
                    }
                }
            }
            weight_grads[l] = gw;
            bias_grads[l] = gb;

            if l > 0 {
                let z_prev = &cache.pre_activations[l - 1];
                let mut next = Mat::zeros(delta.rows(), in_dim);
                for i in 0..delta.rows() {
                    let d = delta.row(i);
                    let row = next.row_mut(i);
                    for (o, &dv) in d.iter().enumerate() {
                        for (r, w) in row.iter_mut().zip(weight.row(o)) {
                            *r += dv * w;
                        }
                    }
                    for (r, z) in row.iter_mut().zip(z_prev.row(i)) {
                        *r *= self.spec.activation.derivative(*z);
                    }
                }
                delta = next;
            }
        }
        Ok(MlpGrads { weights: weight_grads, biases: bias_grads })
    }

    /// Writes the `ADDMLP01` container: JSON header with the spec and
    /// shapes, then row-major weights layer by layer, then biases, all f64 LE.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = MlpHeader {
            format_version: FORMAT_VERSION,
            spec: self.spec.clone(),
            weight_shapes: self.weights.iter().map(Mat::shape).collect(),
            bias_lens: self.biases.iter().map(Vec::len).collect(),
        };
        container::write_header(w, MLP_MAGIC, &header)?;
        for weight in &self.weights {
            container::write_f64s(w, weight.as_slice())?;
        }
        for bias in &self.biases {
            container::write_f64s(w, bias)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let header: MlpHeader = container::read_header(r, MLP_MAGIC)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported network format version {}", header.format_version)));
        }
        let mut weights = Vec::with_capacity(header.weight_shapes.len());
        for &(rows, cols) in &header.weight_shapes {
            weights.push(Mat::from_vec(rows, cols, container::read_f64s(r, rows * cols)?)?);
        }
        let mut biases = Vec::with_capacity(header.bias_lens.len());
        for &len in &header.bias_lens {
            biases.push(container::read_f64s(r, len)?);
        }
        container::expect_eof(r)?;
        MlpNetwork::from_parameters(header.spec, weights, biases)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        MlpNetwork::read_from(&mut BufReader::new(File::open(path)?))
    }
}

/// Writes a bare matrix as an `ADDMAT01` container (header: rows, cols).
pub fn save_matrix(mat: &Mat, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = MatHeader { format_version: FORMAT_VERSION, rows: mat.rows(), cols: mat.cols() };
    container::write_header(&mut w, MAT_MAGIC, &header)?;
    container::write_f64s(&mut w, mat.as_slice())?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Mat> {
    let mut r = BufReader::new(File::open(path)?);
    let header: MatHeader = container::read_header(&mut r, MAT_MAGIC)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported matrix format version {}", header.format_version)));
    }
    let data = container::read_f64s(&mut r, header.rows * header.cols)?;
    container::expect_eof(&mut r)?;
    Mat::from_vec(header.rows, header.cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{finite_diff_grad, max_relative_error};
    use rand_distr::StandardNormal;

    fn normal_batch(seed: u64, rows: usize, cols: usize) -> Mat {
        let mut rng = Seed(seed).rng();
        let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
        Mat::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_chained() {
        let spec = MlpSpec::new(vec![4, 8, 2], Activation::Relu);
        let a = MlpNetwork::init(&spec, Seed(1)).unwrap();
        let b = MlpNetwork::init(&spec, Seed(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights()[0].shape(), (8, 4));
        assert_eq!(a.weights()[1].shape(), (2, 8));
        assert!(a.biases().iter().flatten().all(|&b| b == 0.0));
        assert_ne!(a, MlpNetwork::init(&spec, Seed(2)).unwrap());
    }

    #[test]
    fn init_rejects_bad_specs() {
        assert!(MlpNetwork::init(&MlpSpec::new(vec![4], Activation::Relu), Seed(0)).is_err());
        assert!(MlpNetwork::init(&MlpSpec::new(vec![4, 0, 2], Activation::Tanh), Seed(0)).is_err());
    }

    #[test]
    fn relu_init_keeps_output_variance_near_one() {
        let spec = MlpSpec::new(vec![16, 64, 64, 16], Activation::Relu);
        let net = MlpNetwork::init(&spec, Seed(9)).unwrap();
        let x = normal_batch(10, 10_000, 16);
        let y = net.embed(&x).unwrap();
        let vals = y.as_slice();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(var > 0.25 && var < 4.0, "variance {var}");
    }

    #[test]
    fn zero_network_gives_zero_embeddings() {
        let spec = MlpSpec::new(vec![3, 5, 2], Activation::Tanh);
        let net = MlpNetwork::from_parameters(
            spec,
            vec![Mat::zeros(5, 3), Mat::zeros(2, 5)],
            vec![vec![0.0; 5], vec![0.0; 2]],
        )
        .unwrap();
        let (y, _) = net.forward(&normal_batch(1, 4, 3)).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_inputs_through() {
        let mut eye = Mat::zeros(3, 3);
        (0..3).for_each(|i| eye.set(i, i, 1.0));
        let net = MlpNetwork::from_parameters(MlpSpec::new(vec![3, 3], Activation::Relu), vec![eye], vec![vec![0.0; 3]])
            .unwrap();
        let x = normal_batch(2, 5, 3);
        assert_eq!(net.forward(&x).unwrap().0, x);
    }

    #[test]
    fn forward_is_row_independent() {
        let net = MlpNetwork::init(&MlpSpec::new(vec![4, 6, 3], Activation::Relu), Seed(3)).unwrap();
        let x = normal_batch(4, 6, 4);
        let perm = [3, 0, 5, 1, 4, 2];
        let y = net.embed(&x).unwrap();
        let y_perm = net.embed(&x.select_rows(&perm)).unwrap();
        assert_eq!(y_perm, y.select_rows(&perm));
        assert_eq!(net.forward(&x).unwrap().0, y);
        assert!(matches!(net.embed(&Mat::zeros(1, 3)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn backward_closed_forms_and_errors() {
        let net = MlpNetwork::init(&MlpSpec::new(vec![3, 2], Activation::Relu), Seed(4)).unwrap();
        let x = Mat::from_rows(&[[0.5, -1.0, 2.0]]).unwrap();
        let (_, mut cache) = net.forward(&x).unwrap();
        let g = Mat::from_rows(&[[1.5, -0.5]]).unwrap();
        let grads = net.backward(&mut cache, &g).unwrap();
        let expected = [0.75, -1.5, 3.0, -0.25, 0.5, -1.0];
        assert_eq!(grads.weights[0].as_slice(), &expected);
        assert_eq!(grads.biases[0], vec![1.5, -0.5]);
        assert!(cache.is_consumed());
        assert!(matches!(net.backward(&mut cache, &g), Err(Error::StaleCache)));

        let (_, mut cache) = net.forward(&x).unwrap();
        assert!(matches!(net.backward(&mut cache, &Mat::zeros(2, 2)), Err(Error::ShapeMismatch(_))));

        let deep = MlpNetwork::init(&MlpSpec::new(vec![3, 4, 2], Activation::Tanh), Seed(5)).unwrap();
        let (_, mut cache) = deep.forward(&normal_batch(6, 3, 3)).unwrap();
        let zero = deep.backward(&mut cache, &Mat::zeros(3, 2)).unwrap();
        assert!(zero.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    fn set_params(net: &mut MlpNetwork, flat: &[f64]) {
        let mut offset = 0;
        for p in net.params_mut() {
            let n = p.len();
            p.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for activation in [Activation::Tanh, Activation::Relu] {
            let spec = MlpSpec::new(vec![3, 5, 4, 2], activation);
            let net = MlpNetwork::init(&spec, Seed(8)).unwrap();
            let x = normal_batch(12, 4, 3);
            let target = normal_batch(13, 4, 2);
            // L = sum(target .* y) + 0.5 * sum(y^2)
            let objective = |n: &MlpNetwork| {
                let y = n.embed(&x).unwrap();
                y.as_slice().iter().zip(target.as_slice()).map(|(y, t)| t * y + 0.5 * y * y).sum::<f64>()
            };
            let (y, mut cache) = net.forward(&x).unwrap();
            let mut g = target.clone();
            g.add_scaled(&y, 1.0).unwrap();
            let grads = net.backward(&mut cache, &g).unwrap();
            let analytic: Vec<f64> = grads.tensors().concat();

            let mut flat: Vec<f64> = Vec::new();
            for p in net.clone().params_mut() {
                flat.extend_from_slice(p);
            }
            let numeric = finite_diff_grad(
                |theta| {
                    let mut n = net.clone();
                    set_params(&mut n, theta);
                    objective(&n)
                },
                &flat,
                1e-6,
            )
            .unwrap();
            assert!(max_relative_error(&analytic, &numeric, 1e-3) < 1e-4, "{activation:?}");
        }
    }

    #[test]
    fn serialization_round_trip_and_corruption() {
        let net = MlpNetwork::init(&MlpSpec::new(vec![4, 6, 3], Activation::Tanh), Seed(21)).unwrap();
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"ADDMLP01");
        assert_eq!(MlpNetwork::read_from(&mut buf.as_slice()).unwrap(), net);

        let mut truncated = buf.clone();
        truncated.pop();
        assert!(MlpNetwork::read_from(&mut truncated.as_slice()).is_err());
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(MlpNetwork::read_from(&mut bad_magic.as_slice()), Err(Error::Format(_))));
        let mut trailing = buf;
        trailing.push(0);
        assert!(MlpNetwork::read_from(&mut trailing.as_slice()).is_err());
    }
}
