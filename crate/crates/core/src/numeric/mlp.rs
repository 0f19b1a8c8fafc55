use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::matrix::gemm;
use super::{Matrix, SeededRng};
use crate::error::{Error, Result};

/// Hidden-layer nonlinearity. The output layer is always affine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected network with all parameters in one flat buffer.
///
/// Layer `l` maps `dims[l] -> dims[l + 1]`; its row-major weight
/// (`dims[l] x dims[l + 1]`) is followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    activation: Activation,
}

/// Borrowed view of one layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerView<'a> {
    pub d_in: usize,
    pub d_out: usize,
    pub weight: &'a [f64],
    pub bias: &'a [f64],
}

/// Cached activations from a forward pass, consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct MlpTrace {
    activations: Vec<Matrix>,
}

impl MlpTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace always holds the input")
    }

    pub fn into_output(mut self) -> Matrix {
        self.activations.pop().expect("trace always holds the input")
    }
}

fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut off = 0;
    offsets.push(0);
    for w in dims.windows(2) {
        off += w[0] * w[1] + w[1];
        offsets.push(off);
    }
    offsets
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid(format!(
                "MLP needs at least two positive layer widths, got {dims:?}"
            )));
        }
        let offsets = layer_offsets(dims);
        let n = *offsets.last().unwrap();
        Ok(Self {
            dims: dims.to_vec(),
            offsets,
            params: vec![0.0; n],
            activation,
        })
    }

    /// Fan-in scaled uniform initialisation, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for weights and biases.
    pub fn init(dims: &[usize], activation: Activation, rng: &mut SeededRng) -> Result<Self> {
        let mut mlp = Self::zeros(dims, activation)?;
        for l in 0..mlp.num_layers() {
            let bound = 1.0 / libm::sqrt(mlp.dims[l] as f64);
            let (start, end) = (mlp.offsets[l], mlp.offsets[l + 1]);
            for p in &mut mlp.params[start..end] {
                *p = rng.uniform_in(-bound, bound);
            }
        }
        Ok(mlp)
    }

    pub fn from_params(dims: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut mlp = Self::zeros(dims, activation)?;
        if params.len() != mlp.params.len() {
            return Err(Error::shape(
                "Mlp::from_params",
                format!("{} parameters for dims {dims:?}", mlp.params.len()),
                params.len(),
            ));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("Mlp::from_params"));
        }
        mlp.params = params;
        Ok(mlp)
    }

    /// Single affine layer `x -> x W + b` with `weight` of shape `d_in x d_out`.
    pub fn affine(weight: &Matrix, bias: &[f64]) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::shape("Mlp::affine", weight.cols(), bias.len()));
        }
        let mut params = weight.as_slice().to_vec();
        params.extend_from_slice(bias);
        Self::from_params(&[weight.rows(), weight.cols()], Activation::Identity, params)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layer(&self, l: usize) -> LayerView<'_> {
        let (d_in, d_out) = (self.dims[l], self.dims[l + 1]);
        let start = self.offsets[l];
        let split = start + d_in * d_out;
        LayerView {
            d_in,
            d_out,
            weight: &self.params[start..split],
            bias: &self.params[split..split + d_out],
        }
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(
                "mlp_forward",
                format!("{} input columns", self.input_dim()),
                format!("{}x{} input", input.rows(), input.cols()),
            ));
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, input: &Matrix) -> Matrix {
        let layer = self.layer(l);
        let n = input.rows();
        let mut out = Matrix::zeros(n, layer.d_out);
        for r in 0..n {
            out.row_mut(r).copy_from_slice(layer.bias);
        }
        gemm(
            n,
            layer.d_in,
            layer.d_out,
            1.0,
            input.as_slice(),
            (layer.d_in, 1),
            layer.weight,
            (layer.d_out, 1),
            1.0,
            out.as_mut_slice(),
            (layer.d_out, 1),
        );
        if l + 1 < self.num_layers() && self.activation != Activation::Identity {
            let act = self.activation;
            out.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
        }
        out
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut h = self.layer_forward(0, input);
        for l in 1..self.num_layers() {
            h = self.layer_forward(l, &h);
        }
        Ok(h)
    }

    /// Forward pass that keeps every layer's output for backpropagation.
    pub fn forward_traced(&self, input: &Matrix) -> Result<MlpTrace> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.dims.len());
        activations.push(input.clone());
        for l in 0..self.num_layers() {
            let next = self.layer_forward(l, activations.last().unwrap());
            activations.push(next);
        }
        Ok(MlpTrace { activations })
    }

    /// Reverse pass. Adds `d loss / d params` into `grads` (same layout as
    /// [`Mlp::params`]) and returns `d loss / d input` when requested.
    pub fn backward(
        &self,
        trace: &MlpTrace,
        d_output: &Matrix,
        grads: &mut [f64],
        want_input_grad: bool,
    ) -> Result<Option<Matrix>> {
        if grads.len() != self.params.len() {
            return Err(Error::shape("Mlp::backward", self.params.len(), grads.len()));
        }
        let out = trace.output();
        if d_output.shape() != out.shape() || trace.activations.len() != self.dims.len() {
            return Err(Error::shape(
                "Mlp::backward",
                format!("{}x{} output gradient", out.rows(), out.cols()),
                format!("{}x{}", d_output.rows(), d_output.cols()),
            ));
        }
        let n = d_output.rows();
        let mut delta = d_output.clone();
        for l in (0..self.num_layers()).rev() {
            let layer = self.layer(l);
            let a_prev = &trace.activations[l];
            let start = self.offsets[l];
            let split = start + layer.d_in * layer.d_out;
            // dW += a_prev^T delta
            gemm(
                layer.d_in,
                n,
                layer.d_out,
                1.0,
                a_prev.as_slice(),
                (1, layer.d_in),
                delta.as_slice(),
                (layer.d_out, 1),
                1.0,
                &mut grads[start..split],
                (layer.d_out, 1),
            );
            let gb = &mut grads[split..split + layer.d_out];
            for row in delta.row_iter() {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 && !want_input_grad {
                return Ok(None);
            }
            // d a_prev = delta W^T
            let mut d_prev = Matrix::zeros(n, layer.d_in);
            gemm(
                n,
                layer.d_out,
                layer.d_in,
                1.0,
                delta.as_slice(),
                (layer.d_out, 1),
                layer.weight,
                (1, layer.d_out),
                0.0,
                d_prev.as_mut_slice(),
                (layer.d_in, 1),
            );
            if l > 0 {
                let act = self.activation;
                for (d, a) in d_prev.as_mut_slice().iter_mut().zip(a_prev.as_slice()) {
                    *d *= act.derivative_from_output(*a);
                }
            }
            delta = d_prev;
        }
        Ok(Some(delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gaussian_sample;

    /// Straight-line forward pass, written independently of the gemm path.
    fn naive_forward(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in 0..mlp.num_layers() {
            let layer = mlp.layer(l);
            let mut next = layer.bias.to_vec();
            for (j, nj) in next.iter_mut().enumerate() {
                for (i, hi) in h.iter().enumerate() {
                    *nj += hi * layer.weight[i * layer.d_out + j];
                }
            }
            if l + 1 < mlp.num_layers() {
                next.iter_mut().for_each(|v| *v = libm::tanh(*v));
            }
            h = next;
        }
        h
    }

    #[test]
    fn zero_weights_emit_bias() {
        let mut mlp = Mlp::zeros(&[3, 2], Activation::Tanh).unwrap();
        let n = mlp.num_params();
        mlp.params_mut()[n - 2..].copy_from_slice(&[0.5, -1.5]);
        let x = gaussian_sample(&mut SeededRng::new(0), &[0.0; 3], 1.0, 4);
        let y = mlp.forward(&x).unwrap();
        for r in y.row_iter() {
            assert_eq!(r, &[0.5, -1.5]);
        }
    }

    #[test]
    fn identity_layer_is_identity() {
        let mlp = Mlp::affine(&Matrix::identity(3), &[0.0; 3]).unwrap();
        let x = gaussian_sample(&mut SeededRng::new(1), &[0.0; 3], 1.0, 5);
        assert_eq!(mlp.forward(&x).unwrap(), x);
    }

    #[test]
    fn matches_naive_forward() {
        let mut rng = SeededRng::new(2);
        let mlp = Mlp::init(&[2, 3, 2], Activation::Tanh, &mut rng).unwrap();
        let x = gaussian_sample(&mut rng, &[0.0; 2], 1.0, 6);
        let y = mlp.forward(&x).unwrap();
        for r in 0..6 {
            let expect = naive_forward(&mlp, x.row(r));
            for (a, b) in y.row(r).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_wrong_input_width() {
        let mlp = Mlp::zeros(&[2, 4, 1], Activation::Tanh).unwrap();
        let err = mlp.forward(&Matrix::zeros(3, 3)).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn scalar_linear_gradient() {
        // y = w x, loss (y - t)^2 with w = 1, x = 2, t = 0 -> dloss/dw = 8.
        let mlp = Mlp::from_params(&[1, 1], Activation::Identity, vec![1.0, 0.0]).unwrap();
        let x = Matrix::from_rows(&[[2.0]]).unwrap();
        let trace = mlp.forward_traced(&x).unwrap();
        let y = trace.output().get(0, 0);
        let d_out = Matrix::from_rows(&[[2.0 * (y - 0.0)]]).unwrap();
        let mut g = vec![0.0; 2];
        mlp.backward(&trace, &d_out, &mut g, false).unwrap();
        assert_eq!(g[0], 8.0);

        // at y == t the gradient vanishes
        let d_out = Matrix::from_rows(&[[2.0 * (y - 2.0)]]).unwrap();
        let mut g = vec![0.0; 2];
        mlp.backward(&trace, &d_out, &mut g, false).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn chained_networks_must_agree_on_widths() {
        let a = Mlp::zeros(&[2, 3], Activation::Tanh).unwrap();
        let b = Mlp::zeros(&[4, 1], Activation::Tanh).unwrap();
        let h = a.forward(&Matrix::zeros(1, 2)).unwrap();
        assert!(b.forward(&h).is_err());
    }
}
