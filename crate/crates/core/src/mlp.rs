//! ReLU multilayer perceptron with a hand-written reverse pass.
//!
//! Weights are stored `out x in`, so a single linear layer maps the basis
//! vector `e_k` to its `k`-th weight column. Parameters are exposed in the
//! fixed order `[w0, b0, w1, b1, ...]`; [`Gradients`] follows the same order.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Layout, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub num_classes: usize,
    /// Adds one output slot after the classes for abstention.
    pub abstain: bool,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, num_classes: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_widths,
            num_classes,
            abstain: false,
            activation: Activation::Relu,
        }
    }

    pub fn with_abstention(mut self) -> Self {
        self.abstain = true;
        self
    }

    pub fn output_dim(&self) -> usize {
        self.num_classes + usize::from(self.abstain)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be at least 1"));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::invalid("hidden widths must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes must be at least 2"));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut fan_in = self.input_dim;
        for &w in &self.hidden_widths {
            dims.push((w, fan_in));
            fan_in = w;
        }
        dims.push((self.output_dim(), fan_in));
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    /// `[w0, b0, w1, b1, ...]`
    params: Vec<Tensor>,
}

/// Per-parameter gradients in the model's parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Gradients {
            tensors: model.params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

/// Activations retained by [`Mlp::forward_cached`] for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Tensor>,
    logits: Tensor,
}

impl ForwardCache {
    pub fn logits(&self) -> &Tensor {
        &self.logits
    }
}

impl Mlp {
    /// He-uniform weights and zero biases drawn from a seeded ChaCha stream.
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (out, fan_in) in spec.layer_dims() {
            let bound = (6.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..out * fan_in)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            params.push(Tensor::from_vec(&[out, fan_in], w)?);
            params.push(Tensor::zeros(&[out]));
        }
        Ok(Mlp { spec, params })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut params = Vec::new();
        for (out, fan_in) in spec.layer_dims() {
            params.push(Tensor::zeros(&[out, fan_in]));
            params.push(Tensor::zeros(&[out]));
        }
        Ok(Mlp { spec, params })
    }

    /// Builds a model from explicit parameters in `[w0, b0, ...]` order.
    pub fn from_params(spec: MlpSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if params.len() != 2 * dims.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, got {}",
                2 * dims.len(),
                params.len()
            )));
        }
        for (l, &(out, fan_in)) in dims.iter().enumerate() {
            if params[2 * l].shape() != [out, fan_in] || params[2 * l + 1].shape() != [out] {
                return Err(Error::invalid(format!("layer {l} parameter shape mismatch")));
            }
        }
        Ok(Mlp { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn num_layers(&self) -> usize {
        self.params.len() / 2
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.spec.input_dim {
            return Err(Error::invalid(format!(
                "input shape {:?} does not match input_dim {}",
                x.shape(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Logits for a `[batch x input_dim]` matrix.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(x)?.logits)
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<ForwardCache> {
        self.check_input(x)?;
        let batch = x.rows();
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut current = x.clone();
        for l in 0..self.num_layers() {
            let w = &self.params[2 * l];
            let b = &self.params[2 * l + 1];
            let (out, fan_in) = (w.shape()[0], w.shape()[1]);
            let mut z = Tensor::zeros(&[batch, out]);
            for i in 0..batch {
                z.row_mut(i).copy_from_slice(b.data());
            }
            gemm(
                Layout::NT,
                batch,
                fan_in,
                out,
                1.0,
                current.data(),
                w.data(),
                1.0,
                z.data_mut(),
            );
            if l + 1 < self.num_layers() {
                for v in z.data_mut() {
                    *v = v.max(0.0);
                }
            }
            inputs.push(current);
            current = z;
        }
        Ok(ForwardCache {
            inputs,
            logits: current,
        })
    }

    /// Reverse pass from `d loss / d logits`.
    ///
    /// Returns parameter gradients and, when `want_input` is set, the
    /// gradient with respect to the batch input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_logits: &Tensor,
        want_input: bool,
    ) -> Result<(Gradients, Option<Tensor>)> {
        if grad_logits.shape() != cache.logits.shape() {
            return Err(Error::invalid(format!(
                "gradient shape {:?} does not match logits {:?}",
                grad_logits.shape(),
                cache.logits.shape()
            )));
        }
        let batch = grad_logits.rows();
        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_logits.clone();
        let mut input_grad = None;
        for l in (0..self.num_layers()).rev() {
            let w = &self.params[2 * l];
            let (out, fan_in) = (w.shape()[0], w.shape()[1]);
            let a = &cache.inputs[l];

            gemm(
                Layout::TN,
                out,
                batch,
                fan_in,
                1.0,
                delta.data(),
                a.data(),
                0.0,
                grads.tensors[2 * l].data_mut(),
            );
            let db = grads.tensors[2 * l + 1].data_mut();
            for i in 0..batch {
                for (acc, d) in db.iter_mut().zip(delta.row(i)) {
                    *acc += d;
                }
            }

            if l == 0 && !want_input {
                break;
            }
            let mut prev = Tensor::zeros(&[batch, fan_in]);
            gemm(
                Layout::NN,
                batch,
                out,
                fan_in,
                1.0,
                delta.data(),
                w.data(),
                0.0,
                prev.data_mut(),
            );
            if l > 0 {
                // `a` holds post-ReLU activations: zero exactly where the unit was off.
                for (g, &act) in prev.data_mut().iter_mut().zip(a.data()) {
                    if act <= 0.0 {
                        *g = 0.0;
                    }
                }
                delta = prev;
            } else {
                input_grad = Some(prev);
            }
        }
        Ok((grads, input_grad))
    }

    const MAGIC: &'static [u8; 4] = b"SATM";
    const VERSION: u32 = 1;

    /// Writes the architecture and all parameters as little-endian values.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&(self.spec.input_dim as u64).to_le_bytes())?;
        w.write_all(&(self.spec.num_classes as u64).to_le_bytes())?;
        w.write_all(&[u8::from(self.spec.abstain)])?;
        w.write_all(&(self.spec.hidden_widths.len() as u64).to_le_bytes())?;
        for &h in &self.spec.hidden_widths {
            w.write_all(&(h as u64).to_le_bytes())?;
        }
        for p in &self.params {
            for v in p.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = crate::data::ByteReader::new(r);
        let magic = r.bytes(4)?;
        if magic != Self::MAGIC {
            return Err(Error::format(0, "model snapshot magic mismatch"));
        }
        let version = r.u32_le()?;
        if version != Self::VERSION {
            return Err(Error::format(4, format!("unsupported model version {version}")));
        }
        let input_dim = r.u64_le()? as usize;
        let num_classes = r.u64_le()? as usize;
        let abstain = r.bytes(1)?[0] != 0;
        let depth = r.u64_le()? as usize;
        let mut hidden = Vec::with_capacity(depth);
        for _ in 0..depth {
            hidden.push(r.u64_le()? as usize);
        }
        let mut spec = MlpSpec::new(input_dim, hidden, num_classes);
        spec.abstain = abstain;
        let mut model = Mlp::zeros(spec)?;
        for p in model.params.iter_mut() {
            for v in p.data_mut() {
                *v = r.f64_le()?;
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_gives_zero_logits() {
        let m = Mlp::zeros(MlpSpec::new(3, vec![4], 2)).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let z = m.forward(&x).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_on_basis_vector_reads_weight_column() {
        let spec = MlpSpec::new(3, vec![], 2);
        let w = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let m = Mlp::from_params(spec, vec![w, Tensor::zeros(&[2])]).unwrap();
        for k in 0..3 {
            let mut e = vec![0.0; 3];
            e[k] = 1.0;
            let z = m.forward(&Tensor::from_rows(&[e]).unwrap()).unwrap();
            assert_eq!(z.data(), &[(k + 1) as f64, (k + 4) as f64]);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let m = Mlp::new(MlpSpec::new(5, vec![7, 6], 3), 11).unwrap();
        let x = Tensor::from_vec(&[4, 5], (0..20).map(|v| (v as f64).cos()).collect()).unwrap();
        let a = m.forward(&x).unwrap();
        let b = m.forward(&x).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(m, Mlp::new(MlpSpec::new(5, vec![7, 6], 3), 11).unwrap());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = Mlp::zeros(MlpSpec::new(3, vec![2], 2)).unwrap();
        let x = Tensor::zeros(&[1, 4]);
        assert!(matches!(m.forward(&x), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(0, vec![], 2).validate().is_err());
        assert!(MlpSpec::new(2, vec![0], 2).validate().is_err());
        assert!(MlpSpec::new(2, vec![], 1).validate().is_err());
        assert_eq!(MlpSpec::new(2, vec![], 3).with_abstention().output_dim(), 4);
    }

    #[test]
    fn snapshot_round_trip() {
        let m = Mlp::new(MlpSpec::new(4, vec![3], 2).with_abstention(), 5).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(Mlp::read_from(buf.as_slice()).unwrap(), m);
        buf[0] = b'X';
        assert!(matches!(Mlp::read_from(buf.as_slice()), Err(Error::Format { .. })));
    }
}
