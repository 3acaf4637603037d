use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::{Error, Result};

/// Half-width of the uniform initialization interval for weight matrices.
pub const INIT_SCALE: f64 = 0.08;

/// Sizes of the encoder-decoder. The attention layer uses `hidden_dim` units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelDims {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl ModelDims {
    pub fn new(src_vocab: usize, tgt_vocab: usize, embed_dim: usize, hidden_dim: usize) -> Result<ModelDims> {
        let d = ModelDims {
            src_vocab,
            tgt_vocab,
            embed_dim,
            hidden_dim,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.src_vocab == 0 || self.tgt_vocab == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Width of a bidirectional annotation vector.
    pub fn annotation_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    /// Width of the decoder GRU input: previous embedding plus context.
    pub fn decoder_input_dim(&self) -> usize {
        self.embed_dim + self.annotation_dim()
    }

    /// Width of the output-layer input: state, context and previous embedding.
    pub fn readout_dim(&self) -> usize {
        self.hidden_dim + self.annotation_dim() + self.embed_dim
    }

    /// Every named tensor with its shape, in checkpoint order.
    pub fn tensor_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (e, h) = (self.embed_dim, self.hidden_dim);
        vec![
            ("src_embed", vec![self.src_vocab, e]),
            ("tgt_embed", vec![self.tgt_vocab, e]),
            ("enc_fwd.input", vec![3 * h, e]),
            ("enc_fwd.recurrent", vec![3 * h, h]),
            ("enc_fwd.bias", vec![3 * h]),
            ("enc_bwd.input", vec![3 * h, e]),
            ("enc_bwd.recurrent", vec![3 * h, h]),
            ("enc_bwd.bias", vec![3 * h]),
            ("dec.input", vec![3 * h, self.decoder_input_dim()]),
            ("dec.recurrent", vec![3 * h, h]),
            ("dec.bias", vec![3 * h]),
            ("att.state", vec![h, h]),
            ("att.annotation", vec![h, self.annotation_dim()]),
            ("att.score", vec![h]),
            ("init.weight", vec![h, h]),
            ("init.bias", vec![h]),
            ("out.weight", vec![self.tgt_vocab, self.readout_dim()]),
            ("out.bias", vec![self.tgt_vocab]),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensor_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Dense row-major tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Data(format!(
                "tensor shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let cols = self.shape[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }
}

/// Weights of one GRU layer; gate blocks are stacked update, reset, candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub input: Tensor,
    pub recurrent: Tensor,
    pub bias: Tensor,
}

/// All parameters of the attention encoder-decoder.
///
/// The same type holds gradients during training.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: ModelDims,
    pub src_embed: Tensor,
    pub tgt_embed: Tensor,
    pub enc_fwd: GruParams,
    pub enc_bwd: GruParams,
    pub dec: GruParams,
    /// `W_a`, applied to the previous decoder state.
    pub att_state: Tensor,
    /// `U_a`, applied to each annotation.
    pub att_annotation: Tensor,
    /// `v_a`, the scoring vector.
    pub att_score: Tensor,
    pub init_weight: Tensor,
    pub init_bias: Tensor,
    pub out_weight: Tensor,
    pub out_bias: Tensor,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> ModelParams {
        let shapes = dims.tensor_shapes();
        let mut it = shapes.iter().map(|(_, s)| Tensor::zeros(s));
        let mut next = || it.next().expect("tensor count");
        ModelParams {
            dims,
            src_embed: next(),
            tgt_embed: next(),
            enc_fwd: GruParams {
                input: next(),
                recurrent: next(),
                bias: next(),
            },
            enc_bwd: GruParams {
                input: next(),
                recurrent: next(),
                bias: next(),
            },
            dec: GruParams {
                input: next(),
                recurrent: next(),
                bias: next(),
            },
            att_state: next(),
            att_annotation: next(),
            att_score: next(),
            init_weight: next(),
            init_bias: next(),
            out_weight: next(),
            out_bias: next(),
        }
    }

    /// Weights drawn from uniform(-0.08, 0.08) in checkpoint order; biases zero.
    pub fn init(dims: ModelDims, seed: u64) -> ModelParams {
        let mut params = ModelParams::zeros(dims);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for (name, t) in params.tensors_mut() {
            if is_bias(name) {
                continue;
            }
            for x in t.data_mut() {
                *x = rng.gen_range(-INIT_SCALE..INIT_SCALE);
            }
        }
        params
    }

    /// Builds parameters from named tensors in checkpoint order.
    pub fn from_tensors(dims: ModelDims, tensors: Vec<(String, Tensor)>) -> Result<ModelParams> {
        let mut params = ModelParams::zeros(dims);
        let expected = dims.tensor_shapes();
        if tensors.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((slot_name, slot), (name, t)) in params.tensors_mut().into_iter().zip(tensors) {
            if slot_name != name {
                return Err(Error::Checkpoint(format!("expected tensor `{slot_name}`, found `{name}`")));
            }
            if slot.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model dims require {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(params)
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 18] {
        [
            ("src_embed", &self.src_embed),
            ("tgt_embed", &self.tgt_embed),
            ("enc_fwd.input", &self.enc_fwd.input),
            ("enc_fwd.recurrent", &self.enc_fwd.recurrent),
            ("enc_fwd.bias", &self.enc_fwd.bias),
            ("enc_bwd.input", &self.enc_bwd.input),
            ("enc_bwd.recurrent", &self.enc_bwd.recurrent),
            ("enc_bwd.bias", &self.enc_bwd.bias),
            ("dec.input", &self.dec.input),
            ("dec.recurrent", &self.dec.recurrent),
            ("dec.bias", &self.dec.bias),
            ("att.state", &self.att_state),
            ("att.annotation", &self.att_annotation),
            ("att.score", &self.att_score),
            ("init.weight", &self.init_weight),
            ("init.bias", &self.init_bias),
            ("out.weight", &self.out_weight),
            ("out.bias", &self.out_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 18] {
        [
            ("src_embed", &mut self.src_embed),
            ("tgt_embed", &mut self.tgt_embed),
            ("enc_fwd.input", &mut self.enc_fwd.input),
            ("enc_fwd.recurrent", &mut self.enc_fwd.recurrent),
            ("enc_fwd.bias", &mut self.enc_fwd.bias),
            ("enc_bwd.input", &mut self.enc_bwd.input),
            ("enc_bwd.recurrent", &mut self.enc_bwd.recurrent),
            ("enc_bwd.bias", &mut self.enc_bwd.bias),
            ("dec.input", &mut self.dec.input),
            ("dec.recurrent", &mut self.dec.recurrent),
            ("dec.bias", &mut self.dec.bias),
            ("att.state", &mut self.att_state),
            ("att.annotation", &mut self.att_annotation),
            ("att.score", &mut self.att_score),
            ("init.weight", &mut self.init_weight),
            ("init.bias", &mut self.init_bias),
            ("out.weight", &mut self.out_weight),
            ("out.bias", &mut self.out_bias),
        ]
    }

    pub fn fill(&mut self, value: f64) {
        for (_, t) in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.data().iter().any(|x| !x.is_finite()))
            .map(|(n, _)| n)
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self -= lr * grad`, tensor by tensor.
    pub fn sgd_step(&mut self, grad: &ModelParams, lr: f64) {
        for ((_, p), (_, g)) in self.tensors_mut().into_iter().zip(grad.tensors()) {
            for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                *x -= lr * d;
            }
        }
    }
}

pub(crate) fn is_bias(name: &str) -> bool {
    name.ends_with(".bias")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims::new(7, 9, 3, 4).unwrap()
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(ModelParams::init(dims(), 3), ModelParams::init(dims(), 3));
        assert_ne!(ModelParams::init(dims(), 3), ModelParams::init(dims(), 4));
    }

    #[test]
    fn init_ranges() {
        let p = ModelParams::init(dims(), 11);
        for (name, t) in p.tensors() {
            if is_bias(name) {
                assert!(t.data().iter().all(|&x| x == 0.0), "{name}");
            } else {
                assert!(t.data().iter().all(|&x| x > -INIT_SCALE && x < INIT_SCALE), "{name}");
                assert!(t.data().iter().any(|&x| x != 0.0), "{name}");
            }
        }
    }

    #[test]
    fn shapes_follow_dims() {
        let d = dims();
        let p = ModelParams::zeros(d);
        for ((n, t), (sn, s)) in p.tensors().iter().zip(d.tensor_shapes()) {
            assert_eq!(*n, sn);
            assert_eq!(t.shape(), &s[..]);
        }
        assert_eq!(p.out_weight.shape(), &[9, 4 + 8 + 3]);
        assert!(ModelDims::new(0, 1, 1, 1).is_err());
    }
}
