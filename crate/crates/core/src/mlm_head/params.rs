use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::datastore::{read_bundle, write_bundle, Tensor, TensorBundle};
use crate::error::{Error, Result};

pub const TRANSFORM_WEIGHT: &str = "transform.weight";
pub const TRANSFORM_BIAS: &str = "transform.bias";
pub const LAYERNORM_GAMMA: &str = "layernorm.gamma";
pub const LAYERNORM_BETA: &str = "layernorm.beta";
pub const DECODER_WEIGHT: &str = "decoder.weight";
pub const DECODER_BIAS: &str = "decoder.bias";

pub const DEFAULT_LAYERNORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Exact erf-based GELU.
    Gelu,
    Identity,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Gelu => "gelu",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gelu" => Ok(Activation::Gelu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::validation(format!(
                "activation must be `gelu` or `identity`, got `{other}`"
            ))),
        }
    }
}

/// Parameters of a pretrained masked-language-model output head:
/// a dense transform, an activation, layer normalization, then a projection
/// onto the static token embeddings.
///
/// Matrices are row-major. `transform_weight[i * dim + j]` maps input `j` to
/// output `i`; `decoder_weight` row `t` is the static embedding of token `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmHeadParams {
    pub(crate) dim: usize,
    pub(crate) vocab_size: usize,
    pub(crate) transform_weight: Vec<f32>,
    pub(crate) transform_bias: Vec<f32>,
    pub(crate) gamma: Vec<f32>,
    pub(crate) beta: Vec<f32>,
    pub(crate) eps: f64,
    pub(crate) activation: Activation,
    pub(crate) decoder_weight: Vec<f32>,
    pub(crate) decoder_bias: Vec<f32>,
}

pub struct MlmHeadBuilder {
    pub transform_weight: Vec<f32>,
    pub transform_bias: Vec<f32>,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub eps: f64,
    pub activation: Activation,
    pub decoder_weight: Vec<f32>,
    /// Defaults to zeros when absent.
    pub decoder_bias: Option<Vec<f32>>,
}

impl MlmHeadBuilder {
    pub fn build(self) -> Result<MlmHeadParams> {
        MlmHeadParams::from_parts(self)
    }
}

impl MlmHeadParams {
    fn from_parts(b: MlmHeadBuilder) -> Result<Self> {
        let dim = b.transform_bias.len();
        if dim == 0 {
            return Err(Error::validation("head dimension must be at least 1"));
        }
        let check = |name: &str, got: usize, expected: usize| -> Result<()> {
            if got != expected {
                Err(Error::validation(format!(
                    "{name}: expected {expected} values, got {got}"
                )))
            } else {
                Ok(())
            }
        };
        check(TRANSFORM_WEIGHT, b.transform_weight.len(), dim * dim)?;
        check(LAYERNORM_GAMMA, b.gamma.len(), dim)?;
        check(LAYERNORM_BETA, b.beta.len(), dim)?;
        if !b.decoder_weight.len().is_multiple_of(dim) {
            return Err(Error::validation(format!(
                "{DECODER_WEIGHT}: {} values is not a multiple of dim {dim}",
                b.decoder_weight.len()
            )));
        }
        let vocab_size = b.decoder_weight.len() / dim;
        if vocab_size < 2 {
            return Err(Error::validation("vocabulary must have at least 2 tokens"));
        }
        let decoder_bias = b.decoder_bias.unwrap_or_else(|| vec![0.0; vocab_size]);
        check(DECODER_BIAS, decoder_bias.len(), vocab_size)?;
        if !(b.eps > 0.0 && b.eps.is_finite()) {
            return Err(Error::validation(format!(
                "layernorm eps must be positive, got {}",
                b.eps
            )));
        }
        for (name, values) in [
            (TRANSFORM_WEIGHT, &b.transform_weight),
            (TRANSFORM_BIAS, &b.transform_bias),
            (LAYERNORM_GAMMA, &b.gamma),
            (LAYERNORM_BETA, &b.beta),
            (DECODER_WEIGHT, &b.decoder_weight),
            (DECODER_BIAS, &decoder_bias),
        ] {
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "{name}: non-finite value at element {i}"
                )));
            }
        }
        Ok(MlmHeadParams {
            dim,
            vocab_size,
            transform_weight: b.transform_weight,
            transform_bias: b.transform_bias,
            gamma: b.gamma,
            beta: b.beta,
            eps: b.eps,
            activation: b.activation,
            decoder_weight: b.decoder_weight,
            decoder_bias,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Static output embedding of `token`.
    pub fn token_embedding(&self, token: usize) -> &[f32] {
        &self.decoder_weight[token * self.dim..(token + 1) * self.dim]
    }

    pub fn decoder_bias(&self) -> &[f32] {
        &self.decoder_bias
    }

    /// Copy with every output bias shifted by `c`.
    pub fn with_bias_shift(&self, c: f32) -> Self {
        let mut p = self.clone();
        p.decoder_bias.iter_mut().for_each(|b| *b += c);
        p
    }

    pub fn from_bundle(bundle: &TensorBundle) -> Result<Self> {
        let activation: Activation = bundle.meta("activation").unwrap_or("gelu").parse()?;
        let eps = match bundle.meta("eps") {
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| Error::validation(format!("bad eps metadata `{s}`")))?,
            None => DEFAULT_LAYERNORM_EPS,
        };
        let dim = bundle.get(TRANSFORM_BIAS)?.data.len();
        let w = bundle.get(TRANSFORM_WEIGHT)?;
        if w.shape != [dim, dim] {
            return Err(Error::validation(format!(
                "{TRANSFORM_WEIGHT}: shape {:?}, expected [{dim}, {dim}]",
                w.shape
            )));
        }
        let v = bundle.get(DECODER_WEIGHT)?;
        match v.matrix_dims() {
            Some((_, cols)) if cols == dim => {}
            _ => {
                return Err(Error::validation(format!(
                    "{DECODER_WEIGHT}: shape {:?}, expected [vocab, {dim}]",
                    v.shape
                )))
            }
        }
        MlmHeadBuilder {
            transform_weight: w.data.clone(),
            transform_bias: bundle.get(TRANSFORM_BIAS)?.data.clone(),
            gamma: bundle.get(LAYERNORM_GAMMA)?.data.clone(),
            beta: bundle.get(LAYERNORM_BETA)?.data.clone(),
            eps,
            activation,
            decoder_weight: v.data.clone(),
            decoder_bias: bundle.tensors.get(DECODER_BIAS).map(|t| t.data.clone()),
        }
        .build()
    }

    pub fn to_bundle(&self) -> TensorBundle {
        let d = self.dim;
        let mut b = TensorBundle::new();
        b.insert(TRANSFORM_WEIGHT, Tensor::new(vec![d, d], self.transform_weight.clone()))
            .insert(TRANSFORM_BIAS, Tensor::vector(self.transform_bias.clone()))
            .insert(LAYERNORM_GAMMA, Tensor::vector(self.gamma.clone()))
            .insert(LAYERNORM_BETA, Tensor::vector(self.beta.clone()))
            .insert(
                DECODER_WEIGHT,
                Tensor::new(vec![self.vocab_size, d], self.decoder_weight.clone()),
            )
            .insert(DECODER_BIAS, Tensor::vector(self.decoder_bias.clone()));
        b.set_meta("activation", self.activation.to_string())
            .set_meta("eps", format!("{:e}", self.eps))
            .set_meta("kind", "mlm-head");
        b
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bundle = read_bundle(path)?;
        Self::from_bundle(&bundle).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bundle(&self.to_bundle(), path)
    }

    /// SHA-256 over every parameter, for provenance records.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update((self.vocab_size as u64).to_le_bytes());
        h.update(self.activation.to_string().as_bytes());
        h.update(self.eps.to_le_bytes());
        for values in [
            &self.transform_weight,
            &self.transform_bias,
            &self.gamma,
            &self.beta,
            &self.decoder_weight,
            &self.decoder_bias,
        ] {
            for v in values {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> MlmHeadBuilder {
        MlmHeadBuilder {
            transform_weight: vec![1.0, 0.0, 0.0, 1.0],
            transform_bias: vec![0.0, 0.0],
            gamma: vec![1.0, 1.0],
            beta: vec![0.0, 0.0],
            eps: 1e-12,
            activation: Activation::Gelu,
            decoder_weight: vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
            decoder_bias: None,
        }
    }

    #[test]
    fn bias_defaults_to_zero() {
        let p = tiny().build().unwrap();
        assert_eq!(p.vocab_size(), 3);
        assert_eq!(p.decoder_bias(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_invalid_parameters() {
        let mut b = tiny();
        b.eps = 0.0;
        assert!(b.build().is_err());

        let mut b = tiny();
        b.decoder_weight = vec![1.0, 0.0];
        assert!(b.build().unwrap_err().to_string().contains("at least 2"));

        let mut b = tiny();
        b.gamma[1] = f32::INFINITY;
        assert!(b.build().unwrap_err().to_string().contains(LAYERNORM_GAMMA));
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = tiny().build().unwrap();
        p.save(dir.path().join("head")).unwrap();
        let back = MlmHeadParams::load(dir.path().join("head")).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.checksum(), p.checksum());
    }
}
