use std::path::Path;

use super::fit::{EnrichmentTable, OptimizerConfig};
use super::model::FittedEnrichments;
use super::whitening::WhiteningParams;
use crate::datastore::{read_bundle, write_bundle, Tensor, TensorBundle};
use crate::error::{Error, Result};

const S_TABLE: &str = "s_table";
const CONVERGED: &str = "converged";
const LOSSES: &str = "losses";
const WHITEN_MEAN: &str = "whiten.mean";
const WHITEN_TRANSFORM: &str = "whiten.transform";

/// Provenance stored next to the tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct FitProvenance {
    pub optimizer: OptimizerConfig,
    pub head_sha256: String,
}

impl FittedEnrichments {
    pub fn to_bundle(&self, provenance: &FitProvenance) -> TensorBundle {
        let t = &self.table;
        let (n, d) = (t.vocab_size(), t.dim());
        let mut b = TensorBundle::default();
        b.insert(S_TABLE, Tensor::new(vec![n, d], t.rows().to_vec()))
            .insert(
                CONVERGED,
                Tensor::vector(t.converged().iter().map(|&c| if c { 1.0 } else { 0.0 }).collect()),
            )
            .insert(LOSSES, Tensor::vector(t.losses().iter().map(|&l| l as f32).collect()))
            .insert(WHITEN_MEAN, Tensor::vector(self.whitening.mean().to_vec()))
            .insert(
                WHITEN_TRANSFORM,
                Tensor::new(vec![d, d], self.whitening.transform().to_vec()),
            )
            .set_meta("kind", "enrichment")
            .set_meta(
                "optimizer",
                serde_json::to_string(&provenance.optimizer).expect("config serializes"),
            )
            .set_meta("head_sha256", provenance.head_sha256.clone());
        b
    }

    pub fn from_bundle(bundle: &TensorBundle) -> Result<(Self, Option<FitProvenance>)> {
        let s = bundle.get(S_TABLE)?;
        let (n, d) = s
            .matrix_dims()
            .ok_or_else(|| Error::validation("s_table must be a matrix"))?;
        let converged: Vec<bool> = bundle.get(CONVERGED)?.data.iter().map(|&c| c != 0.0).collect();
        let losses: Vec<f64> = bundle.get(LOSSES)?.data.iter().map(|&l| l as f64).collect();
        if converged.len() != n {
            return Err(Error::validation(format!(
                "converged has {} entries for {n} rows",
                converged.len()
            )));
        }
        let table = EnrichmentTable::from_parts(d, s.data.clone(), converged, losses)?;
        let whitening = WhiteningParams::from_parts(
            d,
            bundle.get(WHITEN_MEAN)?.data.clone(),
            bundle.get(WHITEN_TRANSFORM)?.data.clone(),
        )?;
        let provenance = match (bundle.meta("optimizer"), bundle.meta("head_sha256")) {
            (Some(cfg), Some(sha)) => Some(FitProvenance {
                optimizer: serde_json::from_str(cfg)
                    .map_err(|e| Error::validation(format!("bad optimizer metadata: {e}")))?,
                head_sha256: sha.to_string(),
            }),
            _ => None,
        };
        Ok((FittedEnrichments { table, whitening }, provenance))
    }

    pub fn save(&self, path: impl AsRef<Path>, provenance: &FitProvenance) -> Result<()> {
        write_bundle(&self.to_bundle(provenance), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Option<FitProvenance>)> {
        let path = path.as_ref();
        Self::from_bundle(&read_bundle(path)?)
            .map_err(|e| e.context(format!("reading enrichments from {}", path.display())))
    }
}
