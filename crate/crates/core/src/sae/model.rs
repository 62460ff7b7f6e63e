use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{reconstruct_peak, Corruption, SaeSpec, SaeTraining};
use crate::curves::{CorruptionMask, DailyCurve, NormalizationContext};
use crate::error::{Error, Result};
use crate::nn::{Loss, Network};

pub const MODEL_FORMAT: &str = "peakshave-sae/1";

/// A trained network plus everything needed to apply and reproduce it.
/// Stored as JSON; floats use shortest round-trip formatting, so a saved
/// model reloads bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaeModel {
    pub format: String,
    pub spec: SaeSpec,
    pub network: Network,
    pub mask: CorruptionMask,
    pub normalization: NormalizationContext,
    pub loss: Loss,
    pub training: SaeTraining,
    /// Input protocol used during fine-tuning.
    #[serde(default)]
    pub corruption: Corruption,
}

impl SaeModel {
    pub fn new(
        spec: SaeSpec,
        network: Network,
        mask: CorruptionMask,
        normalization: NormalizationContext,
        loss: Loss,
        training: SaeTraining,
    ) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            spec,
            network,
            mask,
            normalization,
            loss,
            training,
            corruption: Corruption::Fixed,
        }
    }

    pub fn with_corruption(mut self, corruption: Corruption) -> Self {
        self.corruption = corruption;
        self
    }

    pub fn save(&self, out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn load(input: impl Read) -> Result<Self> {
        let model: SaeModel = serde_json::from_reader(input)?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Parse(format!("unsupported model format {:?}", model.format)));
        }
        model.spec.validate()?;
        if model.network.sizes() != model.spec.layer_sizes {
            return Err(Error::Parse("network shape does not match its spec".into()));
        }
        // re-check finiteness and shapes through the validating constructors
        let layers = model
            .network
            .layers()
            .iter()
            .map(|l| {
                crate::nn::DenseLayer::new(l.inputs(), l.outputs(), l.weights().to_vec(), l.bias().to_vec(), l.activation())
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers)?;
        Ok(model)
    }

    /// Reconstruction with the training mask geometry; `mask_value` is
    /// always the trained one.
    pub fn forecast(&self, observed: &DailyCurve, mask: Option<&CorruptionMask>) -> Result<DailyCurve> {
        let mask = match mask {
            Some(m) => m.with_mask_value(self.mask.mask_value()),
            None => self.mask.clone(),
        };
        reconstruct_peak(&self.network, observed, &mask, &self.normalization)
    }
}
