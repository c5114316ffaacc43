//! The descriptor feature map `φ`: an optional subset of the raw
//! descriptor dimensions, optionally min–max scaled with the generation
//! ranges (never with statistics of observed tasks).

use lll_core::environments::{Domain, GenerationConfig};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::{DescriptorOptions, Scaling};
use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorMap {
    /// Length of the raw descriptor.
    pub raw_dim: usize,
    /// Raw dimensions kept, in order.
    pub indices: Vec<usize>,
    /// `(low, high)` per kept dimension when scaling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl DescriptorMap {
    pub fn identity(raw_dim: usize) -> Self {
        DescriptorMap {
            raw_dim,
            indices: (0..raw_dim).collect(),
            bounds: None,
        }
    }

    pub fn resolve(
        domain: Domain,
        opts: &DescriptorOptions,
        generation: &GenerationConfig,
    ) -> HarnessResult<Self> {
        let raw_dim = domain.descriptor_dim(&generation.synth2);
        let indices: Vec<usize> = match &opts.mask {
            Some(mask) => {
                if mask.len() != raw_dim {
                    return Err(HarnessError::Config(format!(
                        "descriptor mask has length {} but the domain has {raw_dim} descriptors",
                        mask.len()
                    )));
                }
                mask.iter().enumerate().filter(|(_, k)| **k).map(|(i, _)| i).collect()
            }
            None => (0..raw_dim).collect(),
        };
        if indices.is_empty() {
            return Err(HarnessError::Config("descriptor mask keeps nothing".into()));
        }
        let bounds = match opts.scaling {
            Scaling::None => None,
            Scaling::MinMax => {
                let all = generation.descriptor_bounds(domain)?.ok_or_else(|| {
                    HarnessError::Config(format!("domain {domain} has no descriptor ranges to scale by"))
                })?;
                Some(indices.iter().map(|&i| all[i]).collect())
            }
        };
        Ok(DescriptorMap { raw_dim, indices, bounds })
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn apply(&self, raw: &DVector<f64>) -> HarnessResult<DVector<f64>> {
        if raw.len() != self.raw_dim {
            return Err(lll_core::Error::DimensionMismatch {
                context: "raw descriptor",
                expected: self.raw_dim,
                found: raw.len(),
            }
            .into());
        }
        Ok(DVector::from_iterator(
            self.indices.len(),
            self.indices.iter().enumerate().map(|(j, &i)| match &self.bounds {
                Some(b) if b[j].1 > b[j].0 => (raw[i] - b[j].0) / (b[j].1 - b[j].0),
                _ => raw[i],
            }),
        ))
    }
}
