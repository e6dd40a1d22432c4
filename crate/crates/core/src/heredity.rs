//! Cluster-driven genetic encoding of a trained parent network.
//!
//! For every parametric layer the encoding holds two probability tables:
//!
//! - cluster level: `P(cluster c) = exp(Σ_{i∈c} trunc(w_i) / Z − 1)`
//! - synapse level: `P(synapse i) = exp(|w_i| / z − 1)`
//!
//! `trunc` zeroes magnitudes below a threshold `tau` so weak synapses do not
//! prop up a cluster. `Z` and `z` are per-layer maxima over live clusters and
//! live synapses, so the strongest of each gets probability exactly 1.
//! Synapses pruned in the parent, and clusters with no live synapse, get
//! probability 0: pruned lineages never come back.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterPartition, LayerPartition, NetworkArch};

/// How the truncation threshold is chosen per layer.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauPolicy {
    /// Median magnitude of the layer's live synapses.
    #[default]
    Median,
    /// Nearest-rank quantile in `[0, 1]` of live magnitudes.
    Quantile(f64),
    /// The same absolute threshold for every layer.
    Fixed(f64),
}

impl TauPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TauPolicy::Median => Ok(()),
            TauPolicy::Quantile(q) if (0.0..=1.0).contains(&q) => Ok(()),
            TauPolicy::Fixed(t) if t >= 0.0 && t.is_finite() => Ok(()),
            other => Err(Error::Config(format!("invalid tau policy {other:?}"))),
        }
    }

    /// Threshold for a layer whose live magnitudes are `sorted` ascending.
    fn threshold(&self, sorted: &[f64]) -> f64 {
        let quantile = |q: f64| {
            let n = sorted.len();
            let rank = (q * n as f64).ceil() as usize;
            sorted[rank.clamp(1, n) - 1]
        };
        match *self {
            TauPolicy::Median => quantile(0.5),
            TauPolicy::Quantile(q) => quantile(q),
            TauPolicy::Fixed(t) => t,
        }
    }
}

/// `|w|` if `|w| >= tau`, else 0.
pub fn truncate_weight(w: f64, tau: f64) -> f64 {
    let m = w.abs();
    if m >= tau {
        m
    } else {
        0.0
    }
}

fn check_normalizer(op: &'static str, norm: f64) -> Result<()> {
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidArgument {
            op,
            msg: format!("normalizer must be positive and finite, got {norm}"),
        });
    }
    Ok(())
}

/// `exp(sum / Z − 1)` for a non-negative truncated cluster sum `sum <= Z`.
pub fn cluster_synthesis_prob(sum: f64, norm: f64) -> Result<f64> {
    check_normalizer("cluster_synthesis_prob", norm)?;
    if !(sum >= 0.0) {
        return Err(Error::InvalidArgument {
            op: "cluster_synthesis_prob",
            msg: format!("truncated sum must be non-negative, got {sum}"),
        });
    }
    if sum > norm {
        return Err(Error::NormalizerExceeded {
            what: "cluster sum",
            value: sum,
            normalizer: norm,
        });
    }
    Ok((sum / norm - 1.0).exp())
}

/// `exp(|w| / z − 1)` for `|w| <= z`.
pub fn synapse_synthesis_prob(w: f64, norm: f64) -> Result<f64> {
    check_normalizer("synapse_synthesis_prob", norm)?;
    let m = w.abs();
    if m > norm {
        return Err(Error::NormalizerExceeded {
            what: "synapse magnitude",
            value: m,
            normalizer: norm,
        });
    }
    Ok((m / norm - 1.0).exp())
}

/// Encoded heredity of one parametric layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDna {
    pub name: String,
    pub shape: Vec<usize>,
    /// Z: largest truncated cluster sum among live clusters.
    pub cluster_norm: f64,
    /// z: largest live synapse magnitude.
    pub synapse_norm: f64,
    pub tau: f64,
    pub cluster_prob: Vec<f64>,
    /// Flat, row-major over `shape`.
    pub synapse_prob: Vec<f64>,
    /// Cluster id of every synapse.
    pub partition: LayerPartition,
}

impl LayerDna {
    /// Assembles a layer directly from probability tables (used for
    /// synthetic fixtures). Normalizers are recorded as 1 and tau as 0.
    pub fn from_probabilities(
        name: impl Into<String>,
        cluster_prob: Vec<f64>,
        synapse_prob: Vec<f64>,
        partition: LayerPartition,
    ) -> Result<Self> {
        const OP: &str = "LayerDna::from_probabilities";
        if cluster_prob.len() != partition.cluster_count() {
            return Err(Error::shape(OP, "cluster count", partition.cluster_count(), cluster_prob.len()));
        }
        if synapse_prob.len() != partition.synapse_count() {
            return Err(Error::shape(OP, "synapse count", partition.synapse_count(), synapse_prob.len()));
        }
        if let Some(bad) = cluster_prob.iter().chain(&synapse_prob).find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument {
                op: OP,
                msg: format!("probability {bad} outside [0,1]"),
            });
        }
        Ok(LayerDna {
            name: name.into(),
            shape: vec![synapse_prob.len()],
            cluster_norm: 1.0,
            synapse_norm: 1.0,
            tau: 0.0,
            cluster_prob,
            synapse_prob,
            partition,
        })
    }

    /// Synapses present in the parent (non-zero synapse probability).
    pub fn live_synapses(&self) -> usize {
        self.synapse_prob.iter().filter(|&&p| p > 0.0).count()
    }

    pub fn live_clusters(&self) -> usize {
        self.cluster_prob.iter().filter(|&&p| p > 0.0).count()
    }
}

/// The probabilistic "DNA" of a network: one [`LayerDna`] per parametric layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnaModel {
    pub layers: Vec<LayerDna>,
}

impl DnaModel {
    pub fn live_synapses(&self) -> Vec<usize> {
        self.layers.iter().map(LayerDna::live_synapses).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("DnaModel serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("dna model: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn encode_layer(layer: usize, net: &NetworkArch, partition: &LayerPartition, tau: TauPolicy) -> Result<LayerDna> {
    let p = &net.params()[layer];
    let w = p.weights.data();
    let m = p.mask.data();
    if partition.synapse_count() != w.len() {
        return Err(Error::shape("encode_dna", format!("{} partition size", p.name), w.len(), partition.synapse_count()));
    }

    let mut live: Vec<f64> = w.iter().zip(m).filter(|(_, &mv)| mv != 0.0).map(|(wv, _)| wv.abs()).collect();
    if live.is_empty() {
        return Err(Error::DegenerateNormalizer {
            layer,
            msg: format!("{} has no live synapses", p.name),
        });
    }
    let synapse_norm = live.iter().copied().fold(0.0, f64::max);
    if synapse_norm == 0.0 {
        return Err(Error::DegenerateNormalizer {
            layer,
            msg: format!("{} has all-zero live weights", p.name),
        });
    }
    live.sort_by(f64::total_cmp);
    let tau = tau.threshold(&live);

    let sums: Vec<Option<f64>> = partition
        .clusters()
        .map(|members| {
            let mut alive = false;
            let mut sum = 0.0;
            for &i in members {
                if m[i] != 0.0 {
                    alive = true;
                    sum += truncate_weight(w[i], tau);
                }
            }
            alive.then_some(sum)
        })
        .collect();
    let cluster_norm = sums.iter().flatten().copied().fold(0.0, f64::max);
    if cluster_norm == 0.0 {
        return Err(Error::DegenerateNormalizer {
            layer,
            msg: format!("{}: every live weight is below tau = {tau}", p.name),
        });
    }

    let cluster_prob = sums
        .iter()
        .map(|s| s.map_or(Ok(0.0), |s| cluster_synthesis_prob(s, cluster_norm)))
        .collect::<Result<Vec<_>>>()?;
    let synapse_prob = w
        .iter()
        .zip(m)
        .map(|(&wv, &mv)| if mv != 0.0 { synapse_synthesis_prob(wv, synapse_norm) } else { Ok(0.0) })
        .collect::<Result<Vec<_>>>()?;

    Ok(LayerDna {
        name: p.name.clone(),
        shape: p.weights.shape().to_vec(),
        cluster_norm,
        synapse_norm,
        tau,
        cluster_prob,
        synapse_prob,
        partition: partition.clone(),
    })
}

/// Encodes a trained parent into its cluster/synapse probability model.
pub fn encode_dna(net: &NetworkArch, partition: &ClusterPartition, tau: TauPolicy) -> Result<DnaModel> {
    tau.validate()?;
    if partition.layers.len() != net.params().len() {
        return Err(Error::shape("encode_dna", "partition layer count", net.params().len(), partition.layers.len()));
    }
    let layers = partition
        .layers
        .iter()
        .enumerate()
        .map(|(l, lp)| encode_layer(l, net, lp, tau))
        .collect::<Result<Vec<_>>>()?;
    Ok(DnaModel { layers })
}
