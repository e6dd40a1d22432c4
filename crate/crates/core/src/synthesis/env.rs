use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heredity::{DnaModel, LayerDna};

/// Which factors of the probability model drive offspring synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    /// Cluster draw, then per-synapse draws inside surviving clusters.
    #[default]
    ClusterDriven,
    /// Per-synapse draws only; every cluster factor is taken as 1.
    SynapseOnly,
}

/// Environmental selection pressure applied on top of the inherited
/// probabilities, one cluster-level and one synapse-level scale per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFactors {
    /// Target offspring/parent synapse ratio, in `(0, 1]`.
    pub budget: f64,
    pub cluster_scale: Vec<f64>,
    pub synapse_scale: Vec<f64>,
    pub mode: EncodingMode,
    /// Layers whose clusters always survive the cluster draw (their cluster
    /// factor is 1 regardless of mode); typically the classifier, whose
    /// clusters are the class neurons.
    #[serde(default)]
    pub protected: Vec<bool>,
}

pub const CALIBRATION_MAX_ITERATIONS: usize = 200;
pub const CALIBRATION_REL_TOLERANCE: f64 = 1e-6;

impl EnvFactors {
    /// Unit scales for `layers` layers.
    pub fn new(budget: f64, mode: EncodingMode, layers: usize) -> Result<Self> {
        if !(budget > 0.0 && budget <= 1.0) {
            return Err(Error::Config(format!("budget must lie in (0, 1], got {budget}")));
        }
        Ok(EnvFactors {
            budget,
            cluster_scale: vec![1.0; layers],
            synapse_scale: vec![1.0; layers],
            mode,
            protected: vec![false; layers],
        })
    }

    /// Encoding mode in effect for one layer.
    pub fn layer_mode(&self, layer: usize) -> EncodingMode {
        if self.protected.get(layer).copied().unwrap_or(false) {
            EncodingMode::SynapseOnly
        } else {
            self.mode
        }
    }

    /// Effective cluster probability `min(1, scale · p)`; 1 in synapse-only
    /// mode and for protected layers.
    pub fn cluster_q(&self, layer: usize, p: f64) -> f64 {
        match self.layer_mode(layer) {
            EncodingMode::ClusterDriven => (self.cluster_scale[layer] * p).min(1.0),
            EncodingMode::SynapseOnly => 1.0,
        }
    }

    pub fn synapse_q(&self, layer: usize, p: f64) -> f64 {
        (self.synapse_scale[layer] * p).min(1.0)
    }

    pub(crate) fn check_layers(&self, dna: &DnaModel) -> Result<()> {
        let n = dna.layers.len();
        if self.cluster_scale.len() != n || self.synapse_scale.len() != n {
            return Err(Error::shape("EnvFactors", "layer count", n, self.cluster_scale.len().min(self.synapse_scale.len())));
        }
        if !self.protected.is_empty() && self.protected.len() != n {
            return Err(Error::shape("EnvFactors", "protected layer count", n, self.protected.len()));
        }
        Ok(())
    }
}

/// Mean and variance of one layer's offspring synapse count under the given
/// scales.
fn layer_moments(dna: &LayerDna, mode: EncodingMode, cluster_scale: f64, synapse_scale: f64) -> (f64, f64) {
    let mut mean = 0.0;
    let mut var = 0.0;
    for (c, members) in dna.partition.clusters().enumerate() {
        let qc = match mode {
            EncodingMode::ClusterDriven => (cluster_scale * dna.cluster_prob[c]).min(1.0),
            EncodingMode::SynapseOnly => 1.0,
        };
        if qc == 0.0 {
            continue;
        }
        let (mut mu, mut sigma2) = (0.0, 0.0);
        for &i in members {
            let q = (synapse_scale * dna.synapse_prob[i]).min(1.0);
            mu += q;
            sigma2 += q * (1.0 - q);
        }
        // count = B_c · S_c with B_c ~ Bernoulli(qc) independent of S_c
        mean += qc * mu;
        var += qc * (sigma2 + mu * mu) - (qc * mu).powi(2);
    }
    (mean, var.max(0.0))
}

/// Expected offspring synapse count of one layer.
pub fn expected_layer_count(dna: &DnaModel, env: &EnvFactors, layer: usize) -> f64 {
    layer_moments(&dna.layers[layer], env.layer_mode(layer), env.cluster_scale[layer], env.synapse_scale[layer]).0
}

/// Variance of one layer's offspring synapse count (clusters are independent;
/// within a surviving cluster synapses are independent).
pub fn layer_count_variance(dna: &DnaModel, env: &EnvFactors, layer: usize) -> f64 {
    layer_moments(&dna.layers[layer], env.layer_mode(layer), env.cluster_scale[layer], env.synapse_scale[layer]).1
}

/// `Σ_layers Σ_c q_c · Σ_{i∈c} q_i`.
pub fn expected_synapse_count(dna: &DnaModel, env: &EnvFactors) -> f64 {
    (0..dna.layers.len()).map(|l| expected_layer_count(dna, env, l)).sum()
}

/// Probability that cluster `c` keeps at least one synapse:
/// `q_c · (1 − Π_{i∈c} (1 − q_i))`.
pub fn cluster_survival_prob(dna: &DnaModel, env: &EnvFactors, layer: usize, cluster: usize) -> f64 {
    let ld = &dna.layers[layer];
    let qc = env.cluster_q(layer, ld.cluster_prob[cluster]);
    let all_dead: f64 = ld
        .partition
        .members(cluster)
        .iter()
        .map(|&i| 1.0 - env.synapse_q(layer, ld.synapse_prob[i]))
        .product();
    qc * (1.0 - all_dead)
}

/// Per layer, scales the inherited probabilities so that the expected
/// offspring count equals `budget × parent live count`.
///
/// A single multiplier `λ ∈ [0, 1]` is found by bisection and applied as
/// `cluster_scale = synapse_scale = √λ`. The returned `λ` keeps the
/// expectation at or below the target, within a relative gap of
/// [`CALIBRATION_REL_TOLERANCE`]. If the unscaled model already expects no
/// more than the target, both scales stay at 1: selection pressure never
/// raises a probability above its inherited value.
pub fn calibrate(dna: &DnaModel, env: &EnvFactors) -> Result<EnvFactors> {
    env.check_layers(dna)?;
    if !(env.budget > 0.0 && env.budget <= 1.0) {
        return Err(Error::Config(format!("budget must lie in (0, 1], got {}", env.budget)));
    }
    let parent = dna.live_synapses();
    if parent.iter().sum::<usize>() == 0 {
        return Err(Error::DegenerateNetwork("calibration needs at least one live parent synapse".into()));
    }

    let mut out = env.clone();
    for (l, ld) in dna.layers.iter().enumerate() {
        let target = env.budget * parent[l] as f64;
        let expect = |lambda: f64| {
            let s = lambda.sqrt();
            layer_moments(ld, env.layer_mode(l), s, s).0
        };
        let lambda = if expect(1.0) <= target {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut converged = false;
            for _ in 0..CALIBRATION_MAX_ITERATIONS {
                if target - expect(lo) <= CALIBRATION_REL_TOLERANCE * target {
                    converged = true;
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if expect(mid) <= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if !converged {
                return Err(Error::CalibrationDiverged {
                    layer: l,
                    iterations: CALIBRATION_MAX_ITERATIONS,
                });
            }
            lo
        };
        out.cluster_scale[l] = lambda.sqrt();
        out.synapse_scale[l] = lambda.sqrt();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerPartition;

    fn uniform_dna(clusters: usize, per: usize, p_c: f64, p_s: f64) -> DnaModel {
        let part = LayerPartition::from_assignment((0..clusters * per).map(|i| i / per).collect());
        let layer = LayerDna::from_probabilities("l0", vec![p_c; clusters], vec![p_s; clusters * per], part).unwrap();
        DnaModel { layers: vec![layer] }
    }

    #[test]
    fn unit_model_expects_parent_count() {
        let dna = uniform_dna(10, 100, 1.0, 1.0);
        let env = EnvFactors::new(0.8, EncodingMode::ClusterDriven, 1).unwrap();
        assert_eq!(expected_synapse_count(&dna, &env), 1000.0);
        assert_eq!(layer_count_variance(&dna, &env, 0), 0.0);
    }

    #[test]
    fn zero_cluster_scale_expects_nothing() {
        let dna = uniform_dna(4, 5, 0.7, 0.9);
        let mut env = EnvFactors::new(0.8, EncodingMode::ClusterDriven, 1).unwrap();
        env.cluster_scale[0] = 0.0;
        assert_eq!(expected_synapse_count(&dna, &env), 0.0);
    }

    #[test]
    fn calibrates_unit_model_to_budget() {
        let dna = uniform_dna(10, 100, 1.0, 1.0);
        let env = EnvFactors::new(0.8, EncodingMode::ClusterDriven, 1).unwrap();
        let cal = calibrate(&dna, &env).unwrap();
        let e = expected_synapse_count(&dna, &cal);
        assert!((e - 800.0).abs() <= 1e-3, "{e}");
        assert!(e <= 800.0);
    }

    #[test]
    fn full_budget_clamps_scales_at_one() {
        let dna = uniform_dna(6, 7, 0.6, 0.5);
        let env = EnvFactors::new(1.0, EncodingMode::ClusterDriven, 1).unwrap();
        let cal = calibrate(&dna, &env).unwrap();
        assert_eq!(cal.cluster_scale, vec![1.0]);
        assert_eq!(cal.synapse_scale, vec![1.0]);
        assert!(expected_synapse_count(&dna, &cal) <= 42.0);
    }

    #[test]
    fn two_generations_compose() {
        let dna = uniform_dna(10, 100, 1.0, 1.0);
        let env = EnvFactors::new(0.8, EncodingMode::ClusterDriven, 1).unwrap();
        let first = expected_synapse_count(&dna, &calibrate(&dna, &env).unwrap());
        // second parent keeps 800 synapses
        let dna2 = uniform_dna(8, 100, 1.0, 1.0);
        let second = expected_synapse_count(&dna2, &calibrate(&dna2, &env).unwrap());
        assert!(first <= 800.0 && second <= 640.0, "{first} {second}");
        assert!(second <= 0.64 * 1000.0);
    }

    #[test]
    fn synapse_only_mode_calibrates() {
        let dna = uniform_dna(5, 40, 0.4, 1.0);
        let env = EnvFactors::new(0.5, EncodingMode::SynapseOnly, 1).unwrap();
        let cal = calibrate(&dna, &env).unwrap();
        let e = expected_synapse_count(&dna, &cal);
        assert!(e <= 100.0 && e >= 100.0 * (1.0 - 1e-6), "{e}");
    }

    #[test]
    fn protected_layer_ignores_cluster_factor() {
        let dna = uniform_dna(4, 10, 0.5, 1.0);
        let mut env = EnvFactors::new(1.0, EncodingMode::ClusterDriven, 1).unwrap();
        assert_eq!(expected_synapse_count(&dna, &env), 20.0);
        env.protected = vec![true];
        assert_eq!(expected_synapse_count(&dna, &env), 40.0);
        assert_eq!(cluster_survival_prob(&dna, &env, 0, 0), 1.0);
    }

    #[test]
    fn rejects_bad_budget() {
        assert!(EnvFactors::new(0.0, EncodingMode::ClusterDriven, 1).is_err());
        assert!(EnvFactors::new(1.2, EncodingMode::ClusterDriven, 1).is_err());
    }
}
