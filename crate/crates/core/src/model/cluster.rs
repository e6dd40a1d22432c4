use serde::{Deserialize, Serialize};

use super::{LayerSpec, NetworkArch};

/// Cluster assignment for one parametric layer.
///
/// Members are stored CSR-style: cluster `c` owns
/// `members[offsets[c]..offsets[c + 1]]`, flat weight indices in increasing
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct LayerPartition {
    cluster_of: Vec<usize>,
    offsets: Vec<usize>,
    members: Vec<usize>,
}

impl LayerPartition {
    /// Builds a partition from a dense cluster-id assignment.
    ///
    /// # Panics
    /// If the ids do not cover `0..count` without gaps.
    pub fn from_assignment(cluster_of: Vec<usize>) -> Self {
        Self::try_from(cluster_of).expect("cluster ids must be dense")
    }

    fn build(cluster_of: Vec<usize>) -> Result<Self, String> {
        if cluster_of.is_empty() {
            return Err("empty cluster assignment".into());
        }
        let count = cluster_of.iter().copied().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; count];
        for &c in &cluster_of {
            sizes[c] += 1;
        }
        if let Some(gap) = sizes.iter().position(|&s| s == 0) {
            return Err(format!("cluster id {gap} has no members"));
        }
        let mut offsets = Vec::with_capacity(count + 1);
        offsets.push(0);
        for s in &sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        let mut cursor = offsets[..count].to_vec();
        let mut members = vec![0; cluster_of.len()];
        for (idx, &c) in cluster_of.iter().enumerate() {
            members[cursor[c]] = idx;
            cursor[c] += 1;
        }
        Ok(LayerPartition {
            cluster_of,
            offsets,
            members,
        })
    }

    pub fn cluster_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn synapse_count(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn cluster_of(&self, synapse: usize) -> usize {
        self.cluster_of[synapse]
    }

    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.members[self.offsets[cluster]..self.offsets[cluster + 1]]
    }

    pub fn clusters(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.cluster_count()).map(move |c| self.members(c))
    }
}

impl TryFrom<Vec<usize>> for LayerPartition {
    type Error = String;

    fn try_from(cluster_of: Vec<usize>) -> Result<Self, String> {
        Self::build(cluster_of)
    }
}

impl From<LayerPartition> for Vec<usize> {
    fn from(p: LayerPartition) -> Self {
        p.cluster_of
    }
}

/// Synaptic clusters of every parametric layer. Convolution clusters are 2-D
/// kernel slices, one per (out, in) channel pair; fully connected clusters
/// are the fan-in vectors of output neurons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub layers: Vec<LayerPartition>,
}

impl ClusterPartition {
    pub fn cluster_counts(&self) -> Vec<usize> {
        self.layers.iter().map(LayerPartition::cluster_count).collect()
    }
}

fn layer_partition(spec: &LayerSpec) -> LayerPartition {
    let (clusters, size) = match *spec {
        LayerSpec::Conv {
            out_channels,
            in_channels,
            kh,
            kw,
        } => (out_channels * in_channels, kh * kw),
        LayerSpec::Fc {
            out_features,
            in_features,
        } => (out_features, in_features),
        _ => unreachable!("only parametric layers are partitioned"),
    };
    // row-major weights put each kernel slice / fan-in row in one contiguous block
    LayerPartition::from_assignment((0..clusters * size).map(|i| i / size).collect())
}

pub fn cluster_partition(net: &NetworkArch) -> ClusterPartition {
    ClusterPartition {
        layers: net.params().iter().map(|p| layer_partition(&p.spec)).collect(),
    }
}

/// Per layer, the number of clusters with at least one unpruned synapse.
pub fn count_live_clusters(net: &NetworkArch, partition: &ClusterPartition) -> Vec<usize> {
    net.params()
        .iter()
        .zip(&partition.layers)
        .map(|(p, lp)| {
            let m = p.mask.data();
            lp.clusters().filter(|c| c.iter().any(|&i| m[i] != 0.0)).count()
        })
        .collect()
}
