//! Network architecture, synapse masks, synaptic clusters and checkpoints.

mod arch;
mod checkpoint;
mod cluster;

pub use arch::{build_network, glorot_bound, ArchConfig, Inheritance, LayerSpec, NetworkArch, ParamLayer, SynapseCounts};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use cluster::{cluster_partition, count_live_clusters, ClusterPartition, LayerPartition};
