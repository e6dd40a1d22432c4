use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{calibrate, expected_layer_count, layer_count_variance, EncodingMode, EnvFactors};
use super::sample::sample_offspring;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::heredity::{encode_dna, DnaModel, TauPolicy};
use crate::metrics::{architectural_efficiency, layer_cluster_efficiency};
use crate::model::{build_network, cluster_partition, count_live_clusters, ArchConfig, Inheritance, NetworkArch};
use crate::training::{evaluate, train_epoch, OptimizerState, TrainConfig};

/// Everything [`evolve`] needs besides data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub arch: ArchConfig,
    pub tau: TauPolicy,
    pub budget: f64,
    pub mode: EncodingMode,
    /// Exempt the last parametric layer's clusters (the class neurons) from
    /// the cluster draw.
    pub protect_output: bool,
    pub inheritance: Inheritance,
    pub ancestor_epochs: usize,
    pub generation_epochs: usize,
    pub train: TrainConfig,
    pub max_generations: u32,
    pub accuracy_drop_threshold: f64,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            arch: ArchConfig::default(),
            tau: TauPolicy::Median,
            budget: 0.8,
            mode: EncodingMode::ClusterDriven,
            protect_output: true,
            inheritance: Inheritance::Warm,
            ancestor_epochs: 3,
            generation_epochs: 2,
            train: TrainConfig::default(),
            max_generations: 6,
            accuracy_drop_threshold: 0.03,
            seed: 42,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.arch.validate()?;
        self.tau.validate()?;
        if !(self.budget > 0.0 && self.budget <= 1.0) {
            return bad(format!("budget must lie in (0, 1], got {}", self.budget));
        }
        if !(self.accuracy_drop_threshold > 0.0 && self.accuracy_drop_threshold < 1.0) {
            return bad(format!("accuracy_drop_threshold must lie in (0, 1), got {}", self.accuracy_drop_threshold));
        }
        if self.ancestor_epochs == 0 || self.generation_epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.max_generations == 0 {
            return bad("max_generations must be at least 1".into());
        }
        if self.train.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.train.lr));
        }
        if !(0.0..1.0).contains(&self.train.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.train.momentum));
        }
        Ok(())
    }
}

/// Synthesis-step bookkeeping for one offspring generation, per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisStats {
    pub parent_synapses: Vec<usize>,
    pub expected_synapses: Vec<f64>,
    /// Standard deviation of the sampled count under the calibrated model.
    pub count_std: Vec<f64>,
    pub cluster_scale: Vec<f64>,
    pub synapse_scale: Vec<f64>,
}

impl SynthesisStats {
    pub fn expected_total(&self) -> f64 {
        self.expected_synapses.iter().sum()
    }

    /// Standard deviation of the total count (layers are sampled independently).
    pub fn total_std(&self) -> f64 {
        self.count_std.iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u32,
    pub test_accuracy: f64,
    pub layer_synapses: Vec<usize>,
    pub total_synapses: usize,
    pub live_clusters: Vec<usize>,
    pub architectural_efficiency: f64,
    /// `None` for a layer with no live cluster left.
    pub cluster_efficiency: Vec<Option<f64>>,
    pub overall_cluster_efficiency: Option<f64>,
    /// Seed of the generator that produced this generation (initialisation
    /// for generation 1, mask sampling afterwards).
    pub seed: u64,
    /// Mean loss of the last training epoch; `None` for an adopted ancestor.
    pub train_loss: Option<f64>,
    pub synthesis: Option<SynthesisStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxGenerations,
    AccuracyDrop,
    /// A parametric layer lost every synapse.
    Extinct,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub records: Vec<GenerationRecord>,
    pub stop_reason: StopReason,
    pub layer_names: Vec<String>,
    pub ancestor_clusters: Vec<usize>,
    pub final_network: NetworkArch,
}

/// Scores a network, usually test-set accuracy.
pub trait Evaluator {
    fn evaluate(&mut self, net: &NetworkArch) -> Result<f64>;
}

impl<F: FnMut(&NetworkArch) -> Result<f64>> Evaluator for F {
    fn evaluate(&mut self, net: &NetworkArch) -> Result<f64> {
        self(net)
    }
}

/// Accuracy on a held-out dataset.
pub struct DatasetEvaluator<'a>(pub &'a Dataset);

impl Evaluator for DatasetEvaluator<'_> {
    fn evaluate(&mut self, net: &NetworkArch) -> Result<f64> {
        evaluate(net, self.0)
    }
}

/// Random stream tags for [`derive_seed`].
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const SAMPLE: u64 = 3;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one random stream: `splitmix64` folded over the master seed,
/// stream tag, generation and epoch, in that order.
pub fn derive_seed(master: u64, stream: u64, generation: u32, epoch: usize) -> u64 {
    let mut s = splitmix64(master);
    for v in [stream, u64::from(generation), epoch as u64] {
        s = splitmix64(s ^ v);
    }
    s
}

/// Hooks into the generation loop.
pub struct EvolveOptions<'a> {
    /// Trained generation-1 network to start from instead of training one.
    pub ancestor: Option<NetworkArch>,
    pub on_generation: Option<&'a mut dyn FnMut(&GenerationRecord, &NetworkArch, Option<&DnaModel>) -> Result<()>>,
}

impl Default for EvolveOptions<'_> {
    fn default() -> Self {
        EvolveOptions {
            ancestor: None,
            on_generation: None,
        }
    }
}

fn train_for(net: &mut NetworkArch, data: &Dataset, cfg: &EvolutionConfig, generation: u32, epochs: usize) -> Result<f64> {
    let mut state = OptimizerState::new(net);
    let mut loss = 0.0;
    for epoch in 0..epochs {
        let seed = derive_seed(cfg.seed, stream::SHUFFLE, generation, epoch);
        loss = match train_epoch(net, &mut state, data, &cfg.train, seed) {
            Ok(l) if l.is_finite() => l,
            Ok(_) | Err(Error::NonFinite { .. }) => return Err(Error::TrainingDiverged { generation, epoch }),
            Err(e) => return Err(e),
        };
    }
    Ok(loss)
}

struct Ancestor {
    total: usize,
    clusters: Vec<usize>,
    accuracy: f64,
}

fn make_record(
    net: &NetworkArch,
    ancestor: &Ancestor,
    accuracy: f64,
    seed: u64,
    train_loss: Option<f64>,
    synthesis: Option<SynthesisStats>,
) -> Result<GenerationRecord> {
    let counts = net.count_synapses();
    let live = count_live_clusters(net, &cluster_partition(net));
    let (cluster_efficiency, overall) = layer_cluster_efficiency(&ancestor.clusters, &live);
    Ok(GenerationRecord {
        generation: net.generation(),
        test_accuracy: accuracy,
        total_synapses: counts.total,
        architectural_efficiency: architectural_efficiency(ancestor.total, counts.total)?,
        layer_synapses: counts.per_layer,
        live_clusters: live,
        cluster_efficiency,
        overall_cluster_efficiency: overall,
        seed,
        train_loss,
        synthesis,
    })
}

/// Runs the generation loop: train (or adopt) an ancestor, then repeatedly
/// encode → calibrate → sample → retrain → evaluate → record.
///
/// Stops after recording a generation whose accuracy is more than
/// `accuracy_drop_threshold` below generation 1, after `max_generations`, or
/// when an offspring loses every synapse of some layer.
pub fn evolve(cfg: &EvolutionConfig, train: &Dataset, evaluator: &mut dyn Evaluator, mut opts: EvolveOptions<'_>) -> Result<Evolution> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    if train.sample_shape() != cfg.arch.input {
        return Err(Error::Dataset(format!(
            "samples are {:?} but the architecture expects {:?}",
            train.sample_shape(),
            cfg.arch.input
        )));
    }

    let mut notify = |rec: &GenerationRecord, net: &NetworkArch, dna: Option<&DnaModel>| -> Result<()> {
        match opts.on_generation.as_mut() {
            Some(f) => f(rec, net, dna),
            None => Ok(()),
        }
    };

    let init_seed = derive_seed(cfg.seed, stream::INIT, 1, 0);
    let (mut parent, loss) = match opts.ancestor.take() {
        Some(net) => {
            if net.generation() != 1 || net.config() != &cfg.arch {
                return Err(Error::Config("ancestor checkpoint must be a generation-1 network of the configured architecture".into()));
            }
            (net, None)
        }
        None => {
            let mut net = build_network(&cfg.arch, &mut ChaCha8Rng::seed_from_u64(init_seed))?;
            let loss = train_for(&mut net, train, cfg, 1, cfg.ancestor_epochs)?;
            (net, Some(loss))
        }
    };
    let acc1 = evaluator.evaluate(&parent)?;
    let partition = cluster_partition(&parent);
    let ancestor = Ancestor {
        total: parent.count_synapses().total,
        clusters: partition.cluster_counts(),
        accuracy: acc1,
    };
    let layer_names = parent.layer_names();
    let first = make_record(&parent, &ancestor, acc1, init_seed, loss, None)?;
    notify(&first, &parent, None)?;
    let mut records = vec![first];

    let stop_reason = loop {
        let generation = parent.generation() + 1;
        if generation > cfg.max_generations {
            break StopReason::MaxGenerations;
        }
        let dna = encode_dna(&parent, &partition, cfg.tau)?;
        let mut env = EnvFactors::new(cfg.budget, cfg.mode, dna.layers.len())?;
        if let Some(last) = env.protected.last_mut() {
            *last = cfg.protect_output;
        }
        let env = calibrate(&dna, &env)?;
        let sample_seed = derive_seed(cfg.seed, stream::SAMPLE, generation, 0);
        let masks = sample_offspring(&dna, &env, &mut ChaCha8Rng::seed_from_u64(sample_seed))?;
        let stats = SynthesisStats {
            parent_synapses: dna.live_synapses(),
            expected_synapses: (0..dna.layers.len()).map(|l| expected_layer_count(&dna, &env, l)).collect(),
            count_std: (0..dna.layers.len()).map(|l| layer_count_variance(&dna, &env, l).sqrt()).collect(),
            cluster_scale: env.cluster_scale.clone(),
            synapse_scale: env.synapse_scale.clone(),
        };

        let mut reinit = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::INIT, generation, 0));
        let mut child = parent.offspring(masks, cfg.inheritance, &mut reinit)?;
        let extinct = child.count_synapses().per_layer.contains(&0);
        let loss = train_for(&mut child, train, cfg, generation, cfg.generation_epochs)?;
        let acc = evaluator.evaluate(&child)?;
        let rec = make_record(&child, &ancestor, acc, sample_seed, Some(loss), Some(stats))?;
        notify(&rec, &child, Some(&dna))?;
        records.push(rec);
        parent = child;

        if extinct {
            break StopReason::Extinct;
        }
        if ancestor.accuracy - acc > cfg.accuracy_drop_threshold {
            break StopReason::AccuracyDrop;
        }
    };

    Ok(Evolution {
        records,
        stop_reason,
        layer_names,
        ancestor_clusters: ancestor.clusters,
        final_network: parent,
    })
}
