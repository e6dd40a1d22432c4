use rand::Rng;

use super::env::EnvFactors;
use crate::error::Result;
use crate::heredity::DnaModel;
use crate::numerics::Tensor;

/// Draws one offspring mask per layer.
///
/// Clusters are visited in id order and synapses in increasing flat index
/// within a cluster. A cluster draw `Bernoulli(q_c)` that fails removes every
/// member; otherwise each member survives with `Bernoulli(q_i)`. In
/// synapse-only mode, and for protected layers, the cluster draw is skipped. Synapses with zero inherited
/// probability are never drawn, so the offspring is a subset of the parent.
pub fn sample_offspring<R: Rng + ?Sized>(dna: &DnaModel, env: &EnvFactors, rng: &mut R) -> Result<Vec<Tensor>> {
    env.check_layers(dna)?;
    let mut masks = Vec::with_capacity(dna.layers.len());
    for (l, ld) in dna.layers.iter().enumerate() {
        let mut mask = vec![0.0; ld.synapse_prob.len()];
        for (c, members) in ld.partition.clusters().enumerate() {
            let pc = ld.cluster_prob[c];
            if pc == 0.0 {
                continue;
            }
            let qc = env.cluster_q(l, pc);
            if qc < 1.0 && !(rng.gen::<f64>() < qc) {
                continue;
            }
            for &i in members {
                let ps = ld.synapse_prob[i];
                if ps == 0.0 {
                    continue;
                }
                if rng.gen::<f64>() < env.synapse_q(l, ps) {
                    mask[i] = 1.0;
                }
            }
        }
        masks.push(Tensor::new(ld.shape.clone(), mask)?);
    }
    Ok(masks)
}
