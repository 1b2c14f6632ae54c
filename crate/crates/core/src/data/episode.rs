// SPDX-License-Identifier: Apache-2.0

//! Few-shot task description and episode sampling.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// A learning task: a label space and the conditional distribution over it
/// that a trained checkpoint realizes, on a given input domain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub label_space: Vec<String>,
    /// Description of the input domain the predictor is defined on.
    pub feature_space: String,
    /// What realizes `P(label | input)`, e.g. a checkpoint path.
    pub predictive_target: String,
}

impl TaskSpec {
    pub fn vehicle_segmentation() -> Self {
        TaskSpec {
            label_space: vec!["background".into(), "vehicle".into()],
            feature_space: "RGB oblique UAV frames, per-pixel".into(),
            predictive_target: "per-pixel sigmoid of the network logits".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_space.len() < 2 {
            return Err(Error::Argument("a task needs at least two labels".into()));
        }
        Ok(())
    }
}

/// K labelled support items for adaptation and a disjoint query set.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode<S> {
    pub support: Vec<S>,
    pub query: Vec<S>,
    /// Pool positions of `support` and `query`, in sampled order.
    pub support_indices: Vec<usize>,
    pub query_indices: Vec<usize>,
    pub task: TaskSpec,
    pub seed: u64,
}

/// Draws `k + query_size` distinct pool items uniformly at random; the
/// first `k` form the support set.
pub fn sample_episode<S: Clone>(pool: &[S], k: usize, query_size: usize, seed: u64) -> Result<Episode<S>> {
    if k < 1 {
        return Err(Error::Argument("an episode needs k >= 1 support items".into()));
    }
    let needed = k + query_size;
    if pool.len() < needed {
        return Err(Error::Argument(format!(
            "pool of {} items cannot supply {k} support + {query_size} query items",
            pool.len()
        )));
    }
    let mut rng = seed::rng_for(seed, 0);
    let picked = sample(&mut rng, pool.len(), needed).into_vec();
    let (support_indices, query_indices) = picked.split_at(k);
    Ok(Episode {
        support: support_indices.iter().map(|&i| pool[i].clone()).collect(),
        query: query_indices.iter().map(|&i| pool[i].clone()).collect(),
        support_indices: support_indices.to_vec(),
        query_indices: query_indices.to_vec(),
        task: TaskSpec::vehicle_segmentation(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn exact_pool_uses_every_item() {
        let pool: Vec<u32> = (0..7).collect();
        let e = sample_episode(&pool, 3, 4, 9).unwrap();
        let all: BTreeSet<u32> = e.support.iter().chain(&e.query).copied().collect();
        assert_eq!(all.len(), 7);
        assert_eq!(e, sample_episode(&pool, 3, 4, 9).unwrap());
    }

    #[test]
    fn argument_errors() {
        let pool = [1, 2, 3];
        assert!(matches!(sample_episode(&pool, 0, 1, 0), Err(Error::Argument(_))));
        assert!(matches!(sample_episode(&pool, 2, 2, 0), Err(Error::Argument(_))));
        assert!(TaskSpec { label_space: vec!["x".into()], ..TaskSpec::vehicle_segmentation() }
            .validate()
            .is_err());
    }
}
