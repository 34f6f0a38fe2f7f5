//! Parallel versions of the core pipeline stages.
//!
//! Every function here returns exactly what its sequential counterpart in
//! `drail_core` returns, for any number of worker threads: work items own
//! their RNG streams and results are collected in input order.

use drail_core::arg::{self, ArgReport, FeatureExtractor, RndConfig};
use drail_core::augment::{augment_episode, AugPlan, AugmentedDataset, SkippedEpisode};
use drail_core::bench::{
    self, generate_episode, ActionPolicy, BcHyper, BenchConfig, BenchScenes, ChunkMap, Env, PolicyEval, TinyPolicy,
    TrainOutcome,
};
use drail_core::dataset::Dataset;
use drail_core::saliency::{attention_in_mask, gradient_saliency, SaliencyMap};
use drail_core::{Image, Mask};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f` on a pool of `workers` threads (0 = rayon's default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Gradient chunks computed on the rayon pool, summed in chunk order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Parallel;

impl ChunkMap for Parallel {
    fn reduce_chunks(&self, n: usize, job: &(dyn Fn(usize, &mut [f64]) -> f64 + Sync), out: &mut [f64]) -> f64 {
        let len = out.len();
        let parts: Vec<(f64, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|c| {
                let mut buf = vec![0.0; len];
                let loss = job(c, &mut buf);
                (loss, buf)
            })
            .collect();
        out.fill(0.0);
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            out.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        loss
    }
}

pub fn generate_episodes(n: usize, env: Env, seed: u64, config: &BenchConfig) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("episode count must be >= 1".into()));
    }
    let episodes = (0..n).into_par_iter().map(|i| generate_episode(config, env, seed, i)).collect();
    Ok(Dataset::new(episodes, bench::bench_meta(config))?)
}

pub fn augment_dataset(dataset: &Dataset, plan: &AugPlan, copies: usize) -> Result<AugmentedDataset> {
    plan.validate()?;
    if copies == 0 {
        return Ok(AugmentedDataset { dataset: dataset.clone(), skipped: Vec::new() });
    }
    let per_episode: Vec<_> = dataset
        .episodes
        .par_iter()
        .map(|ep| (0..copies).map(|k| augment_episode(ep, plan, k)).collect::<drail_core::Result<Vec<_>>>())
        .collect();
    let mut episodes = Vec::with_capacity(dataset.episodes.len() * copies);
    let mut skipped = Vec::new();
    for (ep, r) in dataset.episodes.iter().zip(per_episode) {
        match r {
            Ok(eps) => episodes.extend(eps),
            Err(e) => skipped.push(SkippedEpisode { id: ep.id.clone(), reason: e.to_string() }),
        }
    }
    Ok(AugmentedDataset { dataset: Dataset { episodes, meta: dataset.meta }, skipped })
}

pub fn train_bc(dataset: &Dataset, hyper: &BcHyper) -> Result<TrainOutcome> {
    Ok(bench::train_bc_with(dataset, hyper, &Parallel)?)
}

pub fn eval_policy<P: ActionPolicy + Sync>(policy: &P, dataset: &Dataset, scenes: &BenchScenes) -> Result<PolicyEval> {
    let endpoint_errors = dataset
        .episodes
        .par_iter()
        .map(|ep| bench::rollout_endpoint_error(policy, scenes, ep))
        .collect::<drail_core::Result<Vec<_>>>()?;
    Ok(PolicyEval { mse: bench::action_mse(policy, dataset)?, endpoint_errors })
}

pub fn extract_features(extractor: &FeatureExtractor, obs: &[&Image]) -> Result<Vec<Vec<f64>>> {
    Ok(obs.par_iter().map(|o| extractor.extract(o)).collect::<drail_core::Result<Vec<_>>>()?)
}

/// The ARG protocol with features and resamplings computed in parallel.
pub fn arg_protocol(
    extractor: &FeatureExtractor,
    demo: &[&Image],
    test: &[&Image],
    n_resample: usize,
    base_seed: u64,
    cfg: &RndConfig,
) -> Result<ArgReport> {
    let d = extract_features(extractor, demo)?;
    let t = extract_features(extractor, test)?;
    arg_on_features(extractor.name(), &d, &t, n_resample, base_seed, cfg)
}

pub fn arg_on_features(
    extractor: &str,
    demo: &[Vec<f64>],
    test: &[Vec<f64>],
    n_resample: usize,
    base_seed: u64,
    cfg: &RndConfig,
) -> Result<ArgReport> {
    let values = (0..n_resample)
        .into_par_iter()
        .map(|i| arg::arg_resample(demo, test, arg::resample_seeds(base_seed, i), cfg))
        .collect::<drail_core::Result<Vec<_>>>()?;
    Ok(ArgReport::from_values(extractor, base_seed, *cfg, (demo.len(), test.len()), values)?)
}

/// Gradient saliency and attention-in-mask for each `(observation, state, mask)`.
pub fn saliency_batch(
    policy: &TinyPolicy,
    frames: &[(&Image, &[f64], Option<&Mask>)],
) -> Result<Vec<(SaliencyMap, Option<f64>)>> {
    Ok(frames
        .par_iter()
        .map(|(o, s, m)| {
            let map = gradient_saliency(policy, o, s)?;
            let att = match m {
                Some(m) => attention_in_mask(&map, m)?,
                None => None,
            };
            Ok((map, att))
        })
        .collect::<drail_core::Result<Vec<_>>>()?)
}
