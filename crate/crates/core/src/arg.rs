//! Random network distillation (RND) novelty and the absolute RND gap (ARG).
//!
//! A frozen random network and a trainable predictor of identical shape
//! read encoder features. The predictor is fit on demonstration-environment
//! features only; `RND(o)` is its squared error on `o`, and ARG is the
//! absolute difference of mean RND between demonstration and test
//! observations. Smaller ARG means the encoder maps test observations onto
//! features the predictor already knows.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::bench::TinyPolicy;
use crate::image::Image;
use crate::math::{abs, pairwise_sum, sqrt, tanh};
use crate::nn::{permutation, Adam, Mlp};
use crate::rng::{self, Rng};
use crate::stats::{paired_t_test, PairedTTest};
use crate::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 20;

/// Maps an image to a fixed-length feature vector.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureExtractor {
    /// Box-downsampled, flattened pixels.
    FlattenDownsample { height: usize, width: usize },
    /// One layer of seeded Gaussian filters with tanh, flattened.
    RandomConv { filters: usize, kernel: usize, stride: usize, seed: u64 },
    /// Encoder of a trained policy.
    TinyPolicyEncoder(TinyPolicy),
}

impl FeatureExtractor {
    pub fn flatten_default() -> Self {
        FeatureExtractor::FlattenDownsample { height: 8, width: 8 }
    }

    pub fn random_conv_default(seed: u64) -> Self {
        FeatureExtractor::RandomConv { filters: 8, kernel: 8, stride: 8, seed }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureExtractor::FlattenDownsample { .. } => "flatten_downsample",
            FeatureExtractor::RandomConv { .. } => "random_conv",
            FeatureExtractor::TinyPolicyEncoder(_) => "tiny_policy_encoder",
        }
    }

    pub fn extract(&self, o: &Image) -> Result<Vec<f64>> {
        match self {
            FeatureExtractor::FlattenDownsample { height, width } => {
                Ok(o.downsample(*height, *width)?.data().iter().map(|&v| v as f64).collect())
            }
            FeatureExtractor::RandomConv { filters, kernel, stride, seed } => {
                random_conv(o, *filters, *kernel, *stride, *seed)
            }
            FeatureExtractor::TinyPolicyEncoder(p) => p.features(o),
        }
    }

    pub fn extract_all<'a>(&self, obs: impl IntoIterator<Item = &'a Image>) -> Result<Vec<Vec<f64>>> {
        obs.into_iter().map(|o| self.extract(o)).collect()
    }
}

fn random_conv(o: &Image, filters: usize, kernel: usize, stride: usize, seed: u64) -> Result<Vec<f64>> {
    if kernel == 0 || stride == 0 || filters == 0 || kernel > o.height() || kernel > o.width() {
        return Err(Error::Config(format!("random_conv: bad geometry k={kernel} s={stride} f={filters}")));
    }
    let c = o.channels();
    let fan_in = kernel * kernel * c;
    let normal = Normal::new(0.0, 1.0 / sqrt(fan_in as f64)).expect("finite std");
    let mut rng: Rng = rng::stream(seed, &[0xc0]);
    let weights: Vec<f64> = (0..filters * fan_in).map(|_| normal.sample(&mut rng)).collect();
    let out_h = (o.height() - kernel) / stride + 1;
    let out_w = (o.width() - kernel) / stride + 1;
    let mut out = Vec::with_capacity(filters * out_h * out_w);
    for f in 0..filters {
        let w = &weights[f * fan_in..(f + 1) * fan_in];
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = 0.0;
                let mut k = 0;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        for v in o.pixel(oy * stride + ky, ox * stride + kx) {
                            acc += w[k] * (*v as f64 - 0.5);
                            k += 1;
                        }
                    }
                }
                out.push(tanh(acc));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RndConfig {
    pub hidden: [usize; 2],
    pub out_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    /// Standardize each feature with the demonstration mean and standard
    /// deviation, clipped to `±FEATURE_CLIP`, before both networks.
    pub standardize: bool,
}

impl Default for RndConfig {
    fn default() -> Self {
        Self {
            hidden: [64, 64],
            out_dim: 32,
            lr: 1e-3,
            epochs: 200,
            batch_size: 32,
            optimizer: Optimizer::Sgd,
            standardize: false,
        }
    }
}

pub const FEATURE_CLIP: f64 = 5.0;

/// Per-dimension mean and standard deviation of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        let first = features.first().ok_or_else(|| Error::InvalidArgument("empty feature set".into()))?;
        let dim = first.len();
        if features.iter().any(|f| f.len() != dim) {
            return Err(Error::InvalidArgument("ragged feature set".into()));
        }
        let n = features.len() as f64;
        let column = |j: usize| -> Vec<f64> { features.iter().map(|f| f[j]).collect() };
        let mean: Vec<f64> = (0..dim).map(|j| pairwise_sum(&column(j)) / n).collect();
        let std = (0..dim)
            .map(|j| {
                let sq: Vec<f64> = features.iter().map(|f| (f[j] - mean[j]) * (f[j] - mean[j])).collect();
                sqrt(pairwise_sum(&sq) / n)
            })
            .collect();
        Ok(Self { mean, std })
    }

    /// A constant demo dimension maps to 0, or to the clip bound when the
    /// value differs from that constant.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| {
                let z = if s > 1e-12 {
                    (v - m) / s
                } else if abs(v - m) > 1e-12 {
                    if v > m { FEATURE_CLIP } else { -FEATURE_CLIP }
                } else {
                    0.0
                };
                z.clamp(-FEATURE_CLIP, FEATURE_CLIP)
            })
            .collect()
    }

    pub fn apply_all(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        features.iter().map(|f| self.apply(f)).collect()
    }
}

/// Fixed random target network and trainable predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct RndPair {
    fixed: Mlp,
    pub predictor: Mlp,
}

impl RndPair {
    pub fn new(input_dim: usize, cfg: &RndConfig, fixed_seed: u64, predictor_seed: u64) -> Self {
        let dims = [input_dim, cfg.hidden[0], cfg.hidden[1], cfg.out_dim];
        Self {
            fixed: Mlp::new(&dims, false, &mut rng::stream(fixed_seed, &[rng::tag::FIXED_NET])),
            predictor: Mlp::new(&dims, false, &mut rng::stream(predictor_seed, &[rng::tag::PREDICTOR])),
        }
    }

    /// Predictor initialized as an exact copy of the fixed network.
    pub fn copied(input_dim: usize, cfg: &RndConfig, fixed_seed: u64) -> Self {
        let mut pair = Self::new(input_dim, cfg, fixed_seed, 0);
        pair.predictor = pair.fixed.clone();
        pair
    }

    pub fn fixed(&self) -> &Mlp {
        &self.fixed
    }

    pub fn input_dim(&self) -> usize {
        self.fixed.input_dim()
    }

    /// `‖f_pred(x) - f_fixed(x)‖²`.
    pub fn rnd(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.input_dim() {
            return Err(Error::shape(format!("{} features", self.input_dim()), format!("{}", features.len())));
        }
        let a = self.predictor.forward(features);
        let b = self.fixed.forward(features);
        Ok(a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum())
    }

    pub fn mean_rnd(&self, features: &[Vec<f64>]) -> Result<f64> {
        if features.is_empty() {
            return Err(Error::InvalidArgument("empty observation set".into()));
        }
        let v = features.iter().map(|f| self.rnd(f)).collect::<Result<Vec<_>>>()?;
        Ok(pairwise_sum(&v) / v.len() as f64)
    }
}

pub fn rnd_value(o: &Image, pair: &RndPair, extractor: &FeatureExtractor) -> Result<f64> {
    pair.rnd(&extractor.extract(o)?)
}

/// Fit the predictor to the fixed network on `features` by mini-batch
/// gradient descent on the mean squared output error. Returns the loss
/// before training followed by the loss after each epoch.
pub fn train_predictor(
    pair: &mut RndPair,
    features: &[Vec<f64>],
    cfg: &RndConfig,
    shuffle_seed: u64,
) -> Result<Vec<f64>> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("predictor needs at least one observation".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let targets: Vec<Vec<f64>> = features.iter().map(|f| pair.fixed.forward(f)).collect();
    let loss_of = |pred: &Mlp| -> f64 {
        let v: Vec<f64> = features
            .iter()
            .zip(&targets)
            .map(|(f, t)| pred.forward(f).iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect();
        pairwise_sum(&v) / v.len() as f64
    };
    let mut losses = vec![loss_of(&pair.predictor)];
    if losses[0] == 0.0 {
        return Ok(losses);
    }
    let n_params = pair.predictor.params().len();
    let mut adam = Adam::new(n_params, cfg.lr);
    let mut params = pair.predictor.params().to_vec();
    for epoch in 1..=cfg.epochs {
        let order = permutation(features.len(), &mut rng::stream(shuffle_seed, &[rng::tag::SHUFFLE, epoch as u64]));
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad = vec![0.0; n_params];
            for &i in idx {
                let trace = pair.predictor.trace(&features[i]);
                let go: Vec<f64> = trace.output().iter().zip(&targets[i]).map(|(a, b)| 2.0 * (a - b)).collect();
                pair.predictor.backward(&trace, &go, &mut grad, false);
            }
            let scale = 1.0 / idx.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            match cfg.optimizer {
                Optimizer::Sgd => params.iter_mut().zip(&grad).for_each(|(p, g)| *p -= cfg.lr * g),
                Optimizer::Adam => adam.step(&mut params, &grad),
            }
            pair.predictor.params_mut().copy_from_slice(&params);
        }
        let loss = loss_of(&pair.predictor);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step: usize::MAX });
        }
        losses.push(loss);
    }
    Ok(losses)
}

/// `|mean RND(demo) - mean RND(test)|` for an already-trained pair.
pub fn arg_of_pair(pair: &RndPair, demo: &[Vec<f64>], test: &[Vec<f64>]) -> Result<f64> {
    Ok(abs(pair.mean_rnd(demo)? - pair.mean_rnd(test)?))
}

/// Seeds `(fixed, predictor)` for one resampling. Resampling `i` uses the
/// same fixed-network seed for every method sharing `base_seed`.
pub fn resample_seeds(base_seed: u64, i: usize) -> (u64, u64) {
    (
        rng::derive_seed(base_seed, &[rng::tag::FIXED_NET, i as u64]),
        rng::derive_seed(base_seed, &[rng::tag::PREDICTOR, i as u64]),
    )
}

/// One resampling on precomputed features: fresh pair, predictor trained
/// on the demonstration features only, then ARG.
pub fn arg_resample(
    demo: &[Vec<f64>],
    test: &[Vec<f64>],
    seeds: (u64, u64),
    cfg: &RndConfig,
) -> Result<f64> {
    if demo.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument("ARG needs non-empty demo and test sets".into()));
    }
    let mut pair = RndPair::new(demo[0].len(), cfg, seeds.0, seeds.1);
    if cfg.standardize {
        let scaler = FeatureScaler::fit(demo)?;
        let (demo, test) = (scaler.apply_all(demo), scaler.apply_all(test));
        train_predictor(&mut pair, &demo, cfg, seeds.1)?;
        return arg_of_pair(&pair, &demo, &test);
    }
    train_predictor(&mut pair, demo, cfg, seeds.1)?;
    arg_of_pair(&pair, demo, test)
}

/// ARG for one seed.
pub fn compute_arg(
    extractor: &FeatureExtractor,
    demo: &[Image],
    test: &[Image],
    seed: u64,
    cfg: &RndConfig,
) -> Result<f64> {
    let d = extractor.extract_all(demo)?;
    let t = extractor.extract_all(test)?;
    arg_resample(&d, &t, resample_seeds(seed, 0), cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub against: String,
    pub test: PairedTTest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArgReport {
    pub extractor: String,
    pub base_seed: u64,
    pub config: RndConfig,
    pub demo_count: usize,
    pub test_count: usize,
    /// One ARG value per resampling, in resampling order.
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1).
    pub std: f64,
    pub comparison: Option<Comparison>,
}

impl ArgReport {
    pub fn from_values(
        extractor: &str,
        base_seed: u64,
        config: RndConfig,
        counts: (usize, usize),
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument("ARG protocol needs at least 2 resamplings".into()));
        }
        let n = values.len() as f64;
        let mean = pairwise_sum(&values) / n;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let std = sqrt(pairwise_sum(&sq) / (n - 1.0));
        Ok(Self {
            extractor: extractor.into(),
            base_seed,
            config,
            demo_count: counts.0,
            test_count: counts.1,
            values,
            mean,
            std,
            comparison: None,
        })
    }

    /// Paired t-test of `self.values - reference.values`. Both reports must
    /// come from the same base seed so resampling `i` shares its fixed net.
    pub fn compare_to(&self, reference: &ArgReport, reference_name: &str) -> Result<Comparison> {
        if self.base_seed != reference.base_seed {
            return Err(Error::InvalidArgument(format!(
                "unpaired reports: base seeds {} and {}",
                self.base_seed, reference.base_seed
            )));
        }
        Ok(Comparison { against: reference_name.into(), test: paired_t_test(&self.values, &reference.values)? })
    }
}

/// Protocol over explicit per-resampling seeds.
pub fn arg_protocol_with_seeds(
    extractor: &FeatureExtractor,
    demo: &[Image],
    test: &[Image],
    seeds: &[(u64, u64)],
    base_seed: u64,
    cfg: &RndConfig,
) -> Result<ArgReport> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument("ARG protocol needs at least 2 resamplings".into()));
    }
    let d = extractor.extract_all(demo)?;
    let t = extractor.extract_all(test)?;
    let values = seeds.iter().map(|&s| arg_resample(&d, &t, s, cfg)).collect::<Result<Vec<_>>>()?;
    ArgReport::from_values(extractor.name(), base_seed, *cfg, (d.len(), t.len()), values)
}

/// `n_resample` resamplings with seeds derived from `base_seed`.
pub fn arg_protocol(
    extractor: &FeatureExtractor,
    demo: &[Image],
    test: &[Image],
    n_resample: usize,
    base_seed: u64,
    cfg: &RndConfig,
) -> Result<ArgReport> {
    let seeds: Vec<(u64, u64)> = (0..n_resample).map(|i| resample_seeds(base_seed, i)).collect();
    arg_protocol_with_seeds(extractor, demo, test, &seeds, base_seed, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn feats(seed: u64, n: usize, dim: usize, shift: f64) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, &[]);
        (0..n).map(|_| (0..dim).map(|_| r.random::<f64>() - 0.5 + shift).collect()).collect()
    }

    fn quick() -> RndConfig {
        RndConfig { epochs: 30, ..Default::default() }
    }

    /// Step-by-step forward pass written without the `Mlp` machinery.
    fn oracle_forward(dims: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut act = x.to_vec();
        let mut off = 0;
        for l in 0..dims.len() - 1 {
            let (i, o) = (dims[l], dims[l + 1]);
            let mut next = Vec::new();
            for r in 0..o {
                let mut s = params[off + i * o + r];
                for c in 0..i {
                    s += params[off + r * i + c] * act[c];
                }
                next.push(if l + 2 < dims.len() { libm::tanh(s) } else { s });
            }
            off += i * o + o;
            act = next;
        }
        act
    }

    #[test]
    fn copied_predictor_has_zero_rnd_and_no_training() {
        let cfg = quick();
        let f = feats(1, 30, 12, 0.0);
        let mut pair = RndPair::copied(12, &cfg, 5);
        for x in &f {
            assert_eq!(pair.rnd(x).unwrap(), 0.0);
        }
        let before = pair.clone();
        let losses = train_predictor(&mut pair, &f, &cfg, 1).unwrap();
        assert_eq!(losses, vec![0.0]);
        assert_eq!(pair, before);
    }

    #[test]
    fn rnd_matches_oracle_forward() {
        let cfg = RndConfig::default();
        let pair = RndPair::new(10, &cfg, 3, 4);
        let dims = [10, 64, 64, 32];
        for x in feats(2, 10, 10, 0.0) {
            let a = oracle_forward(&dims, pair.predictor.params(), &x);
            let b = oracle_forward(&dims, pair.fixed().params(), &x);
            let oracle: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum();
            let got = pair.rnd(&x).unwrap();
            assert!((got - oracle).abs() <= 1e-6 * oracle.max(1.0));
        }
    }

    #[test]
    fn rnd_is_nonnegative_and_checks_dims() {
        let pair = RndPair::new(6, &RndConfig::default(), 1, 2);
        for x in feats(3, 100, 6, 0.0) {
            assert!(pair.rnd(&x).unwrap() >= 0.0);
        }
        assert!(pair.rnd(&[0.0; 5]).is_err());
    }

    #[test]
    fn single_observation_training_reduces_rnd() {
        let cfg = quick();
        let f = feats(4, 1, 8, 0.0);
        let mut pair = RndPair::new(8, &cfg, 7, 8);
        let before = pair.rnd(&f[0]).unwrap();
        train_predictor(&mut pair, &f, &cfg, 0).unwrap();
        assert!(pair.rnd(&f[0]).unwrap() < before);
    }

    #[test]
    fn training_loss_non_increasing() {
        let cfg = RndConfig { epochs: 60, ..Default::default() };
        let f = feats(5, 64, 16, 0.0);
        for optimizer in [Optimizer::Sgd, Optimizer::Adam] {
            let mut pair = RndPair::new(16, &cfg, 9, 10);
            let losses = train_predictor(&mut pair, &f, &RndConfig { optimizer, ..cfg }, 3).unwrap();
            for w in losses.windows(2) {
                assert!(w[1] <= w[0] + 1e-6, "{}: {} -> {}", optimizer.name(), w[0], w[1]);
            }
        }
    }

    #[test]
    fn fixed_network_is_untouched_by_training() {
        let cfg = quick();
        let mut pair = RndPair::new(8, &cfg, 11, 12);
        let fixed = pair.fixed().clone();
        train_predictor(&mut pair, &feats(6, 20, 8, 0.0), &cfg, 0).unwrap();
        assert_eq!(pair.fixed(), &fixed);
    }

    #[test]
    fn arg_zero_on_identical_sets_and_symmetric() {
        let cfg = quick();
        let d = feats(7, 20, 8, 0.0);
        let t = feats(8, 20, 8, 0.4);
        assert_eq!(arg_resample(&d, &d, (1, 2), &cfg).unwrap(), 0.0);
        let mut pair = RndPair::new(8, &cfg, 1, 2);
        train_predictor(&mut pair, &d, &cfg, 2).unwrap();
        assert_eq!(arg_of_pair(&pair, &d, &t).unwrap(), arg_of_pair(&pair, &t, &d).unwrap());
        assert!(arg_resample(&d, &[], (1, 2), &cfg).is_err());
    }

    #[test]
    fn identical_seeds_give_identical_values() {
        let imgs: Vec<Image> = (0..6).map(|i| Image::filled(16, 16, &[0.1 * i as f32, 0.5, 0.2])).collect();
        let test: Vec<Image> = (0..6).map(|i| Image::filled(16, 16, &[0.5, 0.1 * i as f32, 0.9])).collect();
        let ex = FeatureExtractor::FlattenDownsample { height: 4, width: 4 };
        let r = arg_protocol_with_seeds(&ex, &imgs, &test, &[(3, 4), (3, 4)], 0, &quick()).unwrap();
        assert_eq!(r.values[0], r.values[1]);
        assert_eq!(r.std, 0.0);
        assert!(arg_protocol(&ex, &imgs, &test, 1, 0, &quick()).is_err());
    }

    #[test]
    fn random_conv_is_deterministic() {
        let img = Image::from_fn(64, 64, 3, |y, x, c| ((y * 7 + x * 3 + c) % 11) as f32 / 10.0);
        let ex = FeatureExtractor::random_conv_default(4);
        let a = ex.extract(&img).unwrap();
        assert_eq!(a.len(), 8 * 8 * 8);
        assert_eq!(a, ex.extract(&img).unwrap());
        assert_ne!(a, FeatureExtractor::random_conv_default(5).extract(&img).unwrap());
    }
}
