use drail_core::arg::{self, FeatureExtractor, RndConfig};
use drail_core::augment::{self, AugPlan, PixMixParams, Placement, RelOp};
use drail_core::bench::{self, BcHyper, BenchConfig, BenchScenes, Env, TinyPolicy};
use drail_core::dataset::Dataset;
use drail_core::image::{Image, Mask};
use drail_core::{fractal, rng};

fn image_hash(img: &Image) -> u64 {
    img.data().iter().fold(0x243f_6a88_85a3_08d3, |h, v| rng::mix64(h ^ v.to_bits() as u64))
}

fn golden_plan() -> AugPlan {
    AugPlan {
        rel_ops: vec![
            RelOp::HueShift { delta_range: (-0.15, 0.15) },
            RelOp::SpriteComposite {
                sprites: vec![augment::leaf_sprite(8, 1), augment::leaf_sprite(8, 2)],
                count_range: (1, 3),
                scale_range: (0.5, 1.0),
                rotation_range: (0.0, 360.0),
                placement: Placement::UniformInMask,
            },
        ],
        irr: PixMixParams::with_corpus(fractal::corpus(0, 3, 32).unwrap()),
        master_seed: 42,
    }
}

fn golden_input() -> (Image, Mask) {
    let o = Image::from_fn(32, 32, 3, |y, x, c| ((y * 7 + x * 3 + c * 11) % 32) as f32 / 31.0);
    let m = Mask::from_fn(32, 32, |y, x| (y as i32 - 16).pow(2) + (x as i32 - 12).pow(2) < 64);
    (o, m)
}

#[test]
fn augmentation_matches_golden_hash() {
    let (o, m) = golden_input();
    let plan = golden_plan();
    let hashes: Vec<u64> = (0..3)
        .map(|f| image_hash(&augment::augment_observation(&o, &m, &plan, 7, f).unwrap()))
        .collect();
    assert_eq!(hashes, GOLDEN, "{hashes:#x?}");
}

const GOLDEN: [u64; 3] = [0x204a914f5083e329, 0x12caccf3bd4a7e1d, 0x3a359753e7403a6a];

fn small_config() -> BenchConfig {
    BenchConfig { canvas: 32, target_radius: 3.0, ..BenchConfig::default() }
}

fn small_hyper(epochs: usize) -> BcHyper {
    BcHyper { epochs, batch_size: 16, downsample: (8, 8), hidden: [16, 16], ..BcHyper::default() }
}

#[test]
fn duplicating_the_dataset_keeps_the_optimum() {
    let d = bench::generate_episodes(4, Env::Demo, 3, &small_config()).unwrap();
    let mut dd = d.clone();
    dd.episodes.extend(d.episodes.iter().cloned());
    // Too small to interpolate, so both runs settle on the same nonzero floor.
    let hyper = |epochs| BcHyper { epochs, hidden: [4, 4], downsample: (4, 4), ..small_hyper(epochs) };
    let once = bench::train_bc(&d, &hyper(300)).unwrap();
    let twice = bench::train_bc(&dd, &hyper(150)).unwrap();
    let a = bench::dataset_loss(&once.policy, &bench::bc_samples(&once.policy, &d).unwrap());
    let b = bench::dataset_loss(&twice.policy, &bench::bc_samples(&twice.policy, &d).unwrap());
    assert!(a < 0.5 * once.initial_loss, "training made progress: {} -> {a}", once.initial_loss);
    assert!((a - b).abs() <= 0.05 * a.max(b), "loss {a} vs {b}");
}

#[test]
fn trained_policy_beats_untrained_on_demo() {
    let d = bench::generate_episodes(6, Env::Demo, 4, &small_config()).unwrap();
    let hyper = small_hyper(30);
    let untrained = bench::initial_policy(&d, &hyper);
    let trained = bench::train_bc(&d, &hyper).unwrap().policy;
    let u = bench::action_mse(&untrained, &d).unwrap();
    let t = bench::action_mse(&trained, &d).unwrap();
    assert!(t < u, "trained {t} vs untrained {u}");
}

fn drail_plan(seed: u64, size: usize) -> AugPlan {
    AugPlan {
        rel_ops: vec![
            RelOp::HueShift { delta_range: (-0.15, 0.15) },
            RelOp::SpriteComposite {
                sprites: (0..8).map(|i| augment::leaf_sprite(12, i)).collect(),
                count_range: (2, 5),
                scale_range: (0.5, 1.0),
                rotation_range: (0.0, 360.0),
                placement: Placement::UniformInMask,
            },
        ],
        irr: PixMixParams::with_corpus(fractal::corpus(0, 16, size).unwrap()),
        master_seed: seed,
    }
}

fn drail_policy(demo: &Dataset) -> TinyPolicy {
    let mut data = augment::augment_dataset(demo, &drail_plan(100, 64), 2).unwrap().dataset;
    data.episodes.extend(demo.episodes.iter().cloned());
    bench::train_bc(&data, &BcHyper::default()).unwrap().policy
}

#[test]
fn drail_policy_reaches_demo_targets() {
    let config = BenchConfig::default();
    let demo = bench::generate_episodes(40, Env::Demo, 1, &config).unwrap();
    let policy = drail_policy(&demo);
    let scenes = BenchScenes { config, env: Env::Demo, seed: 1 };
    let eval = bench::eval_policy(&policy, &demo, &scenes).unwrap();
    let err = eval.mean_endpoint_error();
    assert!(err <= DEMO_ENDPOINT_PX, "mean endpoint error {err:.3} px");
}

const DEMO_ENDPOINT_PX: f64 = 2.0;

#[test]
fn arg_protocol_defaults_and_stability() {
    let demo: Vec<Image> = bench::generate_episodes(4, Env::Demo, 1, &small_config())
        .unwrap()
        .episodes
        .into_iter()
        .flat_map(|e| e.frames.into_iter().map(|f| f.observation))
        .collect();
    let test: Vec<Image> = bench::generate_episodes(4, Env::Test, 2, &small_config())
        .unwrap()
        .episodes
        .into_iter()
        .flat_map(|e| e.frames.into_iter().map(|f| f.observation))
        .collect();
    let ex = FeatureExtractor::flatten_default();
    let cfg = RndConfig { epochs: 20, ..RndConfig::default() };
    let a = arg::arg_protocol(&ex, &demo, &test, arg::DEFAULT_RESAMPLES, 1, &cfg).unwrap();
    assert_eq!(a.values.len(), 20);
    assert!(a.values.iter().all(|v| *v >= 0.0));
    let b = arg::arg_protocol(&ex, &demo, &test, arg::DEFAULT_RESAMPLES, 2, &cfg).unwrap();
    assert!((a.mean - b.mean).abs() <= 3.0 * a.std.max(b.std), "{} ± {} vs {} ± {}", a.mean, a.std, b.mean, b.std);
}
