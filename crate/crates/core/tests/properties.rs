use drail_core::arg::{self, FeatureScaler, RndConfig, RndPair};
use drail_core::augment::{self, AugPlan, PixMixParams};
use drail_core::image::{composite, hadamard, Image, Mask};
use drail_core::propagate::propagate_mask;
use drail_core::saliency::{attention_in_mask, SaliencyMap};
use drail_core::fractal;
use proptest::prelude::*;

fn image_from(seed: u64, h: usize, w: usize) -> Image {
    let mut s = seed | 1;
    Image::from_fn(h, w, 3, |_, _, _| {
        s = drail_core::rng::mix64(s);
        (s >> 40) as f32 / (1u64 << 24) as f32
    })
}

fn mask_from(seed: u64, h: usize, w: usize) -> Mask {
    let mut s = seed ^ 0x5555;
    Mask::from_fn(h, w, |_, _| {
        s = drail_core::rng::mix64(s);
        s & 3 == 0
    })
}

fn features(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let img = image_from(seed, n, dim);
    (0..n).map(|y| (0..dim).map(|x| img.get(y, x, 0) as f64 * 4.0 - 2.0).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn complement_partitions_the_frame(seed in any::<u64>(), h in 1usize..16, w in 1usize..16) {
        let m = mask_from(seed, h, w);
        let c = m.complement();
        prop_assert!(c.data().iter().all(|v| *v <= 1));
        prop_assert!(m.data().iter().zip(c.data()).all(|(a, b)| a + b == 1));
        let o = image_from(seed, h, w);
        prop_assert_eq!(composite(&hadamard(&o, &m).unwrap(), &hadamard(&o, &c).unwrap(), &m).unwrap(), o);
    }

    #[test]
    fn hue_shift_stays_in_range_and_region(seed in any::<u64>(), delta in -1.0f64..1.0) {
        let o = image_from(seed, 12, 12);
        let m = mask_from(seed, 12, 12);
        let out = augment::hue_shift(&o, &m, delta).unwrap();
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let bg = m.complement();
        prop_assert_eq!(hadamard(&out, &bg).unwrap(), hadamard(&o, &bg).unwrap());
    }

    #[test]
    fn augmentation_copies_actions_and_states(seed in 0u64..1000) {
        let config = drail_core::bench::BenchConfig { canvas: 16, target_radius: 2.0, steps: 3, ..Default::default() };
        let d = drail_core::bench::generate_episodes(2, drail_core::bench::Env::Demo, seed, &config).unwrap();
        let plan = AugPlan { irr: PixMixParams::with_corpus(vec![image_from(seed, 16, 16)]), ..AugPlan::identity(seed) };
        let out = augment::augment_dataset(&d, &plan, 2).unwrap().dataset;
        for (i, ep) in out.episodes.iter().enumerate() {
            let src = &d.episodes[i / 2];
            prop_assert_eq!(&ep.actions, &src.actions);
            prop_assert_eq!(&ep.states, &src.states);
            prop_assert!(ep.frames.iter().all(|f| f.observation.data().iter().all(|v| (0.0..=1.0).contains(v))));
        }
    }

    #[test]
    fn fractals_stay_in_unit_range(seed in any::<u64>(), index in 0usize..3) {
        let img = fractal::generate(&fractal::corpus_spec(seed, index, 16)).unwrap();
        prop_assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rnd_nonnegative_and_arg_zero_on_same_multiset(seed in any::<u64>(), rot in 0usize..10) {
        let demo = features(seed, 10, 5);
        let mut test = demo.clone();
        test.rotate_left(rot);
        let cfg = RndConfig { epochs: 3, ..RndConfig::default() };
        let mut pair = RndPair::new(5, &cfg, seed, seed ^ 1);
        let fixed = pair.fixed().clone();
        arg::train_predictor(&mut pair, &demo, &cfg, seed).unwrap();
        prop_assert_eq!(pair.fixed(), &fixed);
        for f in features(seed ^ 9, 10, 5) {
            prop_assert!(pair.rnd(&f).unwrap() >= 0.0);
        }
        let v = arg::arg_resample(&demo, &test, (seed, seed ^ 1), &cfg).unwrap();
        prop_assert!(v.abs() < 1e-12, "{}", v);
        prop_assert!(arg::arg_resample(&demo, &features(seed ^ 3, 7, 5), (seed, seed ^ 1), &cfg).unwrap() >= 0.0);
    }

    #[test]
    fn standardized_features_are_clipped(seed in any::<u64>()) {
        let demo = features(seed, 8, 4);
        let s = FeatureScaler::fit(&demo).unwrap();
        for f in features(seed ^ 5, 8, 4) {
            let z = s.apply(&f.iter().map(|v| v * 100.0).collect::<Vec<_>>());
            prop_assert!(z.iter().all(|v| v.abs() <= arg::FEATURE_CLIP));
        }
    }

    #[test]
    fn attention_is_scale_invariant(seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let img = image_from(seed, 8, 8);
        let map = SaliencyMap { height: 8, width: 8, weights: img.data().iter().step_by(3).map(|v| *v as f64).collect() };
        let scaled = SaliencyMap { weights: map.weights.iter().map(|w| w * scale).collect(), ..map.clone() };
        let m = mask_from(seed, 8, 8);
        let a = attention_in_mask(&map, &m).unwrap();
        let b = attention_in_mask(&scaled, &m).unwrap();
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
        if map.total() > 0.0 {
            prop_assert_eq!(attention_in_mask(&map, &Mask::ones(8, 8)).unwrap(), Some(1.0));
        }
    }

    #[test]
    fn propagated_mask_is_binary_and_grows_boundedly(seed in any::<u64>()) {
        let m = mask_from(seed, 12, 12);
        let next = propagate_mask(&m, &image_from(seed, 12, 12), &image_from(seed ^ 7, 12, 12)).unwrap();
        prop_assert!(next.data().iter().all(|v| *v <= 1));
        prop_assert!(next.count() <= 9 * m.count().max(1));
        prop_assert!(next.count() >= m.count().min(1));
    }
}
