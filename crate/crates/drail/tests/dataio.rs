use std::fs;
use std::path::Path;

use drail::dataio::{self, load_dataset, save_dataset};
use drail::Error;
use drail_core::dataset::{Dataset, DatasetMeta, Episode, Frame};
use drail_core::{Image, Mask};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn meta(h: usize, w: usize) -> DatasetMeta {
    DatasetMeta { height: h, width: w, channels: 3, state_dim: 2, action_dim: 2 }
}

fn random_episode(id: &str, n: usize, h: usize, w: usize, seed: u64) -> Episode {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..n)
        .map(|_| Frame {
            observation: Image::from_fn(h, w, 3, |_, _, _| r.random::<f32>()),
            mask: Some(Mask::from_fn(h, w, |_, _| r.random::<bool>())),
        })
        .collect();
    let mut row = || vec![r.random::<f64>() * 10.0 - 5.0, r.random::<f64>() * 1e-9];
    let states = (0..n).map(|_| row()).collect();
    let actions = (0..n).map(|_| row()).collect();
    Episode { id: id.into(), frames, states, actions }
}

fn write_png(path: &Path, w: u32, h: u32, bytes: &[u8], color: image::ExtendedColorType) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    image::save_buffer(path, bytes, w, h, color).unwrap();
}

fn write_raw_episode(dir: &Path, n: usize, rows: usize) {
    for i in 0..n {
        write_png(&dir.join("frames").join(dataio::frame_name(i)), 4, 4, &[i as u8 * 10; 48], image::ExtendedColorType::Rgb8);
    }
    let csv: String = (0..rows).map(|i| format!("{i},{}\n", i as f64 * 0.5)).collect();
    fs::write(dir.join("states.csv"), &csv).unwrap();
    fs::write(dir.join("actions.csv"), &csv).unwrap();
}

#[test]
fn empty_root_gives_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let d = load_dataset(dir.path()).unwrap();
    assert!(d.episodes.is_empty());
    assert_eq!(d.frame_count(), 0);
}

#[test]
fn five_frame_episode_without_meta() {
    let dir = tempfile::tempdir().unwrap();
    write_raw_episode(&dir.path().join("run_a"), 5, 5);
    let d = load_dataset(dir.path()).unwrap();
    assert_eq!(d.episodes.len(), 1);
    let ep = &d.episodes[0];
    assert_eq!(ep.id, "run_a");
    assert_eq!((ep.frames.len(), ep.states.len(), ep.actions.len()), (5, 5, 5));
    assert_eq!(ep.states[3], vec![3.0, 1.5]);
    assert!(ep.frames.iter().all(|f| f.mask.is_none()));
    assert_eq!(d.meta, DatasetMeta { height: 4, width: 4, channels: 3, state_dim: 2, action_dim: 2 });
}

#[test]
fn mask_values_binarize_on_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.png");
    write_png(&path, 3, 1, &[0, 128, 255], image::ExtendedColorType::L8);
    let m = dataio::read_mask(&path).unwrap();
    assert_eq!(m.data(), &[0, 1, 1]);
    let one = dir.path().join("one.png");
    write_png(&one, 2, 1, &[0, 1], image::ExtendedColorType::L8);
    assert_eq!(dataio::read_mask(&one).unwrap().data(), &[0, 1]);
}

#[test]
fn row_count_mismatch_is_an_episode_error() {
    let dir = tempfile::tempdir().unwrap();
    write_raw_episode(&dir.path().join("bad"), 5, 4);
    let err = load_dataset(dir.path()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("bad") && msg.contains("5 frames"), "{msg}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn unreadable_file_reports_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let ep = dir.path().join("e");
    write_raw_episode(&ep, 2, 2);
    fs::write(ep.join("frames").join(dataio::frame_name(1)), b"not a png").unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Image { .. }), "{err:?}");
    assert!(err.to_string().contains("000001.png"), "{err}");
}

#[test]
fn gap_in_frame_numbering_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ep = dir.path().join("e");
    write_raw_episode(&ep, 3, 3);
    fs::rename(ep.join("frames/000001.png"), ep.join("frames/000007.png")).unwrap();
    assert!(load_dataset(dir.path()).is_err());
}

#[test]
fn missing_masks_are_propagated_from_the_previous_frame() {
    let dir = tempfile::tempdir().unwrap();
    let ep = dir.path().join("e");
    write_raw_episode(&ep, 3, 3);
    let mut first = vec![0u8; 16];
    first[5] = 255;
    write_png(&ep.join("masks").join(dataio::frame_name(0)), 4, 4, &first, image::ExtendedColorType::L8);
    let d = load_dataset(dir.path()).unwrap();
    let masks: Vec<_> = d.episodes[0].frames.iter().map(|f| f.mask.clone().unwrap()).collect();
    assert_eq!(masks[0].count(), 1);
    assert!(masks[1].count() > 1 && masks[1].get(1, 1));
    assert!(masks[2].count() >= masks[1].count());
}

#[test]
fn frames_before_the_first_mask_stay_unmasked() {
    let dir = tempfile::tempdir().unwrap();
    let ep = dir.path().join("e");
    write_raw_episode(&ep, 2, 2);
    write_png(&ep.join("masks").join(dataio::frame_name(1)), 4, 4, &[255; 16], image::ExtendedColorType::L8);
    let d = load_dataset(dir.path()).unwrap();
    assert!(d.episodes[0].frames[0].mask.is_none());
    assert_eq!(d.episodes[0].frames[1].mask.as_ref().unwrap().count(), 16);
}

#[test]
fn unsafe_episode_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for id in ["a/b", "..", "", "a\\b", "meta.json"] {
        let d = Dataset { episodes: vec![random_episode(id, 1, 4, 4, 0)], meta: meta(4, 4) };
        let err = save_dataset(&d, dir.path(), None).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{id:?}");
    }
    assert!(dataio::list_files(dir.path()).unwrap().is_empty());
}

#[test]
fn meta_json_fixes_episode_order() {
    let dir = tempfile::tempdir().unwrap();
    let eps = vec![random_episode("zeta", 2, 4, 4, 1), random_episode("alpha", 2, 4, 4, 2)];
    save_dataset(&Dataset { episodes: eps, meta: meta(4, 4) }, dir.path(), None).unwrap();
    let d = load_dataset(dir.path()).unwrap();
    let ids: Vec<_> = d.episodes.iter().map(|e| e.id.as_str()).collect();
    assert_eq!(ids, ["zeta", "alpha"]);
}

fn assert_roundtrip(d: &Dataset, back: &Dataset) {
    assert_eq!(back.meta, d.meta);
    assert_eq!(back.episodes.len(), d.episodes.len());
    for (a, b) in d.episodes.iter().zip(&back.episodes) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.states, b.states);
        assert_eq!(a.actions, b.actions);
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.mask, fb.mask);
            let worst = fa
                .observation
                .data()
                .iter()
                .zip(fb.observation.data())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f32, f32::max);
            assert!(worst <= 1.0 / 255.0, "quantization error {worst}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn save_load_roundtrip(seed in any::<u64>(), n_eps in 1usize..4, n_frames in 1usize..4, h in 2usize..9, w in 2usize..9) {
        let dir = tempfile::tempdir().unwrap();
        let eps = (0..n_eps).map(|i| random_episode(&format!("ep{i}"), n_frames, h, w, seed ^ i as u64)).collect();
        let d = Dataset { episodes: eps, meta: meta(h, w) };
        save_dataset(&d, dir.path(), None).unwrap();
        assert_roundtrip(&d, &load_dataset(dir.path()).unwrap());
    }
}
