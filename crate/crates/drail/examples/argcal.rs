//! Trains one policy per preset (cached under $CACHE) and prints ARG of the
//! drail and no-dual encoders under raw and standardized features.
//!
//! `cargo run --release -p drail --example argcal` with SEED, ARG (resamplings),
//! SGDLR (in units of 1e-3) and VARIANTS (comma list) as optional env vars.

use std::path::PathBuf;
use std::time::Instant;

use drail::{checkpoint, config, exec};
use drail_core::arg::{FeatureExtractor, Optimizer, RndConfig};
use drail_core::bench::{BcHyper, BenchConfig, Env};
use drail_core::stats::paired_t_test;

fn env_u64(k: &str, d: u64) -> u64 {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn main() {
    let seed = env_u64("SEED", 0);
    let n = env_u64("ARG", 20) as usize;
    let cache = PathBuf::from(std::env::var("CACHE").unwrap_or("/tmp/argcal".into()));
    std::fs::create_dir_all(&cache).unwrap();
    let cfg = BenchConfig::default();
    let demo = exec::generate_episodes(40, Env::Demo, 1, &cfg).unwrap();
    let test = exec::generate_episodes(20, Env::Test, 2, &cfg).unwrap();
    let dobs: Vec<_> = demo.episodes.iter().flat_map(|e| e.frames.iter().map(|f| &f.observation)).collect();
    let tobs: Vec<_> = test.episodes.iter().flat_map(|e| e.frames.iter().map(|f| &f.observation)).collect();
    let mut policies = Vec::new();
    for name in config::PRESETS {
        let path = cache.join(format!("{name}_{seed}.bin"));
        let p = if path.exists() {
            checkpoint::load(&path).unwrap()
        } else {
            let t = Instant::now();
            let plan = config::preset(name, 100 + seed).unwrap().build(64).unwrap();
            let data = match name {
                "no-dual" => demo.clone(),
                _ => exec::augment_dataset(&demo, &plan, 2).unwrap().dataset,
            };
            let mut out = exec::train_bc(&data, &BcHyper { seed, ..BcHyper::default() }).unwrap();
            out.policy.round_to_f32();
            checkpoint::save(&out.policy, &path).unwrap();
            eprintln!("{name}: trained in {:.1}s", t.elapsed().as_secs_f64());
            out.policy
        };
        policies.push((name, p));
    }
    let sgd_lr = env_u64("SGDLR", 1) as f64 * 1e-3;
    let variants = [
        ("raw-adam", RndConfig { optimizer: Optimizer::Adam, standardize: false, ..RndConfig::default() }),
        ("std-adam", RndConfig { optimizer: Optimizer::Adam, standardize: true, ..RndConfig::default() }),
        ("raw-sgd", RndConfig { optimizer: Optimizer::Sgd, standardize: false, lr: sgd_lr, ..RndConfig::default() }),
        ("std-sgd", RndConfig { optimizer: Optimizer::Sgd, standardize: true, lr: sgd_lr, ..RndConfig::default() }),
    ];
    let only = std::env::var("VARIANTS").unwrap_or_default();
    for (vname, rc) in variants {
        if !only.is_empty() && !only.split(',').any(|v| v == vname) {
            continue;
        }
        let mut vals = Vec::new();
        for (name, p) in policies.iter().filter(|(n, _)| *n == "drail" || *n == "no-dual") {
            let ex = FeatureExtractor::TinyPolicyEncoder(p.clone());
            let r = exec::arg_protocol(&ex, &dobs, &tobs, n, 9, &rc).unwrap();
            println!("{vname} {name:8} arg {:.5} ± {:.5}", r.mean, r.std);
            vals.push(r.values);
        }
        let t = paired_t_test(&vals[0], &vals[1]).unwrap();
        println!("{vname} drail-no_dual diff {:.5} p {:.4}", t.mean_diff, t.p);
    }
}
