//! Replays the checked-in fuzz seeds through the same checks the fuzz
//! targets make, so the corpus stays meaningful on a stable toolchain.

use std::path::PathBuf;

use ocd_core::costmodel::{attention_map_storage, merged_storage, Fraction, ModelSpec};
use ocd_core::sampler::{make_bg_schedule, make_schedule, SamplerConfig};
use ocd_core::tome::{replay, unmerge, MergePlan};
use ocd_core::{ForegroundMask, TokenGrid};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Runs `check` on every seed and returns the names it accepted.
fn accepted(target: &str, check: impl Fn(&[u8]) -> bool) -> Vec<String> {
    seeds(target)
        .into_iter()
        .filter(|(_, data)| check(data))
        .map(|(name, _)| name)
        .collect()
}

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

#[test]
fn grid_seeds() {
    let ok = accepted("decode_grid", |data| match TokenGrid::from_bytes(data) {
        Ok(grid) => {
            assert_eq!(grid.to_bytes().unwrap(), data);
            true
        }
        Err(_) => false,
    });
    assert_eq!(ok, ["multi_frame", "small"]);
}

#[test]
fn mask_seeds() {
    let ok = accepted("decode_mask", |data| match ForegroundMask::from_bytes(data) {
        Ok(mask) => {
            assert_eq!(ForegroundMask::from_bytes(&mask.to_bytes().unwrap()).unwrap(), mask);
            true
        }
        Err(_) => false,
    });
    assert_eq!(ok, ["square", "two_frames"]);
}

#[test]
fn plan_seeds() {
    let ok = accepted("parse_plan", |data| {
        let Some(plan) = text(data).and_then(|t| MergePlan::from_json(t).ok()) else {
            return false;
        };
        let grid = TokenGrid::from_fn(plan.dims, 2, |f, y, x, c| (f + y + x + c) as f64 + 1.0).unwrap();
        match replay(&plan, &grid) {
            Ok(merged) => {
                unmerge(&merged, &plan).unwrap();
                true
            }
            Err(_) => false,
        }
    });
    assert_eq!(ok, ["merged", "two_destinations"]);
}

#[test]
fn sampler_config_seeds() {
    let ok = accepted("parse_sampler_config", |data| {
        let Some(cfg) = text(data).and_then(|t| SamplerConfig::from_json(t).ok()) else {
            return false;
        };
        if cfg.validate().is_err() {
            return false;
        }
        make_schedule(cfg.train_steps, cfg.steps).unwrap();
        make_bg_schedule(cfg.train_steps, cfg.steps, cfg.phi, cfg.gamma).unwrap();
        true
    });
    assert_eq!(ok, ["default", "fractional_phi", "skip", "split"]);
}

#[test]
fn model_spec_seeds() {
    let ok = accepted("parse_model_spec", |data| {
        let Some(model) = text(data).and_then(|t| ModelSpec::from_json(t).ok()) else {
            return false;
        };
        let half = Fraction::new(1, 2).unwrap();
        assert!(merged_storage(&model, 50, half, half) <= attention_map_storage(&model, 50));
        true
    });
    assert_eq!(ok, ["empty", "fatezero_like"]);
}

#[test]
fn fraction_seeds() {
    let ok = accepted("parse_fraction", |data| {
        let Some(f) = text(data).and_then(|t| t.parse::<Fraction>().ok()) else {
            return false;
        };
        assert_eq!(f.to_string().parse::<Fraction>().unwrap(), f);
        true
    });
    assert_eq!(ok, ["seed0", "seed1", "seed2", "seed7"]);
}
