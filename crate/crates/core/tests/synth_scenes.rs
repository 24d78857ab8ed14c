use ocd_core::synth::{generate, merge_roundtrip_error, recon_metrics, SceneSpec};
use ocd_core::tome::{apply_merge, build_plan, unmerge, MergeConfig, SearchMode, WindowSpec};
use ocd_core::{Dims, ForegroundMask, TokenGrid};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn lower_eta_protects_the_object() {
    let mut fg = (Vec::new(), Vec::new());
    let mut strict = 0;
    for seed in 0..12 {
        let scene = SceneSpec::high_contrast(Dims::new(2, 32, 32).unwrap(), 8, 12, seed);
        let (grid, mask) = generate(&scene).unwrap();
        let cfg = |eta| MergeConfig {
            r: 0.5,
            eta,
            seed,
            ..MergeConfig::default()
        };
        let low = merge_roundtrip_error(&grid, &mask, &cfg(0.1)).unwrap();
        let high = merge_roundtrip_error(&grid, &mask, &cfg(1.0)).unwrap();
        strict += usize::from(low.fg_mse < high.fg_mse);
        fg.0.push(low.fg_mse);
        fg.1.push(high.fg_mse);
    }
    assert!(strict >= 11);
    assert!(median(fg.0) < median(fg.1));
}

#[test]
fn error_is_zero_at_kept_positions() {
    let scene = SceneSpec::high_contrast(Dims::new(3, 16, 16).unwrap(), 4, 6, 5);
    let (grid, mask) = generate(&scene).unwrap();
    let plan = build_plan(&grid, &mask, &MergeConfig::default()).unwrap();
    let back = unmerge(&apply_merge(&grid, &plan).unwrap(), &plan).unwrap();
    let mut receives = vec![false; plan.dst.len()];
    for &(_, p) in &plan.merges {
        receives[p] = true;
    }
    let idle = plan.dst.iter().zip(&receives).filter(|(_, r)| !**r).map(|(d, _)| *d);
    for t in plan.unm.iter().copied().chain(idle) {
        assert_eq!(back.token(t), grid.token(t));
    }
}

/// Copy frame `f` out as a single-frame grid.
fn frame(grid: &TokenGrid, f: usize) -> TokenGrid {
    let d = grid.dims();
    let tpf = d.tokens_per_frame() * grid.channels();
    TokenGrid::new(
        Dims::new(1, d.height, d.width).unwrap(),
        grid.channels(),
        grid.data()[f * tpf..(f + 1) * tpf].to_vec(),
    )
    .unwrap()
}

#[test]
fn per_frame_windows_match_independent_frames() {
    // 16x16 frames with 2x2 cells: 192 sources per frame, so half of them is
    // a whole number and the global budget splits evenly.
    let mut scene = SceneSpec::high_contrast(Dims::new(3, 16, 16).unwrap(), 4, 6, 9);
    scene.temporal_noise = 0.0;
    let (grid, mask) = generate(&scene).unwrap();
    let cfg = MergeConfig {
        r: 0.5,
        window: WindowSpec { s_t: 1, s_y: 2, s_x: 2 },
        resample_per_window: false,
        seed: 3,
        ..MergeConfig::default()
    };
    let whole = merge_roundtrip_error(&grid, &mask, &cfg).unwrap();

    let single = Dims::new(1, 16, 16).unwrap();
    let frame_mask = ForegroundMask::from_fn(single, |_, y, x| mask.get(0, y, x));
    let one = frame(&grid, 0);
    let per_frame = merge_roundtrip_error(&one, &frame_mask, &cfg).unwrap();
    // Same errors, summed in a different order.
    assert!((whole.fg_mse - per_frame.fg_mse).abs() <= 1e-12 * per_frame.fg_mse);
    assert!((whole.bg_mse - per_frame.bg_mse).abs() <= 1e-12 * per_frame.bg_mse);

    // Frame by frame the reconstructions coincide exactly.
    let plan = build_plan(&grid, &mask, &cfg).unwrap();
    let back = unmerge(&apply_merge(&grid, &plan).unwrap(), &plan).unwrap();
    let fplan = build_plan(&one, &frame_mask, &cfg).unwrap();
    let fback = unmerge(&apply_merge(&one, &fplan).unwrap(), &fplan).unwrap();
    for f in 0..3 {
        assert_eq!(frame(&back, f), fback);
    }
}

#[test]
fn global_search_exploits_static_scenes() {
    for seed in 0..8 {
        let mut scene = SceneSpec::high_contrast(Dims::new(4, 16, 16).unwrap(), 4, 6, seed);
        scene.temporal_noise = 0.0;
        let (grid, mask) = generate(&scene).unwrap();
        let cfg = |search_mode| MergeConfig {
            r: 0.5,
            search_mode,
            seed,
            ..MergeConfig::default()
        };
        let wts = merge_roundtrip_error(&grid, &mask, &cfg(SearchMode::Wts)).unwrap();
        let gts = merge_roundtrip_error(&grid, &mask, &cfg(SearchMode::Gts)).unwrap();
        assert!(gts.total_mse <= wts.total_mse, "seed {seed}");
    }
}

#[test]
fn metrics_reject_mismatched_shapes() {
    let scene = SceneSpec::high_contrast(Dims::new(1, 4, 4).unwrap(), 2, 2, 0);
    let (grid, mask) = generate(&scene).unwrap();
    let other = TokenGrid::zeros(Dims::new(1, 4, 5).unwrap(), 2).unwrap();
    assert!(recon_metrics(&grid, &other, &mask).is_err());
}
