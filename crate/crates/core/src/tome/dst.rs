use rand::Rng;

use super::WindowSpec;
use crate::rng;
use crate::tensor::Dims;

/// Pick one destination token per `s_t x s_y x s_x` cell.
///
/// Strides larger than the grid are clamped; partial cells at the edges still
/// get a destination. With `resample_per_window` off every temporal window
/// reuses the offsets drawn for the first one. Returns ascending flat indices.
pub fn sample_dst(dims: Dims, window: WindowSpec, resample_per_window: bool, seed: u64) -> Vec<usize> {
    let s_t = window.s_t.clamp(1, dims.frames);
    let s_y = window.s_y.clamp(1, dims.height);
    let s_x = window.s_x.clamp(1, dims.width);
    let windows = dims.frames.div_ceil(s_t);
    let cells_y = dims.height.div_ceil(s_y);
    let cells_x = dims.width.div_ceil(s_x);

    let mut out = Vec::with_capacity(windows * cells_y * cells_x);
    for w in 0..windows {
        let key = if resample_per_window { w as u64 } else { 0 };
        let mut rng = rng::stream(seed, "dst", key);
        let frames_here = s_t.min(dims.frames - w * s_t);
        for cy in 0..cells_y {
            let rows_here = s_y.min(dims.height - cy * s_y);
            for cx in 0..cells_x {
                let cols_here = s_x.min(dims.width - cx * s_x);
                let df = rng.random_range(0..s_t) % frames_here;
                let dy = rng.random_range(0..s_y) % rows_here;
                let dx = rng.random_range(0..s_x) % cols_here;
                out.push(dims.index(w * s_t + df, cy * s_y + dy, cx * s_x + dx));
            }
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn one_per_spatial_cell() {
        let d = Dims::new(1, 4, 4).unwrap();
        let dst = sample_dst(d, WindowSpec { s_t: 1, s_y: 2, s_x: 2 }, true, 3);
        assert_eq!(dst.len(), 4);
        let cells: HashSet<_> = dst
            .iter()
            .map(|&t| {
                let (_, y, x) = d.coords(t);
                (y / 2, x / 2)
            })
            .collect();
        assert_eq!(cells.len(), 4);
    }

    #[test]
    fn one_per_spatio_temporal_cell_with_remainders() {
        let d = Dims::new(5, 5, 7).unwrap();
        let win = WindowSpec { s_t: 2, s_y: 2, s_x: 3 };
        let dst = sample_dst(d, win, true, 9);
        assert_eq!(dst.len(), 3 * 3 * 3);
        let cells: HashSet<_> = dst
            .iter()
            .map(|&t| {
                let (f, y, x) = d.coords(t);
                (f / 2, y / 2, x / 3)
            })
            .collect();
        assert_eq!(cells.len(), dst.len());
    }

    #[test]
    fn offsets_shared_without_resampling() {
        let d = Dims::new(4, 8, 8).unwrap();
        let dst = sample_dst(d, WindowSpec { s_t: 1, s_y: 4, s_x: 4 }, false, 21);
        let per_frame: Vec<Vec<(usize, usize)>> = (0..4)
            .map(|f| {
                dst.iter()
                    .map(|&t| d.coords(t))
                    .filter(|c| c.0 == f)
                    .map(|(_, y, x)| (y, x))
                    .collect()
            })
            .collect();
        assert!(per_frame.windows(2).all(|w| w[0] == w[1]));

        let resampled = sample_dst(d, WindowSpec { s_t: 1, s_y: 4, s_x: 4 }, true, 21);
        let f0: Vec<_> = resampled
            .iter()
            .filter(|&&t| d.frame_of(t) == 0)
            .map(|&t| t % 64)
            .collect();
        let differs = (1..4).any(|f| {
            let ff: Vec<_> = resampled
                .iter()
                .filter(|&&t| d.frame_of(t) == f)
                .map(|&t| t % 64)
                .collect();
            ff != f0
        });
        assert!(differs);
    }

    #[test]
    fn deterministic_and_clamped() {
        let d = Dims::new(2, 3, 3).unwrap();
        let w = WindowSpec { s_t: 9, s_y: 9, s_x: 9 };
        assert_eq!(sample_dst(d, w, true, 5), sample_dst(d, w, true, 5));
        assert_eq!(sample_dst(d, w, true, 5).len(), 1);
    }
}
