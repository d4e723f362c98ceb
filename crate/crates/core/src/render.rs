//! Binary PPM (P6) heatmaps of attribution maps.
//!
//! One pixel per bin; frequency increases upward and time to the right.
//! White is zero, red saturates at `+max|φ|` and blue at `-max|φ|`.

use std::path::Path;

use crate::analysis::AttributionMap;
use crate::error::{Error, Result};

/// Color of `value` on a diverging scale saturating at `±scale`.
pub fn diverging_rgb(value: f64, scale: f64) -> [u8; 3] {
    if scale <= 0.0 || value == 0.0 {
        return [255, 255, 255];
    }
    let t = (value / scale).clamp(-1.0, 1.0);
    let fade = (255.0 * (1.0 - t.abs())).round() as u8;
    if t > 0.0 {
        [255, fade, fade]
    } else {
        [fade, fade, 255]
    }
}

pub fn heatmap_ppm(map: &AttributionMap) -> Vec<u8> {
    let (bins, frames) = (map.bins(), map.frames());
    let scale = map.max_abs();
    let mut out = format!("P6\n{frames} {bins}\n255\n").into_bytes();
    out.reserve(bins * frames * 3);
    for m in (0..bins).rev() {
        for n in 0..frames {
            out.extend_from_slice(&diverging_rgb(map.get(m, n), scale));
        }
    }
    out
}

pub fn render_heatmap(map: &AttributionMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, heatmap_ppm(map)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapley::Method;
    use crate::signal::Axes;

    fn map(bins: usize, frames: usize, values: Vec<f64>) -> AttributionMap {
        AttributionMap::new(bins, frames, values, Axes::default(), 0, Method::Deepshap).unwrap()
    }

    fn pixels(ppm: &[u8], header: &str) -> Vec<[u8; 3]> {
        assert!(ppm.starts_with(header.as_bytes()));
        ppm[header.len()..]
            .chunks(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect()
    }

    #[test]
    fn zero_map_is_white() {
        let ppm = heatmap_ppm(&map(3, 4, vec![0.0; 12]));
        let px = pixels(&ppm, "P6\n4 3\n255\n");
        assert_eq!(px.len(), 12);
        assert!(px.iter().all(|p| *p == [255, 255, 255]));
    }

    #[test]
    fn single_positive_bin_is_one_red_pixel_with_frequency_upward() {
        let mut values = vec![0.0; 12];
        values[4 + 1] = 0.3; // bin 1, frame 1
        let px = pixels(&heatmap_ppm(&map(3, 4, values)), "P6\n4 3\n255\n");
        // bin 1 of 3 lands on the middle row
        for (i, p) in px.iter().enumerate() {
            let expected = if i == 4 + 1 {
                [255, 0, 0]
            } else {
                [255, 255, 255]
            };
            assert_eq!(*p, expected, "pixel {i}");
        }
        let mut top = vec![0.0; 6];
        top[2 * 2] = 1.0; // highest bin, first frame
        assert_eq!(
            pixels(&heatmap_ppm(&map(3, 2, top)), "P6\n2 3\n255\n")[0],
            [255, 0, 0]
        );
    }

    #[test]
    fn negation_swaps_red_and_blue() {
        let values: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        let neg: Vec<f64> = values.iter().map(|v| -v).collect();
        let header = "P6\n5 4\n255\n";
        let a = pixels(&heatmap_ppm(&map(4, 5, values)), header);
        let b = pixels(&heatmap_ppm(&map(4, 5, neg)), header);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(*p, [q[2], q[1], q[0]]);
        }
    }

    #[test]
    fn palette_midpoints() {
        assert_eq!(diverging_rgb(0.5, 1.0), [255, 128, 128]);
        assert_eq!(diverging_rgb(-0.25, 1.0), [191, 191, 255]);
        assert_eq!(diverging_rgb(-1.0, 1.0), [0, 0, 255]);
        assert_eq!(diverging_rgb(1.0, 0.0), [255, 255, 255]);
    }
}
