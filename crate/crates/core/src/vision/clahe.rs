//! Contrast limited adaptive histogram equalization.
//!
//! The image is split into a grid of tiles (the last row and column absorb
//! any remainder). Each tile's 256-bin histogram is clipped at
//! `clip_limit * tile_pixels / 256`, the excess is water-filled back into the
//! bins below the limit, and the clipped CDF becomes the tile's intensity map.
//! Pixels are mapped by bilinear interpolation between the four nearest tile
//! centres. A tile holding a single intensity maps to itself.

use super::{ClaheConfig, ImageGray};
use crate::error::{Error, Result};

/// `[start, end)` of each tile along one axis.
pub fn tile_bounds(len: usize, tiles: usize) -> Vec<(usize, usize)> {
    let size = len / tiles;
    (0..tiles)
        .map(|i| {
            let end = if i + 1 == tiles { len } else { (i + 1) * size };
            (i * size, end)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClippedHistogram {
    pub bins: [u32; 256],
    /// Per-bin clip limit in counts.
    pub limit: u32,
    pub tile_pixels: u32,
    /// The unclipped tile held a single intensity.
    pub constant: bool,
}

fn clip_limit_counts(tile_pixels: u32, clip: f64) -> u32 {
    ((clip * tile_pixels as f64 / 256.0).floor() as u32).max(1)
}

/// Clips at `limit` and redistributes the excess. Bins end at or below
/// `limit`, except when every bin is full and the last `< 256` counts are
/// spread one per bin.
fn clip_histogram(bins: &mut [u32; 256], limit: u32) {
    let mut excess: u64 = 0;
    for b in bins.iter_mut() {
        if *b > limit {
            excess += (*b - limit) as u64;
            *b = limit;
        }
    }
    while excess > 0 {
        let room: Vec<usize> = (0..256).filter(|&i| bins[i] < limit).collect();
        let targets: Vec<usize> = if room.is_empty() {
            (0..256).collect()
        } else {
            room
        };
        let share = excess / targets.len() as u64;
        if share == 0 || bins[targets[0]] >= limit {
            // spread the last few counts evenly across the targets
            let n = excess as usize;
            let stride = targets.len() / n;
            for j in 0..n {
                bins[targets[j * stride]] += 1;
            }
            return;
        }
        for &i in &targets {
            let add = (share as u32).min(limit - bins[i]);
            bins[i] += add;
            excess -= add as u64;
        }
    }
}

fn tile_histogram(img: &ImageGray, xr: (usize, usize), yr: (usize, usize), clip: f64) -> ClippedHistogram {
    let mut bins = [0u32; 256];
    for y in yr.0..yr.1 {
        for &p in &img.pixels()[y * img.width() + xr.0..y * img.width() + xr.1] {
            bins[p as usize] += 1;
        }
    }
    let tile_pixels = ((xr.1 - xr.0) * (yr.1 - yr.0)) as u32;
    let constant = bins.iter().filter(|&&c| c > 0).count() == 1;
    let limit = clip_limit_counts(tile_pixels, clip);
    clip_histogram(&mut bins, limit);
    ClippedHistogram {
        bins,
        limit,
        tile_pixels,
        constant,
    }
}

fn check_size(img: &ImageGray, config: &ClaheConfig) -> Result<()> {
    config.validate()?;
    if img.width() < config.tiles_x || img.height() < config.tiles_y {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            tiles_x: config.tiles_x,
            tiles_y: config.tiles_y,
        });
    }
    Ok(())
}

/// Clipped histograms of every tile, row-major over the tile grid.
pub fn clipped_tile_histograms(img: &ImageGray, config: &ClaheConfig) -> Result<Vec<ClippedHistogram>> {
    check_size(img, config)?;
    let xs = tile_bounds(img.width(), config.tiles_x);
    let ys = tile_bounds(img.height(), config.tiles_y);
    Ok(ys
        .iter()
        .flat_map(|&yr| xs.iter().map(move |&xr| (xr, yr)))
        .map(|(xr, yr)| tile_histogram(img, xr, yr, config.clip_limit))
        .collect())
}

fn tile_map(hist: &ClippedHistogram) -> [u8; 256] {
    let mut map = [0u8; 256];
    if hist.constant {
        for (v, m) in map.iter_mut().enumerate() {
            *m = v as u8;
        }
        return map;
    }
    let mut cdf = [0u64; 256];
    let mut acc = 0u64;
    for (c, &b) in cdf.iter_mut().zip(&hist.bins) {
        acc += b as u64;
        *c = acc;
    }
    let total = acc;
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if cdf_min == total {
        for (v, m) in map.iter_mut().enumerate() {
            *m = v as u8;
        }
        return map;
    }
    let denom = (total - cdf_min) as f64;
    for (m, &c) in map.iter_mut().zip(&cdf) {
        let v = (c.saturating_sub(cdf_min)) as f64 / denom * 255.0;
        *m = v.round().clamp(0.0, 255.0) as u8;
    }
    map
}

/// Interpolation table along one axis: for each coordinate, the two tile
/// indices to blend and the weight of the second.
fn axis_weights(len: usize, bounds: &[(usize, usize)]) -> Vec<(usize, usize, f64)> {
    let centres: Vec<f64> = bounds
        .iter()
        .map(|&(s, e)| (s + e - 1) as f64 / 2.0)
        .collect();
    let last = centres.len() - 1;
    (0..len)
        .map(|p| {
            let p = p as f64;
            if p <= centres[0] {
                (0, 0, 0.0)
            } else if p >= centres[last] {
                (last, last, 0.0)
            } else {
                let i = centres.iter().rposition(|&c| c <= p).unwrap();
                let w = (p - centres[i]) / (centres[i + 1] - centres[i]);
                (i, i + 1, w)
            }
        })
        .collect()
}

pub fn clahe(img: &ImageGray, config: &ClaheConfig) -> Result<ImageGray> {
    let hists = clipped_tile_histograms(img, config)?;
    let maps: Vec<[u8; 256]> = hists.iter().map(tile_map).collect();
    let tx = config.tiles_x;
    let wx = axis_weights(img.width(), &tile_bounds(img.width(), tx));
    let wy = axis_weights(img.height(), &tile_bounds(img.height(), config.tiles_y));

    let mut out = Vec::with_capacity(img.pixels().len());
    for (y, &(ty0, ty1, fy)) in wy.iter().enumerate() {
        for (x, &(tx0, tx1, fx)) in wx.iter().enumerate() {
            let v = img.get(x, y) as usize;
            let m = |ty: usize, txi: usize| maps[ty * tx + txi][v] as f64;
            let top = m(ty0, tx0) * (1.0 - fx) + m(ty0, tx1) * fx;
            let bottom = m(ty1, tx0) * (1.0 - fx) + m(ty1, tx1) * fx;
            let blended = top * (1.0 - fy) + bottom * fy;
            out.push(blended.round().clamp(0.0, 255.0) as u8);
        }
    }
    ImageGray::new(img.width(), img.height(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook global histogram equalization with the same CDF
    /// normalization, computed independently of the tile machinery.
    fn equalize_oracle(img: &ImageGray) -> Vec<u8> {
        let n = img.pixels().len() as f64;
        let mut counts = vec![0.0; 256];
        for &p in img.pixels() {
            counts[p as usize] += 1.0;
        }
        let cdf_of = |v: u8| counts[..=v as usize].iter().sum::<f64>();
        let cdf_min = cdf_of(*img.pixels().iter().min().unwrap());
        img.pixels()
            .iter()
            .map(|&p| ((cdf_of(p) - cdf_min) / (n - cdf_min) * 255.0).round() as u8)
            .collect()
    }

    #[test]
    fn tile_bounds_absorb_remainder() {
        assert_eq!(tile_bounds(10, 3), vec![(0, 3), (3, 6), (6, 10)]);
        assert_eq!(tile_bounds(8, 8).len(), 8);
    }

    #[test]
    fn constant_image_is_unchanged() {
        for v in [0u8, 17, 128, 255] {
            let img = ImageGray::filled(40, 33, v);
            assert_eq!(clahe(&img, &ClaheConfig::default()).unwrap(), img);
        }
    }

    #[test]
    fn single_tile_unclipped_is_plain_equalization() {
        let mut pixels = vec![0u8; 32 * 32];
        pixels[512..].fill(255);
        let img = ImageGray::new(32, 32, pixels).unwrap();
        let cfg = ClaheConfig {
            tiles_x: 1,
            tiles_y: 1,
            clip_limit: 1e9,
        };
        let out = clahe(&img, &cfg).unwrap();
        assert_eq!(out.pixels(), equalize_oracle(&img).as_slice());
        assert_eq!(out.get(0, 0), 0);
        assert_eq!(out.get(0, 31), 255);

        let pixels: Vec<u8> = (0..32 * 32).map(|i| ((i * i) % 97) as u8 + 40).collect();
        let img = ImageGray::new(32, 32, pixels).unwrap();
        assert_eq!(clahe(&img, &cfg).unwrap().pixels(), equalize_oracle(&img).as_slice());
    }

    #[test]
    fn clipping_preserves_mass_and_respects_limit() {
        let pixels: Vec<u8> = (0..50 * 50).map(|i| if i % 7 == 0 { 200 } else { 30 }).collect();
        let img = ImageGray::new(50, 50, pixels).unwrap();
        let cfg = ClaheConfig {
            tiles_x: 3,
            tiles_y: 2,
            clip_limit: 1.0,
        };
        for h in clipped_tile_histograms(&img, &cfg).unwrap() {
            assert_eq!(h.bins.iter().sum::<u32>(), h.tile_pixels);
            assert!(h.bins.iter().all(|&b| b <= h.limit + 1));
        }
    }

    #[test]
    fn too_small() {
        let img = ImageGray::filled(4, 20, 3);
        assert!(matches!(
            clahe(&img, &ClaheConfig::default()),
            Err(Error::ImageTooSmall { .. })
        ));
    }
}
