use super::ImageGray;

/// Bilinear resize with pixel-centre alignment and edge clamping.
pub fn resize_bilinear(img: &ImageGray, out_w: usize, out_h: usize) -> ImageGray {
    assert!(out_w >= 1 && out_h >= 1, "target size must be positive");
    if out_w == img.width() && out_h == img.height() {
        return img.clone();
    }
    let sample_axis = |out: usize, len: usize| -> Vec<(usize, usize, f64)> {
        let scale = len as f64 / out as f64;
        (0..out)
            .map(|d| {
                let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(len - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let xs = sample_axis(out_w, img.width());
    let ys = sample_axis(out_h, img.height());
    let mut pixels = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let p = |x, y| img.get(x, y) as f64;
            let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
            let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    ImageGray::new(out_w, out_h, pixels).expect("sized by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let pixels: Vec<u8> = (0..64 * 64).map(|i| (i % 256) as u8).collect();
        let img = ImageGray::new(64, 64, pixels).unwrap();
        assert_eq!(resize_bilinear(&img, 64, 64), img);
    }

    #[test]
    fn upsampled_ramp_is_monotone() {
        let img = ImageGray::new(2, 1, vec![0, 255]).unwrap();
        let out = resize_bilinear(&img, 4, 1);
        assert!(out.pixels().windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(out.pixels()[0], 0);
        assert_eq!(out.pixels()[3], 255);
    }

    #[test]
    fn constant_stays_constant() {
        let img = ImageGray::filled(13, 7, 91);
        for (w, h) in [(1, 1), (5, 40), (64, 64), (100, 3)] {
            let out = resize_bilinear(&img, w, h);
            assert_eq!((out.width(), out.height()), (w, h));
            assert!(out.pixels().iter().all(|&p| p == 91));
        }
    }
}
