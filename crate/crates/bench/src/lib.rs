//! Deterministic inputs for the kernel benchmarks in `benches/`.

use silentspeech::audio::{autocorrelate, levinson_durbin};
use silentspeech::nn::Tensor;
use silentspeech::vision::ImageGray;
use silentspeech::LpcFrame;

/// Cheap reproducible pseudo-noise in `[-1, 1)` (xorshift64).
pub fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..len)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}

/// Two resonances over noise, shaped like a voiced speech frame.
pub fn speech_frame(len: usize, seed: u64) -> Vec<f64> {
    let n = noise(len, seed);
    (0..len)
        .map(|i| {
            let t = i as f64;
            0.4 * (0.31 * t).sin() + 0.2 * (1.17 * t).sin() + 0.05 * n[i]
        })
        .collect()
}

pub fn stable_lpc(order: usize, seed: u64) -> LpcFrame {
    let frame = speech_frame(640, seed);
    levinson_durbin(&autocorrelate(&frame, order)).frame
}

pub fn test_image(width: usize, height: usize, seed: u64) -> ImageGray {
    let n = noise(width * height, seed);
    let pixels = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            (128.0 + 60.0 * (x / 9.0).sin() * (y / 7.0).cos() + 20.0 * n[i]).clamp(0.0, 255.0) as u8
        })
        .collect();
    ImageGray::new(width, height, pixels).expect("pixel count matches")
}

pub fn tensor(shape: Vec<usize>, seed: u64) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, noise(len, seed)).expect("data length matches shape")
}
