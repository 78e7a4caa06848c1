use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use silentspeech::audio::{autocorrelate, levinson_durbin, lpc_to_lsp, lsp_to_lpc};
use silentspeech::multiview::ViewId;
use silentspeech::nn::{conv2d_forward, AdamConfig, LossConfig, Network, NetworkSpec, Sample, Trainer};
use silentspeech::vision::clahe;
use silentspeech::ClaheConfig;
use silentspeech_bench::{speech_frame, stable_lpc, tensor, test_image};

fn levinson(c: &mut Criterion) {
    let frame = speech_frame(1066, 1);
    c.bench_function("autocorrelate+levinson p16 n1066", |b| {
        b.iter(|| levinson_durbin(&autocorrelate(black_box(&frame), 16)))
    });
}

fn lsp(c: &mut Criterion) {
    let lpc = stable_lpc(16, 2);
    let lsp = lpc_to_lsp(&lpc).unwrap();
    c.bench_function("lpc_to_lsp p16", |b| b.iter(|| lpc_to_lsp(black_box(&lpc)).unwrap()));
    c.bench_function("lsp_to_lpc p16", |b| b.iter(|| lsp_to_lpc(black_box(&lsp)).unwrap()));
}

fn contrast(c: &mut Criterion) {
    let img = test_image(64, 64, 3);
    let cfg = ClaheConfig::default();
    c.bench_function("clahe 64x64 8x8 tiles", |b| b.iter(|| clahe(black_box(&img), &cfg).unwrap()));
}

fn conv(c: &mut Criterion) {
    let input = tensor(vec![1, 64, 64], 4);
    let weight = tensor(vec![8, 1, 5, 5], 5);
    let bias = tensor(vec![8], 6);
    c.bench_function("conv 1x64x64 -> 8x5x5 stride 2", |b| {
        b.iter(|| conv2d_forward(black_box(&input), &weight, &bias, 2).unwrap())
    });
}

fn train_step(c: &mut Criterion) {
    let spec = NetworkSpec::new(vec![ViewId::V1, ViewId::V2], 16);
    let mut net = Network::new(spec.clone(), 7).unwrap();
    let frames: Vec<Vec<_>> = (0..2)
        .map(|v| (0..spec.timesteps).map(|t| tensor(vec![64, 64], 100 + 10 * v + t as u64)).collect())
        .collect();
    let batch: Vec<Sample> = (0..4)
        .map(|i| Sample {
            id: format!("s{i}"),
            frames: frames.iter().map(|v| v.iter().collect()).collect(),
            target: (0..=16).map(|k| (k as f64 + 0.5 + i as f64 * 0.1) / 18.0).collect(),
        })
        .collect();
    let mut trainer = Trainer::new(&net, AdamConfig::default(), LossConfig::default()).unwrap();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("step batch 4, 2 views, 64x64, T=5", |b| {
        b.iter(|| trainer.step(&mut net, black_box(&batch)).unwrap())
    });
    group.finish();
}

criterion_group!(kernels, levinson, lsp, contrast, conv, train_step);
criterion_main!(kernels);
