//! End-to-end decode throughput for each strategy on a mid-agreement
//! synthetic pair, plus scaling points for vocabulary size and threshold.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use specasr_core::{
    decode, synthetic_pair, AgreementProfile, Sequence, StrategyConfig, StrategyKind,
    SyntheticDraft, SyntheticTarget,
};

fn pair(seed: u64, vocab: u32) -> (SyntheticTarget, SyntheticDraft) {
    synthetic_pair(seed, vocab, 4, AgreementProfile::new(0.9, 0.7, 2.0).unwrap()).unwrap()
}

fn cfg(kind: StrategyKind, max_out: usize) -> StrategyConfig {
    let mut c = StrategyConfig::new(kind);
    c.max_output_len = max_out;
    c
}

fn strategies(c: &mut Criterion) {
    let mut group = c.benchmark_group("decode_200_tokens");
    let (target, draft) = pair(7, 256);
    for kind in StrategyKind::ALL {
        group.bench_function(kind.name(), |b| {
            let c = cfg(kind, 200);
            b.iter(|| {
                let out = decode(&draft, &target, &Sequence::empty(), &c).unwrap();
                black_box(out)
            });
        });
    }
    group.finish();
}

fn vocab_scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("adaptive_vocab_scaling");
    for vocab in [64u32, 256, 1024, 4096] {
        let (target, draft) = pair(7, vocab);
        group.bench_with_input(BenchmarkId::from_parameter(vocab), &vocab, |b, _| {
            let c = cfg(StrategyKind::Asp, 200);
            b.iter(|| {
                let out = decode(&draft, &target, &Sequence::empty(), &c).unwrap();
                black_box(out)
            });
        });
    }
    group.finish();
}

fn threshold_sensitivity(c: &mut Criterion) {
    let mut group = c.benchmark_group("adaptive_threshold");
    let (target, draft) = pair(7, 256);
    for tau in [0.0, 0.4, 0.8] {
        group.bench_with_input(BenchmarkId::from_parameter(tau), &tau, |b, &tau| {
            let mut c = cfg(StrategyKind::Asp, 200);
            c.tau = tau;
            b.iter(|| {
                let out = decode(&draft, &target, &Sequence::empty(), &c).unwrap();
                black_box(out)
            });
        });
    }
    group.finish();
}

criterion_group!(benches, strategies, vocab_scaling, threshold_sensitivity);
criterion_main!(benches);
