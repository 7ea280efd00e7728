//! Sequential vs rayon sweep over the speech-to-text Fig. 4(a) grid.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use csd_sim::simulator::sweep_sequential;
use csd_sim::workload::builtin_profile;
use csd_sim::{ClusterConfig, SchedulerConfig};

const BATCHES: [u64; 4] = [2, 4, 6, 8];
const CSDS: [usize; 10] = [0, 4, 8, 12, 16, 20, 24, 28, 32, 36];

fn bench_sweep(c: &mut Criterion) {
    let profile = builtin_profile("speech_to_text").unwrap().with_total_items(20_000);
    let cluster = ClusterConfig::new(36).unwrap();
    let cfg = SchedulerConfig::new(6, 20.0);

    let mut group = c.benchmark_group("speech_sweep_40_cells");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(sweep_sequential(&cluster, &profile, &cfg, &BATCHES, &CSDS).unwrap()))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("rayon", |b| {
        b.iter(|| {
            black_box(csd_sim::simulator::sweep_parallel(&cluster, &profile, &cfg, &BATCHES, &CSDS).unwrap())
        })
    });
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
