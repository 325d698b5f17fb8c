use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use ghostbohm::evolve::evolve_packet;
use ghostbohm::parallel::Execution;
use ghostbohm::scenario::preset;
use ghostbohm::trajectories::{propagate_ensemble, sample_ensemble};

const SIZES: [usize; 3] = [16, 64, 256];

fn ensemble(c: &mut Criterion) {
    let mut scenario = preset("fig3").expect("preset");
    scenario.grid.t_end = 20.0;
    let model = match scenario.resolve_model().expect("model") {
        ghostbohm::scenario::ResolvedModel::Ghost(m) => m,
        _ => unreachable!(),
    };
    let grid = scenario.time_grid().expect("grid");
    let config = scenario.integrator();
    let packet = evolve_packet(&scenario.initial_packet(), &model, &grid, &config).expect("packet");
    let flow = model.flow_matrix();

    let mut group = c.benchmark_group("propagate_ensemble");
    group.warm_up_time(Duration::from_millis(500));
    group.sample_size(20);
    for size in SIZES {
        let mut spec = scenario.ensemble_spec();
        spec.size = size;
        let starts = sample_ensemble(packet.state(0), model.hbar(), &spec).expect("sample");
        group.throughput(Throughput::Elements(size as u64));
        for (label, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(label, size), &starts, |b, starts| {
                b.iter(|| propagate_ensemble(&packet, starts, model.g(), &flow, &config, execution).expect("ensemble"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
