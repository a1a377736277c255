use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use popflux::abm::{run_simulation, sample_scenario, AbmConfig};
use popflux::coarsen::{build_coarse_trajectory, resolve_rules, CoarseTrajectory, ThresholdMode, REFERENCE_ZONE_THRESHOLDS};
use popflux::ebm::{EbmConfig, EbmParams};
use popflux::graph::RegionGraph;
use popflux::par::Exec;
use popflux::seed::stage_rng;
use popflux::train::grad;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_12_runs");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map_indexed(12, |r| run_simulation(&sample_scenario(7, r as u64), 30, 60, &AbmConfig::default()).unwrap()))
        });
    }
    group.finish();
}

fn coarse_runs(n: usize) -> Vec<CoarseTrajectory> {
    let mode = ThresholdMode::AutoTertile {
        zone_thresholds: REFERENCE_ZONE_THRESHOLDS,
    };
    Exec::Parallel.map_indexed(n, |r| {
        let traj = run_simulation(&sample_scenario(7, r as u64), 30, 60, &AbmConfig::default()).unwrap();
        let rules = resolve_rules(&traj, &mode).unwrap();
        build_coarse_trajectory(r, &traj, &rules, 100.0).unwrap()
    })
}

fn batch_gradient(c: &mut Criterion) {
    let runs = coarse_runs(12);
    let graph = RegionGraph::case_study();
    let params = EbmParams::init(4, &mut stage_rng(7, "train-init", 0));
    let config = EbmConfig::default();
    let mut group = c.benchmark_group("batch_gradient_12_runs");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| grad(&params, &runs, &graph, &config, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, ensemble, batch_gradient);
criterion_main!(benches);
