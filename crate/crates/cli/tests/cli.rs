use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use popflux::coarsen::{coarse_path, write_coarse_csv, CoarseTrajectory};
use popflux::ebm::{euler_rollout, EbmConfig, EbmParams};
use popflux::graph::{ExogenousSeries, RegionGraph, SystemState};
use popflux::seed::stage_rng;

const SMALL: &[&str] = &[
    "--n-runs",
    "3",
    "--years",
    "6",
    "--n-block-groups",
    "24",
    "--patience",
    "3",
    "--max-epochs",
    "40",
    "--checkpoint-every",
    "10",
];

fn popflux(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popflux")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = popflux(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn with_out<'a>(cmd: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd, "--out", out];
    v.extend_from_slice(SMALL);
    v.extend_from_slice(extra);
    v
}

fn pipeline(out: &str, extra: &[&str]) {
    for cmd in ["generate", "coarsen", "train", "evaluate"] {
        run_ok(&with_out(cmd, out, extra));
    }
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn small_pipeline_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    pipeline(out, &[]);
    let root = dir.path();
    for r in 0..3 {
        assert!(root.join(format!("runs/agents_{r}.csv")).exists());
        assert!(root.join(format!("runs/blocks_{r}.csv")).exists());
        assert!(root.join(format!("runs/scenario_{r}.txt")).exists());
        assert!(root.join(format!("coarse/coarse_{r}.csv")).exists());
    }
    assert!(read(root.join("runs/manifest.txt")).contains("n_runs=3"));
    assert!(read(root.join("coarse/thresholds.txt")).starts_with("mode=auto-tertile\n"));
    assert!(root.join("train/checkpoints/epoch_0.txt").exists());

    let summary = read(root.join("eval/summary.csv"));
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows[0], "split,mape_mean,mape_best,mape_worst,mae_mean,mae_best,mae_worst");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("train,") && rows[2].starts_with("val,") && rows[3].starts_with("test,"));
    let exemplars = read(root.join("eval/exemplars.txt"));
    let worst = exemplars.lines().find_map(|l| l.strip_prefix("worst_mape=")).unwrap();
    assert!(root.join(format!("eval/overlay_{worst}.csv")).exists());
    assert!(root.join(format!("eval/outmigration_{worst}.csv")).exists());

    // best-so-far column never increases, and patience bounds the epoch count
    let history = read(root.join("train/history.csv"));
    let best: Vec<f64> = history.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
    let val: Vec<f64> = history.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let best_epoch = val.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!(val.len() <= best_epoch + 3 + 2);
}

#[test]
fn pipeline_is_deterministic_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path().to_str().unwrap(), &[]);
    pipeline(b.path().to_str().unwrap(), &["--jobs", "1"]);
    for f in ["runs/agents_1.csv", "runs/blocks_2.csv", "coarse/coarse_0.csv", "coarse/thresholds.txt", "train/history.csv", "train/best_params.txt", "eval/summary.csv"] {
        assert_eq!(read(a.path().join(f)), read(b.path().join(f)), "{f}");
    }
}

#[test]
fn generate_refuses_nonempty_output_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&with_out("generate", out, &[]));
    let again = popflux(&with_out("generate", out, &[]));
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    fs::write(dir.path().join("runs/stale.txt"), "x").unwrap();
    run_ok(&with_out("generate", out, &["--force"]));
    assert!(!dir.path().join("runs/stale.txt").exists());
}

#[test]
fn missing_inputs_exit_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let coarsen = popflux(&["coarsen", "--out", out]);
    assert_eq!(coarsen.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&coarsen.stderr).contains("manifest.txt"));
    run_ok(&with_out("generate", out, &[]));
    run_ok(&with_out("coarsen", out, &[]));
    let eval = popflux(&["evaluate", "--out", out]);
    assert_eq!(eval.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&eval.stderr).contains("best_params.txt"));
}

#[test]
fn fixed_thresholds_recorded_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&with_out("generate", out, &[]));
    run_ok(&with_out("coarsen", out, &["--thresholds", "0.126,0.355,26500,36700"]));
    let t = read(dir.path().join("coarse/thresholds.txt"));
    assert!(t.starts_with("mode=fixed\n"));
    assert!(t.contains("run_0=0.126,0.355,26500.0,36700.0"));
}

#[test]
fn config_file_values_lose_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    let out = dir.path().join("o");
    fs::write(&conf, format!("out={}\nn_runs=2\nyears=3\nn_block_groups=20\n", out.display())).unwrap();
    run_ok(&["generate", "--config", conf.to_str().unwrap(), "--n-runs", "1"]);
    assert!(read(out.join("runs/manifest.txt")).contains("n_runs=1"));

    fs::write(&conf, "n_runs=2\nsplits=0.5,0.5,0.5\n").unwrap();
    assert_eq!(popflux(&["generate", "--config", conf.to_str().unwrap()]).status.code(), Some(1));
    fs::write(&conf, "no_such_key=1\n").unwrap();
    assert_eq!(popflux(&["generate", "--config", conf.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(popflux(&["train", "--dt", "0"]).status.code(), Some(1));
    assert_eq!(popflux(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(popflux(&["--help"]).status.code(), Some(0));
}

fn write_simulation_inputs(dir: &Path, n_years: usize) -> (String, String, String) {
    let params = EbmParams::init(4, &mut stage_rng(1, "cli-test", 0));
    let p = dir.join("params.txt");
    fs::write(&p, params.to_text()).unwrap();
    let x0 = dir.join("x0.csv");
    let mut text = String::from("node,subpop,count\n");
    for n in 0..4 {
        for s in 0..3 {
            text += &format!("{n},{s},{}\n", 1000 * (n + s + 1));
        }
    }
    fs::write(&x0, text).unwrap();
    let exo = dir.join("exo.csv");
    let mut text = String::from("year,node,subpop,G,D,C\n");
    for y in 0..n_years {
        for n in 0..4 {
            for s in 0..3 {
                text += &format!("{y},{n},{s},{},0,{}\n", 10 * s, 20000 + 100 * y);
            }
        }
    }
    fs::write(&exo, text).unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    (s(&p), s(&x0), s(&exo))
}

#[test]
fn simulate_zero_steps_echoes_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let (p, x0, exo) = write_simulation_inputs(dir.path(), 1);
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    run_ok(&["simulate", "--out", o, "--params", &p, "--x0", &x0, "--exogenous", &exo, "--steps", "0", "--repeats", "3"]);
    let traj = read(out.join("simulate/trajectory.csv"));
    assert_eq!(traj.lines().count(), 1 + 12);
    assert!(traj.contains("\n0,2,1,4000.0\n"));
    assert!(read(out.join("simulate/timing.log")).contains("median rollout time"));
}

#[test]
fn simulate_is_deterministic_and_times_separately() {
    let dir = tempfile::tempdir().unwrap();
    let (p, x0, exo) = write_simulation_inputs(dir.path(), 50);
    let o = dir.path().join("o");
    let args = ["simulate", "--out", o.to_str().unwrap(), "--params", &p, "--x0", &x0, "--exogenous", &exo, "--steps", "50"];
    let first = run_ok(&args);
    let a = read(o.join("simulate/trajectory.csv"));
    run_ok(&args);
    assert_eq!(a, read(o.join("simulate/trajectory.csv")));
    assert_eq!(a.lines().count(), 1 + 51 * 12);
    assert!(String::from_utf8_lossy(&first.stderr).contains("median rollout time"));
    assert!(!String::from_utf8_lossy(&first.stdout).contains("median"));
}

#[test]
fn simulate_parse_error_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let (p, x0, exo) = write_simulation_inputs(dir.path(), 3);
    fs::write(&x0, "node,subpop,count\n0,0,1\n0,1,many\n").unwrap();
    let o = dir.path().join("o");
    let res = popflux(&["simulate", "--out", o.to_str().unwrap(), "--params", &p, "--x0", &x0, "--exogenous", &exo, "--steps", "2"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("x0.csv:3"), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn check_grad_passes_and_catches_perturbation() {
    let ok = run_ok(&["check-grad", "--grad-instances", "5"]);
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("PASS max relative error"));
    let bad = popflux(&["check-grad", "--grad-instances", "3", "--perturb-coordinate", "7"]);
    assert_eq!(bad.status.code(), Some(2));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("FAIL") && err.contains("coordinate 7"), "{err}");
}

#[test]
fn evaluating_the_generating_model_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let graph = RegionGraph::case_study();
    let params = EbmParams::init(4, &mut stage_rng(5, "cli-test", 1));
    let coarse = dir.path().join("coarse");
    fs::create_dir_all(&coarse).unwrap();
    for r in 0..5 {
        let mut exo = ExogenousSeries::constant(vec![30_000.0, 40_000.0, 60_000.0, 130_000.0], 11);
        for k in 0..10 {
            exo.growth[k][r % 3] = [100.0, 50.0, 25.0];
        }
        let x0 = SystemState {
            counts: (0..4).map(|n| [2000.0 + 500.0 * (n + r) as f64, 3000.0, 4000.0]).collect(),
        };
        let states = euler_rollout(&x0, &params, &exo, &graph, &EbmConfig::default(), 10).unwrap();
        let run = CoarseTrajectory {
            run_id: r,
            states,
            exogenous: exo,
        };
        write_coarse_csv(&coarse_path(&coarse, r), &run).unwrap();
    }
    fs::write(coarse.join("manifest.txt"), "n_runs=5\n").unwrap();
    fs::create_dir_all(dir.path().join("train")).unwrap();
    fs::write(dir.path().join("train/best_params.txt"), params.to_text()).unwrap();
    run_ok(&["evaluate", "--out", dir.path().to_str().unwrap()]);
    let summary = read(dir.path().join("eval/summary.csv"));
    for row in summary.lines().skip(1) {
        let metrics: Vec<f64> = row.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert!(metrics.iter().all(|&m| m == 0.0), "{row}");
    }
}
