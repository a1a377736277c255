use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use popflux::abm::io::{read_run, write_run};
use popflux::abm::{run_simulation, sample_scenario, AbmConfig};
use popflux::coarsen::{build_coarse_trajectory, coarse_path, read_coarse_csv, resolve_rules, split_dataset, write_coarse_csv, CoarseTrajectory, N_COARSE_NODES};
use popflux::ebm::{euler_rollout, EbmParams};
use popflux::metrics::{evaluate_split, export_series, predict, EvalSummary, RunMetrics, SUMMARY_HEADER};
use popflux::par::Exec;
use popflux::series::{read_exogenous_csv, read_state_csv, write_trajectory_csv};
use popflux::train::{compare_gradients, run_loss, run_loss_and_grad, seeded_instance, train, DEFAULT_ABS_FLOOR};
use popflux::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(Error),
    Refused(String),
    GradCheck(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Refused(msg) | CliError::GradCheck(msg) => f.write_str(msg),
        }
    }
}

impl CliError {
    /// 1 usage/config, 2 divergence or failed check, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Refused(_) => 1,
            CliError::GradCheck(_) => 2,
            CliError::Core(e) => match e {
                Error::Diverged { .. } | Error::TrainingDiverged { .. } => 2,
                Error::Parse { .. } | Error::MissingFile(_) | Error::Io(_) | Error::Csv(_) => 3,
                _ => 1,
            },
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn is_nonempty_dir(dir: &Path) -> std::io::Result<bool> {
    Ok(dir.is_dir() && fs::read_dir(dir)?.next().is_some())
}

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()).into())
    }
}

fn write_key_values(path: &Path, pairs: &[(String, String)]) -> CliResult<()> {
    let mut text = String::new();
    for (k, v) in pairs {
        let _ = writeln!(text, "{k}={v}");
    }
    fs::write(path, text)?;
    Ok(())
}

/// Reads `n_runs` from a manifest written by an earlier stage.
fn manifest_runs(path: &Path) -> CliResult<usize> {
    require(path)?;
    let text = fs::read_to_string(path)?;
    for (i, line) in text.lines().enumerate() {
        if let Some(v) = line.strip_prefix("n_runs=") {
            return v.trim().parse().map_err(|_| {
                Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("bad n_runs '{v}'"),
                }
                .into()
            });
        }
    }
    Err(Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: "no n_runs entry".into(),
    }
    .into())
}

fn collect<T>(results: Vec<popflux::Result<T>>) -> CliResult<Vec<T>> {
    Ok(results.into_iter().collect::<popflux::Result<Vec<T>>>()?)
}

pub fn generate(cfg: &RunConfig, force: bool, exec: Exec) -> CliResult {
    let dir = cfg.runs_dir();
    if is_nonempty_dir(&dir)? {
        if !force {
            return Err(CliError::Refused(format!("{} is not empty; pass --force to overwrite", dir.display())));
        }
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    let abm = AbmConfig::default();
    let seeds = collect(exec.map_indexed(cfg.n_runs, |r| {
        let params = sample_scenario(cfg.master_seed, r as u64);
        let traj = run_simulation(&params, cfg.years, cfg.n_block_groups, &abm)?;
        write_run(&dir, r, &traj)?;
        Ok(params.seed)
    }))?;
    let mut manifest = vec![
        ("master_seed".to_string(), cfg.master_seed.to_string()),
        ("n_runs".to_string(), cfg.n_runs.to_string()),
        ("years".to_string(), cfg.years.to_string()),
        ("n_block_groups".to_string(), cfg.n_block_groups.to_string()),
    ];
    manifest.extend(seeds.iter().enumerate().map(|(r, s)| (format!("run_{r}_seed"), s.to_string())));
    write_key_values(&dir.join("manifest.txt"), &manifest)?;
    println!("generated {} runs ({} years, {} block groups) in {}", cfg.n_runs, cfg.years, cfg.n_block_groups, dir.display());
    Ok(())
}

pub fn coarsen(cfg: &RunConfig, exec: Exec) -> CliResult {
    let runs_dir = cfg.runs_dir();
    let n_runs = manifest_runs(&runs_dir.join("manifest.txt"))?;
    let dir = cfg.coarse_dir();
    fs::create_dir_all(&dir)?;
    let mode = cfg.threshold_mode();
    let rules = collect(exec.map_indexed(n_runs, |r| {
        let run = read_run(&runs_dir, r)?;
        let rules = resolve_rules(&run, &mode)?;
        let coarse = build_coarse_trajectory(r, &run, &rules, cfg.agents_per_representative)?;
        write_coarse_csv(&coarse_path(&dir, r), &coarse)?;
        Ok(rules)
    }))?;
    let mode_name = match cfg.thresholds {
        crate::config::Thresholds::Auto => "auto-tertile",
        crate::config::Thresholds::Fixed(_) => "fixed",
    };
    let mut entries = vec![("mode".to_string(), mode_name.to_string())];
    entries.extend(rules.iter().enumerate().map(|(r, t)| {
        (
            format!("run_{r}"),
            format!(
                "{:?},{:?},{:?},{:?}",
                t.zone_thresholds.0, t.zone_thresholds.1, t.income_thresholds.0, t.income_thresholds.1
            ),
        )
    }));
    write_key_values(&dir.join("thresholds.txt"), &entries)?;
    write_key_values(
        &dir.join("manifest.txt"),
        &[
            ("n_runs".to_string(), n_runs.to_string()),
            ("agents_per_representative".to_string(), format!("{:?}", cfg.agents_per_representative)),
        ],
    )?;
    println!("coarsened {n_runs} runs into {}", dir.display());
    Ok(())
}

struct Splits {
    train: Vec<CoarseTrajectory>,
    val: Vec<CoarseTrajectory>,
    test: Vec<CoarseTrajectory>,
}

fn load_splits(cfg: &RunConfig, exec: Exec) -> CliResult<Splits> {
    let dir = cfg.coarse_dir();
    let n_runs = manifest_runs(&dir.join("manifest.txt"))?;
    let runs = collect(exec.map_indexed(n_runs, |r| read_coarse_csv(&coarse_path(&dir, r), r)))?;
    if let Some(bad) = runs.iter().find(|r| r.initial().n_nodes() != N_COARSE_NODES) {
        return Err(Error::Contract(format!("coarse run {} has {} nodes", bad.run_id, bad.initial().n_nodes())).into());
    }
    let (train, val, test) = split_dataset(runs, cfg.splits, cfg.master_seed)?;
    Ok(Splits { train, val, test })
}

fn graph_for(cfg: &RunConfig) -> CliResult<popflux::graph::RegionGraph> {
    let graph = cfg.graph()?;
    if graph.n_nodes() != N_COARSE_NODES {
        return Err(CliError::Config(ConfigError(format!(
            "topology has {} nodes but coarse data has {N_COARSE_NODES}",
            graph.n_nodes()
        ))));
    }
    Ok(graph)
}

fn ids(runs: &[CoarseTrajectory]) -> String {
    runs.iter().map(|r| r.run_id.to_string()).collect::<Vec<_>>().join(",")
}

pub fn train_cmd(cfg: &RunConfig, exec: Exec) -> CliResult {
    let graph = graph_for(cfg)?;
    let splits = load_splits(cfg, exec)?;
    if splits.val.is_empty() {
        eprintln!("warning: validation split is empty; early stopping monitors the training loss");
    }
    let report = train(&splits.train, &splits.val, &graph, &cfg.train, cfg.master_seed, exec)?;
    let dir = cfg.train_dir();
    let checkpoints = dir.join("checkpoints");
    if checkpoints.exists() {
        fs::remove_dir_all(&checkpoints)?;
    }
    fs::create_dir_all(&checkpoints)?;
    fs::write(dir.join("history.csv"), report.history_csv())?;
    fs::write(dir.join("best_params.txt"), report.best_params.to_text())?;
    for (epoch, params) in &report.checkpoints {
        fs::write(checkpoints.join(format!("epoch_{epoch}.txt")), params.to_text())?;
    }
    write_key_values(
        &dir.join("split.txt"),
        &[
            ("train".to_string(), ids(&splits.train)),
            ("val".to_string(), ids(&splits.val)),
            ("test".to_string(), ids(&splits.test)),
        ],
    )?;
    println!(
        "best epoch {} of {}, validation loss {:e}; wrote {}",
        report.best_epoch,
        report.epochs(),
        report.best_val_loss,
        dir.display()
    );
    Ok(())
}

fn read_params(path: &Path) -> CliResult<EbmParams> {
    require(path)?;
    Ok(EbmParams::from_text(&fs::read_to_string(path)?, path)?)
}

pub fn evaluate(cfg: &RunConfig, exec: Exec) -> CliResult {
    let graph = graph_for(cfg)?;
    let params = read_params(&cfg.train_dir().join("best_params.txt"))?;
    if params.n_nodes() != graph.n_nodes() {
        return Err(Error::Contract(format!("parameters are for {} nodes, graph has {}", params.n_nodes(), graph.n_nodes())).into());
    }
    let splits = load_splits(cfg, exec)?;
    let dir = cfg.eval_dir();
    fs::create_dir_all(&dir)?;

    let mut summary = format!("{SUMMARY_HEADER}\n");
    let mut per_run = String::from("split,run,mape,mae,status\n");
    let mut exemplar_source: Option<(&str, &[CoarseTrajectory], EvalSummary)> = None;
    for (name, runs) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        let result = if runs.is_empty() {
            Err(Error::UndefinedMetric("empty split".into()))
        } else {
            evaluate_split(&params, runs, &graph, cfg.ebm(), cfg.mape_floor, exec)
        };
        match result {
            Ok(s) => {
                let _ = writeln!(summary, "{}", popflux::metrics::summary_row(name, &s));
                for RunMetrics { run_id, mape, mae } in &s.runs {
                    let _ = writeln!(per_run, "{name},{run_id},{mape:?},{mae:?},ok");
                }
                for (run_id, why) in &s.flagged {
                    let _ = writeln!(per_run, "{name},{run_id},,,\"{}\"", why.replace('"', "'"));
                    eprintln!("warning: {name} run {run_id} excluded: {why}");
                }
                println!(
                    "{name}: MAPE mean {:.2}% (best {:.2}%, worst {:.2}%), MAE mean {:.2}k over {} runs",
                    s.mape.mean,
                    s.mape.best,
                    s.mape.worst,
                    s.mae.mean / 1000.0,
                    s.runs.len()
                );
                exemplar_source = Some((name, runs.as_slice(), s));
            }
            Err(e @ Error::UndefinedMetric(_)) => {
                let _ = writeln!(summary, "{name},,,,,,");
                println!("{name}: no metrics ({e})");
            }
            Err(e) => return Err(e.into()),
        }
    }
    fs::write(dir.join("summary.csv"), summary)?;
    fs::write(dir.join("runs.csv"), per_run)?;

    // exemplars come from the last scored split, the test split when present
    if let Some((name, runs, s)) = exemplar_source {
        let picks = [
            ("worst_mape", s.worst_mape_run()),
            ("best_mape", s.best_mape_run()),
            ("worst_mae", s.worst_mae_run()),
            ("best_mae", s.best_mae_run()),
        ];
        let mut exported: Vec<usize> = Vec::new();
        let mut index = vec![("split".to_string(), name.to_string())];
        for (label, pick) in picks {
            let Some(m) = pick else { continue };
            index.push((label.to_string(), m.run_id.to_string()));
            if exported.contains(&m.run_id) {
                continue;
            }
            let run = runs.iter().find(|r| r.run_id == m.run_id).expect("scored run is in its split");
            export_series(run, &predict(&params, run, &graph, cfg.ebm())?, &dir)?;
            exported.push(m.run_id);
        }
        write_key_values(&dir.join("exemplars.txt"), &index)?;
    }
    println!("wrote {}", dir.display());
    Ok(())
}

pub struct SimulateArgs {
    pub params: PathBuf,
    pub x0: PathBuf,
    pub exogenous: PathBuf,
    pub steps: usize,
    pub repeats: usize,
}

pub fn simulate(cfg: &RunConfig, args: &SimulateArgs) -> CliResult {
    let graph = cfg.graph()?;
    let params = read_params(&args.params)?;
    if params.n_nodes() != graph.n_nodes() {
        return Err(CliError::Config(ConfigError(format!(
            "parameters are for {} nodes but the topology has {}",
            params.n_nodes(),
            graph.n_nodes()
        ))));
    }
    let x0 = read_state_csv(&args.x0, graph.n_nodes())?;
    let exo = read_exogenous_csv(&args.exogenous, graph.n_nodes())?;
    let states = euler_rollout(&x0, &params, &exo, &graph, cfg.ebm(), args.steps)?;
    let dir = cfg.simulate_dir();
    fs::create_dir_all(&dir)?;
    let out = dir.join("trajectory.csv");
    write_trajectory_csv(&out, &states)?;
    println!("wrote {} ({} steps)", out.display(), args.steps);

    if args.repeats > 0 {
        let mut times: Vec<f64> = (0..args.repeats)
            .map(|_| {
                let start = Instant::now();
                let r = euler_rollout(&x0, &params, &exo, &graph, cfg.ebm(), args.steps);
                let elapsed = start.elapsed().as_secs_f64() * 1e3;
                std::hint::black_box(r).ok();
                elapsed
            })
            .collect();
        times.sort_by(f64::total_cmp);
        let median = times[times.len() / 2];
        let line = format!(
            "median rollout time {median:.4} ms over {} repeats ({} steps, {} state entries)",
            args.repeats,
            args.steps,
            x0.n_nodes() * 3
        );
        eprintln!("{line}");
        fs::write(dir.join("timing.log"), format!("{line}\n"))?;
    }
    Ok(())
}

pub fn check_grad(cfg: &RunConfig, perturb: Option<usize>, exec: Exec) -> CliResult {
    let reports = collect(exec.map_indexed(cfg.grad_instances, |k| {
        let (graph, probe, params) = seeded_instance(cfg.master_seed, k as u64);
        let (_, mut analytic) = run_loss_and_grad(&params, &probe, &graph, cfg.ebm())?;
        if let Some(c) = perturb.filter(|&c| c < analytic.len()) {
            let g = &mut analytic.as_mut_slice()[c];
            *g = *g * 1.01 + 1e-3;
        }
        let report = compare_gradients(&params, &analytic, |p| run_loss(p, &probe, &graph, cfg.ebm()), cfg.grad_eps, DEFAULT_ABS_FLOOR)?;
        Ok((graph.n_nodes(), probe.n_steps(), report))
    }))?;
    let mut worst: Option<(usize, &popflux::train::GradCheckReport)> = None;
    for (k, (nodes, steps, r)) in reports.iter().enumerate() {
        println!(
            "instance {k}: {nodes} nodes, {steps} steps, max relative error {:.3e} at coordinate {}",
            r.max_rel_error, r.worst_coordinate
        );
        if worst.is_none_or(|(_, w)| r.max_rel_error > w.max_rel_error) {
            worst = Some((k, r));
        }
    }
    let Some((k, w)) = worst else {
        println!("no instances checked");
        return Ok(());
    };
    let line = format!(
        "max relative error {:.3e} (tolerance {:.1e}): instance {k}, coordinate {}, analytic {:e}, numeric {:e}",
        w.max_rel_error, cfg.grad_tolerance, w.worst_coordinate, w.analytic, w.numeric
    );
    if w.passes(cfg.grad_tolerance) {
        println!("PASS {line}");
        Ok(())
    } else {
        Err(CliError::GradCheck(format!("FAIL {line}")))
    }
}
