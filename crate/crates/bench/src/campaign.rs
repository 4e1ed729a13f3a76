//! Seeded runs of the learners against the LP oracle, streamed to CSV.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use cmdp_core::optaug::{pretraining_length, run_optaug, SafeBaseline, Schedule};
use cmdp_core::optdual::{run_optdual, OptDualConfig};
use cmdp_core::oracle::{solve_cmdp_exact, ExactSolution, RegretLedger};
use cmdp_core::{Cmdp, EpisodeRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::instance::generate_instance;
use crate::summary::{loglog_slope, CampaignSummary, RunSummary};
use crate::BenchError;

/// Environment variable bounding the number of concurrent runs.
pub const WORKERS_ENV: &str = "CMDP_BENCH_WORKERS";

/// Everything shared by the runs of one campaign.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub cmdp: Cmdp,
    pub baseline: SafeBaseline,
    pub exact: ExactSolution,
    pub kprime: usize,
    pub sigma: f64,
    pub rho: f64,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, BenchError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.instance_seed);
    let (cmdp, baseline) = generate_instance(&config.instance, &mut rng)?;
    prepare_with(config, cmdp, baseline)
}

pub fn prepare_with(config: &ExperimentConfig, cmdp: Cmdp, baseline: SafeBaseline) -> Result<Prepared, BenchError> {
    let exact = solve_cmdp_exact(&cmdp)?;
    let shape = cmdp.shape();
    let kprime = match config.kprime {
        Some(k) => k,
        None => pretraining_length(
            shape.states,
            shape.actions,
            shape.horizon,
            cmdp.kernel().max_successors(),
            baseline.gamma,
            config.nu,
            config.kprime_multiplier,
        )?,
    };
    let sigma = config
        .sigma
        .unwrap_or(shape.horizon as f64 / (config.nu * baseline.gamma));
    let rho = match config.rho {
        Some(r) => r,
        None => {
            let r = (cmdp.objective_value(&baseline.policy)? - exact.value) / baseline.gamma;
            if !(r > 0.0) {
                return Err(BenchError::Config(
                    "the baseline is already optimal, so rho cannot be derived; pass rho explicitly".into(),
                ));
            }
            r
        }
    };
    Ok(Prepared {
        cmdp,
        baseline,
        exact,
        kprime,
        sigma,
        rho,
    })
}

/// One ledger line.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRow {
    pub k: usize,
    pub phase: &'static str,
    pub value_objective: f64,
    pub value_constraints: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eta: Option<f64>,
    pub eps: Option<f64>,
    pub fw_iters: u64,
    pub fw_gap: Option<f64>,
    pub strong_c: f64,
    pub strong_d: f64,
    pub weak_c: f64,
    pub weak_d: f64,
    pub model_covers_truth: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub run_id: String,
    pub algo: String,
    pub seed: u64,
    pub rows: Vec<EpisodeRow>,
    pub success_event: bool,
    pub fw_iterations: u64,
    pub wall_seconds: f64,
}

impl RunOutcome {
    pub fn summary(&self) -> RunSummary {
        let last = self.rows.last();
        let strong_c: Vec<f64> = self.rows.iter().map(|r| r.strong_c).collect();
        let strong_d: Vec<f64> = self.rows.iter().map(|r| r.strong_d).collect();
        RunSummary {
            run_id: self.run_id.clone(),
            algo: self.algo.clone(),
            seed: self.seed,
            episodes: self.rows.len(),
            strong_c: last.map_or(0.0, |r| r.strong_c),
            strong_d: last.map_or(0.0, |r| r.strong_d),
            weak_c: last.map_or(0.0, |r| r.weak_c),
            weak_d: last.map_or(0.0, |r| r.weak_d),
            slope_strong_c: loglog_slope(&strong_c),
            slope_strong_d: loglog_slope(&strong_d),
            fw_iterations: self.fw_iterations,
            wall_seconds: Some(self.wall_seconds),
        }
    }
}

pub fn csv_header(num_constraints: usize) -> Vec<String> {
    let mut header: Vec<String> = ["run_id", "algo", "seed", "k", "phase", "V_c"].map(String::from).to_vec();
    header.extend((1..=num_constraints).map(|i| format!("V_d_{i}")));
    header.extend((1..=num_constraints).map(|i| format!("lambda_{i}")));
    header.extend(
        [
            "eta_k",
            "eps_k",
            "fw_iters",
            "fw_gap",
            "strong_c_cum",
            "strong_d_cum",
            "weak_c_cum",
            "weak_d_cum",
        ]
        .map(String::from),
    );
    header
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_record(run_id: &str, algo: &str, seed: u64, row: &EpisodeRow) -> Vec<String> {
    let mut out = vec![
        run_id.to_string(),
        algo.to_string(),
        seed.to_string(),
        row.k.to_string(),
        row.phase.to_string(),
        row.value_objective.to_string(),
    ];
    out.extend(row.value_constraints.iter().map(f64::to_string));
    out.extend(row.lambda.iter().map(f64::to_string));
    out.extend([
        opt(row.eta),
        opt(row.eps),
        row.fw_iters.to_string(),
        opt(row.fw_gap),
        row.strong_c.to_string(),
        row.strong_d.to_string(),
        row.weak_c.to_string(),
        row.weak_d.to_string(),
    ]);
    out
}

pub fn run_id(algo: &str, seed: u64) -> String {
    format!("{algo}-seed{seed}")
}

/// Runs one learner with one seed, optionally streaming the ledger to `csv_path`.
/// The `lambda_i` columns hold the multipliers after the episode's dual step.
pub fn run_one(
    prepared: &Prepared,
    config: &ExperimentConfig,
    algo: &str,
    seed: u64,
    csv_path: Option<&Path>,
) -> Result<RunOutcome, BenchError> {
    let started = Instant::now();
    let id = run_id(algo, seed);
    let cmdp = &prepared.cmdp;
    let mut writer = match csv_path {
        Some(path) => {
            let mut w = csv::Writer::from_writer(File::create(path)?);
            w.write_record(csv_header(cmdp.num_constraints()))?;
            Some(w)
        }
        None => None,
    };
    let mut ledger = RegretLedger::new(prepared.exact.value, cmdp.thresholds().to_vec());
    let mut rows = Vec::with_capacity(config.episodes);
    let mut sink_error: Option<BenchError> = None;
    let mut sink = |record: &EpisodeRecord| {
        if sink_error.is_some() {
            return;
        }
        let result = (|| -> Result<(), BenchError> {
            let ledger_row = ledger.record_episode(&record.policy, cmdp)?;
            let row = EpisodeRow {
                k: record.k,
                phase: record.phase.as_str(),
                value_objective: ledger_row.value_objective,
                value_constraints: ledger_row.value_constraints,
                lambda: record.lambda_next.clone(),
                eta: record.eta,
                eps: record.eps,
                fw_iters: record.fw_iters,
                fw_gap: record.fw_gap,
                strong_c: ledger_row.strong_objective,
                strong_d: ledger_row.strong_constraint,
                weak_c: ledger_row.weak_objective,
                weak_d: ledger_row.weak_constraint,
                model_covers_truth: record.model_covers_truth,
            };
            if let Some(w) = writer.as_mut() {
                w.write_record(csv_record(&id, algo, seed, &row))?;
            }
            rows.push(row);
            Ok(())
        })();
        if let Err(e) = result {
            sink_error = Some(e);
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = match algo {
        "optaug" => {
            let mut schedule = Schedule::with_sigma(config.episodes, prepared.kprime, config.nu, prepared.sigma)?;
            schedule.step_rule = config.step_rule;
            schedule.inner_budget = config.inner_budget;
            run_optaug(cmdp, &prepared.baseline, &schedule, config.delta, &mut rng, &mut sink)
        }
        "optdual" => {
            let dual = OptDualConfig::new(
                prepared.rho,
                cmdp.shape().horizon,
                cmdp.num_constraints(),
                config.episodes,
            )?;
            run_optdual(cmdp, &dual, config.delta, config.episodes, &mut rng, &mut sink)
        }
        other => return Err(BenchError::Config(format!("unknown algorithm {other}"))),
    }
    .map_err(|e| BenchError::Run {
        run_id: id.clone(),
        reason: e.to_string(),
    })?;
    if let Some(e) = sink_error {
        return Err(e);
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    Ok(RunOutcome {
        run_id: id,
        algo: algo.to_string(),
        seed,
        rows,
        success_event: report.success_event,
        fw_iterations: report.total_fw_iterations,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every `(algorithm, seed)` pair, writes one CSV per run plus
/// `summary.json` into `config.out`, and returns the summary.
pub fn run_campaign(config: &ExperimentConfig) -> Result<CampaignSummary, BenchError> {
    let prepared = prepare(config)?;
    std::fs::create_dir_all(&config.out)?;
    std::fs::write(config.out.join("instance.json"), prepared.cmdp.to_json_string()? + "\n")?;
    log::info!(
        "optimal value {:.6}, K' = {}, sigma = {:.4}, rho = {:.4}",
        prepared.exact.value,
        prepared.kprime,
        prepared.sigma,
        prepared.rho
    );
    let jobs: Vec<(&'static str, u64)> = config
        .algorithm
        .expand()
        .into_iter()
        .flat_map(|a| config.seeds.iter().map(move |s| (a, *s)))
        .collect();
    let results: Mutex<Vec<Option<Result<RunSummary, BenchError>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = worker_count().min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(algo, seed)) = jobs.get(i) else {
                    break;
                };
                let path: PathBuf = config.out.join(format!("{}.csv", run_id(algo, seed)));
                log::info!("starting {}", run_id(algo, seed));
                let outcome = run_one(&prepared, config, algo, seed, Some(&path)).map(|o| o.summary());
                if let Ok(s) = &outcome {
                    log::info!("finished {} in {:.1}s", s.run_id, s.wall_seconds.unwrap_or(0.0));
                }
                results.lock().expect("result lock")[i] = Some(outcome);
            });
        }
    });
    let mut runs = Vec::with_capacity(jobs.len());
    for result in results.into_inner().expect("result lock") {
        runs.push(result.expect("every job ran")?);
    }
    let summary = CampaignSummary::new(Some(prepared.exact.value), runs);
    summary.write(&config.out.join("summary.json"))?;
    Ok(summary)
}
