use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use penetra::attack::{apply_perturbation, generate, uniform_baseline, AttackConfig};
use penetra::metrics::{mean_variance, Stat};
use penetra::{derive_seed, dice, read_tensor, ssim, Adapter, OracleHandle, Tensor};
use serde::{Deserialize, Serialize};

use crate::args::{BenchArgs, Method};
use crate::attack::{attack_config, write_json};
use crate::error::{CliError, Result};
use crate::spec::open_oracle;

pub const BENCH_FILE: &str = "bench.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const INPUT_EXTENSION: &str = "ptnsr";

/// One CSV row. Uniform rows leave `mode_index`, `tol`, `eigenvalue`,
/// `restarts` and `converged` empty; failed rows leave every metric empty and
/// carry the error in `note`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub input_id: String,
    pub method: Method,
    pub mode_index: Option<usize>,
    pub tol: Option<f64>,
    pub eigenvalue: Option<f64>,
    pub ssim: Option<f64>,
    pub dice: Option<f64>,
    pub oracle_evals: u64,
    pub restarts: Option<usize>,
    pub converged: Option<bool>,
    pub wall_time_ms: f64,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct BenchInput {
    pub id: String,
    pub tensor: Tensor,
    pub mask: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub tols: Vec<f64>,
    pub modes: Vec<usize>,
    /// Template for every solve; `tol`, `mode_index` and `seed` are set per row.
    pub attack: AttackConfig,
    pub seed: u64,
    pub jobs: usize,
    pub dynamic_range: f64,
    pub threshold: f64,
}

impl BenchConfig {
    pub fn from_args(args: &BenchArgs) -> Result<Self> {
        if args.tol.is_empty() || args.mode_index.is_empty() || args.methods.is_empty() {
            return Err(CliError::Usage(
                "--tol, --mode-index and --methods need at least one value".into(),
            ));
        }
        if args.mode_index.contains(&0) {
            return Err(CliError::Usage("mode indices are 1-based".into()));
        }
        let k = args.solver.k.max(*args.mode_index.iter().max().unwrap());
        Ok(Self {
            methods: dedup(&args.methods),
            tols: args.tol.clone(),
            modes: dedup(&args.mode_index),
            attack: attack_config(&args.solver, &args.perturb, args.tol[0], k, 1),
            seed: args.solver.seed,
            jobs: args.jobs.max(1),
            dynamic_range: args.dynamic_range,
            threshold: args.threshold,
        })
    }
}

fn dedup<T: Ord + Copy>(v: &[T]) -> Vec<T> {
    let mut out = v.to_vec();
    out.sort();
    out.dedup();
    out
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    /// Oracle evaluations across all workers, connection probes included.
    pub total_oracle_evals: u64,
}

impl BenchOutcome {
    pub fn failed_inputs(&self) -> usize {
        let mut by_input: BTreeMap<&str, bool> = BTreeMap::new();
        for r in &self.rows {
            *by_input.entry(&r.input_id).or_insert(true) &= !r.note.is_empty();
        }
        by_input.values().filter(|all_failed| **all_failed).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub method: Method,
    pub mode_index: Option<usize>,
    pub tol: Option<f64>,
    pub count: usize,
    pub failed: usize,
    pub ssim: Option<Stat>,
    pub dice: Option<Stat>,
    pub eigenvalue: Option<Stat>,
    pub oracle_evals: Option<Stat>,
}

/// Loads `*.ptnsr` files from `dir` in name order, with masks of the same
/// name from `masks` when given.
pub fn load_inputs(dir: &Path, masks: Option<&Path>) -> Result<Vec<BenchInput>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == INPUT_EXTENSION))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Failed(format!(
            "no .{INPUT_EXTENSION} inputs in {}",
            dir.display()
        )));
    }
    paths
        .into_iter()
        .map(|p| {
            let id = p
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            let mask = match masks {
                Some(m) => Some(read_tensor(m.join(p.file_name().unwrap()))?),
                None => None,
            };
            Ok(BenchInput {
                id,
                tensor: read_tensor(&p)?,
                mask,
            })
        })
        .collect()
}

/// Runs every input on a pool of `cfg.jobs` workers, each with its own oracle
/// from `open`. Row order and every field except `wall_time_ms` depend only on
/// the inputs and the configuration.
pub fn run_bench<F>(inputs: &[BenchInput], cfg: &BenchConfig, open: F) -> BenchOutcome
where
    F: Fn() -> Result<OracleHandle> + Sync,
{
    let next = AtomicUsize::new(0);
    let evals = AtomicU64::new(0);
    let slots: Vec<Mutex<Vec<BenchRow>>> = inputs.iter().map(|_| Mutex::new(Vec::new())).collect();
    let workers = cfg.jobs.clamp(1, inputs.len().max(1));
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                let oracle = open();
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(input) = inputs.get(i) else { break };
                    let rows = match &oracle {
                        Ok(o) => process_input(o, input, cfg),
                        Err(e) => failed_rows(input, cfg, &e.to_string(), 0),
                    };
                    *slots[i].lock().unwrap() = rows;
                }
                if let Ok(o) = &oracle {
                    evals.fetch_add(o.total_evals(), Ordering::SeqCst);
                }
            });
        }
    });
    BenchOutcome {
        rows: slots
            .into_iter()
            .flat_map(|m| m.into_inner().unwrap())
            .collect(),
        total_oracle_evals: evals.into_inner(),
    }
}

fn row_keys(cfg: &BenchConfig) -> Vec<(Method, Option<usize>, Option<f64>)> {
    let mut keys = Vec::new();
    for method in &cfg.methods {
        match method {
            Method::Penetrative => {
                for tol in &cfg.tols {
                    for m in &cfg.modes {
                        keys.push((*method, Some(*m), Some(*tol)));
                    }
                }
            }
            Method::Uniform => keys.push((*method, None, None)),
        }
    }
    keys
}

fn failed_rows(input: &BenchInput, cfg: &BenchConfig, note: &str, evals: u64) -> Vec<BenchRow> {
    row_keys(cfg)
        .into_iter()
        .map(|(method, mode_index, tol)| BenchRow {
            input_id: input.id.clone(),
            method,
            mode_index,
            tol,
            eigenvalue: None,
            ssim: None,
            dice: None,
            oracle_evals: evals,
            restarts: None,
            converged: None,
            wall_time_ms: 0.0,
            note: note.to_string(),
        })
        .collect()
}

struct Scorer<'a> {
    oracle: &'a OracleHandle,
    input: &'a BenchInput,
    reference: Tensor,
    cfg: &'a BenchConfig,
}

impl Scorer<'_> {
    /// Predicts on `adv` (one evaluation) and scores it against the clean input
    /// and the reference mask.
    fn score(&self, adv: &Tensor) -> Result<(Option<f64>, f64)> {
        let pred = self.oracle.eval(adv)?;
        let s = ssim(&self.input.tensor, adv, self.cfg.dynamic_range).ok();
        let d = dice(&pred, &self.reference, self.cfg.threshold)?;
        Ok((s, d))
    }
}

fn process_input(oracle: &OracleHandle, input: &BenchInput, cfg: &BenchConfig) -> Vec<BenchRow> {
    let start = oracle.total_evals();
    let reference = match &input.mask {
        Some(m) => m.clone(),
        None => match oracle.eval(&input.tensor) {
            Ok(p) => p,
            Err(e) => {
                return failed_rows(
                    input,
                    cfg,
                    &format!("clean prediction: {e}"),
                    oracle.total_evals() - start,
                )
            }
        },
    };
    let scorer = Scorer {
        oracle,
        input,
        reference,
        cfg,
    };
    let mut rows = Vec::new();
    for method in &cfg.methods {
        match method {
            Method::Penetrative => {
                for tol in &cfg.tols {
                    rows.extend(penetrative_rows(&scorer, *tol));
                }
            }
            Method::Uniform => rows.push(uniform_row(&scorer)),
        }
    }
    rows
}

fn penetrative_rows(sc: &Scorer<'_>, tol: f64) -> Vec<BenchRow> {
    let t0 = Instant::now();
    let before = sc.oracle.total_evals();
    let attack = AttackConfig {
        tol,
        mode_index: 1,
        seed: derive_seed(sc.cfg.seed, &format!("eig/{}", sc.input.id)),
        ..sc.cfg.attack.clone()
    };
    let template = |mode: usize| BenchRow {
        input_id: sc.input.id.clone(),
        method: Method::Penetrative,
        mode_index: Some(mode),
        tol: Some(tol),
        eigenvalue: None,
        ssim: None,
        dice: None,
        oracle_evals: 0,
        restarts: None,
        converged: None,
        wall_time_ms: 0.0,
        note: String::new(),
    };
    let result = match generate(sc.oracle, &sc.input.tensor, &attack) {
        Ok(r) => r,
        Err(e) => {
            let evals = sc.oracle.total_evals() - before;
            return sc
                .cfg
                .modes
                .iter()
                .map(|m| BenchRow {
                    oracle_evals: evals,
                    wall_time_ms: ms(t0),
                    note: format!("eigensolver: {e}"),
                    ..template(*m)
                })
                .collect();
        }
    };
    let solve_ms = ms(t0);
    let solve_evals = result.eigenpairs.oracle_evals;
    sc.cfg
        .modes
        .iter()
        .map(|&m| {
            let t1 = Instant::now();
            let mut row = BenchRow {
                restarts: Some(result.eigenpairs.restarts),
                converged: Some(result.eigenpairs.converged),
                oracle_evals: solve_evals,
                ..template(m)
            };
            let Some(pair) = result.eigenpairs.pairs.get(m - 1) else {
                row.note = format!(
                    "solver returned {} real eigenpairs",
                    result.eigenpairs.pairs.len()
                );
                row.wall_time_ms = solve_ms;
                return row;
            };
            row.eigenvalue = Some(pair.eigenvalue);
            let scored = apply_perturbation(
                &sc.input.tensor,
                result.adapter,
                pair.vector.data(),
                result.delta,
                attack.clamp,
            )
            .map_err(CliError::from)
            .and_then(|adv| sc.score(&adv));
            match scored {
                Ok((s, d)) => {
                    row.ssim = s;
                    row.dice = Some(d);
                    row.oracle_evals += 1;
                }
                Err(e) => row.note = e.to_string(),
            }
            row.wall_time_ms = solve_ms + ms(t1);
            row
        })
        .collect()
}

fn uniform_row(sc: &Scorer<'_>) -> BenchRow {
    let t0 = Instant::now();
    let mut row = BenchRow {
        input_id: sc.input.id.clone(),
        method: Method::Uniform,
        mode_index: None,
        tol: None,
        eigenvalue: None,
        ssim: None,
        dice: None,
        oracle_evals: 0,
        restarts: None,
        converged: None,
        wall_time_ms: 0.0,
        note: String::new(),
    };
    let scored = uniform_input(sc.oracle, &sc.input.tensor, sc.cfg, &sc.input.id)
        .and_then(|adv| sc.score(&adv));
    match scored {
        Ok((s, d)) => {
            row.ssim = s;
            row.dice = Some(d);
            row.oracle_evals = 1;
        }
        Err(e) => row.note = e.to_string(),
    }
    row.wall_time_ms = ms(t0);
    row
}

/// Uniform noise with the L2 norm of the unclamped penetrative step `δ·lift(v)`
/// for a unit `v`, seeded per input.
pub fn uniform_input(
    oracle: &OracleHandle,
    base: &Tensor,
    cfg: &BenchConfig,
    input_id: &str,
) -> Result<Tensor> {
    let adapter = Adapter::for_oracle(oracle.info())?;
    let n_in = base.numel();
    let n = adapter.dim(n_in);
    let magnitude = cfg.attack.resolved_delta(n) * (n_in as f64 / n as f64).sqrt();
    let seed = derive_seed(cfg.seed, &format!("uniform/{input_id}"));
    let adv = uniform_baseline(base, magnitude, seed)?;
    match cfg.attack.clamp {
        Some((lo, hi)) => Ok(Tensor::new(
            adv.shape().to_vec(),
            adv.data().iter().map(|x| x.clamp(lo, hi)).collect(),
        )?),
        None => Ok(adv),
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Per `(method, mode_index, tol)` means and population variances over the
/// rows that succeeded.
pub fn summarize_rows(rows: &[BenchRow]) -> Vec<GroupSummary> {
    type Key = (Method, Option<usize>, Option<u64>);
    let mut groups: Vec<(Key, Vec<&BenchRow>)> = Vec::new();
    for r in rows {
        let key = (r.method, r.mode_index, r.tol.map(f64::to_bits));
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((method, mode_index, tol), g)| {
            let ok: Vec<&BenchRow> = g.iter().copied().filter(|r| r.note.is_empty()).collect();
            let stat = |f: &dyn Fn(&BenchRow) -> Option<f64>| {
                let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                mean_variance(&v).ok()
            };
            GroupSummary {
                method,
                mode_index,
                tol: tol.map(f64::from_bits),
                count: ok.len(),
                failed: g.len() - ok.len(),
                ssim: stat(&|r| r.ssim),
                dice: stat(&|r| r.dice),
                eigenvalue: stat(&|r| r.eigenvalue),
                oracle_evals: stat(&|r| Some(r.oracle_evals as f64)),
            }
        })
        .collect()
}

pub fn write_rows(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<BenchRow>, _>>()?)
}

/// The `bench` subcommand: returns `Ok(false)` when every input failed.
pub fn run_bench_command(args: &BenchArgs) -> Result<bool> {
    let cfg = BenchConfig::from_args(args)?;
    let inputs = load_inputs(&args.inputs, args.masks.as_deref())?;
    let outcome = run_bench(&inputs, &cfg, || open_oracle(&args.oracle));
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    write_rows(&args.out_dir.join(BENCH_FILE), &outcome.rows)?;
    write_json(
        &args.out_dir.join(SUMMARY_FILE),
        &summarize_rows(&outcome.rows),
    )?;
    for r in outcome.rows.iter().filter(|r| !r.note.is_empty()) {
        eprintln!("{} {:?}: {}", r.input_id, r.method, r.note);
    }
    Ok(outcome.failed_inputs() < inputs.len())
}
