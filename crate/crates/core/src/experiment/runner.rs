use std::time::{Duration, Instant};

use rand::Rng as _;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Method};
use crate::baselines::{dr_policy, DrConfig};
use crate::env::{jumpstart_eval, RealWorldSpec};
use crate::error::{Error, Result};
use crate::policy::LqrPolicyProvider;
use crate::rng::{derive_rng, derive_seed};
use crate::search::{policy_search, SearchTrace};
use crate::ParamVector;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub seed: u64,
    pub jumpstart_mean: f64,
    pub jumpstart_stderr: f64,
    /// Best observed window reward during search; `None` for DR.
    pub best_y: Option<f64>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub trials: usize,
    /// Mean of the per-seed jumpstart means.
    pub mean: f64,
    /// `sqrt(Σ seᵢ²) / n`, the standard error of the mean of means.
    pub pooled_stderr: f64,
    pub best_y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn row(&self, method: Method, seed: u64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.method == method && r.seed == seed)
    }

    /// Methods in first-appearance order.
    pub fn methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method);
            }
        }
        out
    }

    pub fn aggregate(&self, method: Method) -> Option<Aggregate> {
        let rows: Vec<&ResultRow> = self.rows_for(method).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r.jumpstart_mean).sum::<f64>() / n;
        let pooled_stderr = rows.iter().map(|r| r.jumpstart_stderr.powi(2)).sum::<f64>().sqrt() / n;
        let best_y = rows
            .iter()
            .map(|r| r.best_y)
            .collect::<Option<Vec<f64>>>()
            .map(|ys| ys.iter().sum::<f64>() / n);
        Some(Aggregate {
            method,
            trials: rows.len(),
            mean,
            pooled_stderr,
            best_y,
        })
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        self.methods().into_iter().filter_map(|m| self.aggregate(m)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrialTrace {
    pub method: Method,
    pub seed: u64,
    pub trace: SearchTrace,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub table: ResultTable,
    /// One per search cell, in table-row order.
    pub traces: Vec<TrialTrace>,
}

/// The real system's latent parameter for a trial seed, uniform in the cube.
pub fn real_parameter(seed: u64, dim: usize) -> ParamVector {
    let mut rng = derive_rng(seed, "real-parameter", 0);
    ParamVector::from_fn(dim, |_, _| rng.random::<f64>())
}

/// Seed of the jumpstart episodes for a trial; shared by all methods so their
/// jumpstart scores are paired.
pub fn jumpstart_seed(seed: u64) -> u64 {
    derive_seed(seed, "jumpstart", 0)
}

struct CellOutput {
    row: ResultRow,
    trace: Option<SearchTrace>,
}

fn run_cell(cfg: &ExperimentConfig, provider: &LqrPolicyProvider, method: Method, seed: u64) -> Result<CellOutput> {
    let started = Instant::now();
    let trial_err = |stage: &'static str| {
        move |e: Error| Error::Trial {
            method: method.name().to_string(),
            seed,
            stage,
            source: Box::new(e),
        }
    };
    let plant = provider.plant().clone();
    let theta_r = real_parameter(seed, plant.dim());
    let world = RealWorldSpec::new(plant, theta_r, cfg.plant.noise_std).map_err(trial_err("world setup"))?;
    let (episodes, horizon) = (cfg.jumpstart.episodes, cfg.jumpstart.horizon);
    let (mean, stderr, best_y, trace) = match method {
        Method::Search(variant) => {
            let scfg = cfg.search.search_config(variant, seed);
            let trace = policy_search(&scfg, provider, &world).map_err(trial_err("policy search"))?;
            let rule = trace.final_policy.bind(provider);
            let (m, se) = jumpstart_eval(&world, &rule, episodes, horizon, jumpstart_seed(seed))
                .map_err(trial_err("jumpstart"))?;
            (m, se, Some(trace.best_y()), Some(trace))
        }
        Method::DomainRandomisation => {
            let dr = DrConfig {
                seed: derive_seed(seed, "dr", 0),
                ..cfg.dr.clone()
            };
            let rule = dr_policy(&dr, provider).map_err(trial_err("DR policy"))?;
            let (m, se) = jumpstart_eval(&world, &rule, episodes, horizon, jumpstart_seed(seed))
                .map_err(trial_err("jumpstart"))?;
            (m, se, None, None)
        }
    };
    Ok(CellOutput {
        row: ResultRow {
            method,
            seed,
            jumpstart_mean: mean,
            jumpstart_stderr: stderr,
            best_y,
            wall_time: started.elapsed(),
        },
        trace,
    })
}

/// Run every (method, seed) cell. Rows are ordered by method, then seed, as listed
/// in the config; the first failing cell in that order is reported.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let plant = cfg.plant.build()?;
    let provider = LqrPolicyProvider::new(plant)?;
    let cells: Vec<(Method, u64)> = cfg
        .variants
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("jobs: {e}")))?;
    let outputs: Vec<Result<CellOutput>> =
        pool.install(|| cells.par_iter().map(|&(m, s)| run_cell(cfg, &provider, m, s)).collect());
    let mut table = ResultTable::default();
    let mut traces = Vec::new();
    for out in outputs {
        let out = out?;
        if let Some(trace) = out.trace {
            traces.push(TrialTrace {
                method: out.row.method,
                seed: out.row.seed,
                trace,
            });
        }
        table.rows.push(out.row);
    }
    Ok(ExperimentResults { table, traces })
}
