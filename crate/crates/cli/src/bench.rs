//! Scaling suites: a generator grid under one controller, one CSV row per run.

use std::io::{Read, Write};
use std::time::Instant;

use anyhow::{bail, Context};
use hk_core::controllers::ControllerSpec;
use hk_core::engine::{run, RunConfig, DEFAULT_MAX_STEPS};
use hk_core::fit::{fit_rows, ExponentFit, ResultRow};
use hk_core::instances::{generate, InstanceSpec};
use hk_core::Mode;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}

fn default_mode() -> Mode {
    Mode::Float64
}

/// A benchmark grid. `sizes` are `k` for the dumbbell and three-cluster
/// generators and `n` for the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub generator: String,
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub generator_params: Map<String, Value>,
    pub controller: ControllerSpec,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Strategic agent count; defaults to what the controller needs.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
}

struct Job {
    instance: InstanceSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub generator: String,
    pub controller: String,
    /// Unknown when re-fitting from a results file.
    pub mode: Option<Mode>,
    pub rows: usize,
    pub converged: usize,
    pub not_converged: usize,
    pub errors: Vec<String>,
    /// Omitted with fewer than three distinct converged sizes.
    pub fit: Option<ExponentFit>,
}

impl Summary {
    pub fn from_rows(generator: &str, controller: &str, mode: Option<Mode>, rows: &[ResultRow]) -> Summary {
        Summary {
            generator: generator.to_string(),
            controller: controller.to_string(),
            mode,
            rows: rows.len(),
            converged: rows.iter().filter(|r| r.convergence_time.is_some()).count(),
            not_converged: rows
                .iter()
                .filter(|r| r.convergence_time.is_none() && r.error.is_none())
                .count(),
            errors: rows
                .iter()
                .filter_map(|r| r.error.as_ref().map(|e| format!("n={}: {e}", r.n)))
                .collect(),
            fit: fit_rows(rows),
        }
    }
}

impl SuiteConfig {
    /// Builds every instance and controller up front so that a bad grid fails
    /// before any run starts.
    fn jobs(&self) -> anyhow::Result<Vec<Job>> {
        if self.sizes.is_empty() || self.seeds.is_empty() {
            bail!("suite grid is empty");
        }
        if self.max_steps < 1 {
            bail!("max_steps must be at least 1");
        }
        let mut jobs = Vec::new();
        for &size in &self.sizes {
            for &seed in &self.seeds {
                let inst = generate(&self.generator, size, &self.generator_params, self.mode, seed)
                    .with_context(|| format!("generator {} at size {size}", self.generator))?;
                let m = match self.m {
                    Some(m) => m,
                    None => self.controller.default_m(&inst)?,
                };
                let inst = inst.with_m(m);
                self.controller
                    .build(&inst)
                    .with_context(|| format!("controller {} at size {size}", self.controller.controller))?;
                jobs.push(Job { instance: inst });
            }
        }
        Ok(jobs)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.jobs().map(|_| ())
    }

    /// Runs the grid on up to `workers` threads; rows come back in grid order.
    pub fn execute(&self, workers: usize) -> anyhow::Result<Vec<ResultRow>> {
        let jobs = self.jobs()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()?;
        let config = RunConfig::default().max_steps(self.max_steps);
        Ok(pool.install(|| jobs.par_iter().map(|job| self.run_one(job, &config)).collect()))
    }

    fn run_one(&self, job: &Job, config: &RunConfig) -> ResultRow {
        let inst = &job.instance;
        let start = Instant::now();
        let outcome = self
            .controller
            .build(inst)
            .and_then(|mut c| run(inst, c.as_mut(), config));
        let wall_ms = start.elapsed().as_millis() as u64;
        let mut row = ResultRow {
            n: inst.n,
            m: inst.m,
            generator: self.generator.clone(),
            controller: self.controller.controller.clone(),
            convergence_time: None,
            steps: 0,
            wall_ms,
            error: None,
        };
        match outcome {
            Ok(rec) => {
                row.convergence_time = rec.convergence_time.time();
                row.steps = rec.steps_executed;
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    n: usize,
    m: usize,
    generator: String,
    controller: String,
    convergence_time: String,
    steps: u64,
    wall_ms: u64,
}

const NOT_CONVERGED: &str = "NOT_CONVERGED";
const ERROR_PREFIX: &str = "ERROR: ";

/// Writes rows with header `n,m,generator,controller,convergence_time,steps,wall_ms`.
pub fn write_rows(out: impl Write, rows: &[ResultRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        let time = match (&r.error, r.convergence_time) {
            (Some(e), _) => format!("{ERROR_PREFIX}{e}"),
            (None, Some(t)) => t.to_string(),
            (None, None) => NOT_CONVERGED.to_string(),
        };
        w.serialize(CsvRow {
            n: r.n,
            m: r.m,
            generator: r.generator.clone(),
            controller: r.controller.clone(),
            convergence_time: time,
            steps: r.steps,
            wall_ms: r.wall_ms,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(input: impl Read) -> anyhow::Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let r: CsvRow = rec?;
        let (convergence_time, error) = if r.convergence_time == NOT_CONVERGED {
            (None, None)
        } else if let Some(e) = r.convergence_time.strip_prefix(ERROR_PREFIX) {
            (None, Some(e.to_string()))
        } else {
            let t = r
                .convergence_time
                .parse()
                .with_context(|| format!("bad convergence_time {:?}", r.convergence_time))?;
            (Some(t), None)
        };
        rows.push(ResultRow {
            n: r.n,
            m: r.m,
            generator: r.generator,
            controller: r.controller,
            convergence_time,
            steps: r.steps,
            wall_ms: r.wall_ms,
            error,
        });
    }
    Ok(rows)
}
