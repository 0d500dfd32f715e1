use std::collections::BTreeMap;
use std::time::Instant;

use embia::gmm::within_cluster_ss;
use embia::init::{
    align_labels, anneal_fit, bia_init, burnin_pyramid, hclust_init, random_z, stream_rng, AnnealSchedule, BiaConfig,
};
use embia::{
    em_fit, DataKind, Dataset, FitFlags, FitResult, GaussianMixture, LatentClass, MixtureFamily, StochasticBlock,
};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spec::{ExperimentSpec, InitOptions, Model};
use crate::HarnessError;

/// A run attains the global mode when it lies this close to the best non-spurious objective.
pub const ATTAIN_TOL: f64 = 0.5;

/// Nearest integer, halves rounded up.
pub fn bin_of(value: f64) -> i64 {
    (value + 0.5).floor() as i64
}

/// A fit with its parameters serialized, so all families share one type.
pub type ErasedFit = FitResult<serde_json::Value>;

fn erase<P: Serialize>(fit: FitResult<P>) -> ErasedFit {
    FitResult {
        objective: fit.objective,
        trace: fit.trace,
        responsibilities: fit.responsibilities,
        params: serde_json::to_value(&fit.params).expect("parameters serialize"),
        iterations: fit.iterations,
        converged: fit.converged,
        flags: fit.flags,
    }
}

fn fit_family<F: MixtureFamily>(
    family: &F,
    spec: &ExperimentSpec,
    repetition: usize,
    continuous: Option<&embia::nalgebra::DMatrix<f64>>,
) -> Result<ErasedFit, HarnessError> {
    let conv = spec.convergence()?;
    let mut rng = stream_rng(spec.seed, repetition as u64);
    let n = family.n_obs();
    let fit = match spec.init {
        InitOptions::Random => em_fit(family, &random_z(n, spec.groups, &mut rng)?, &conv)?,
        InitOptions::Hclust => {
            let data = continuous
                .ok_or_else(|| HarnessError::Validation("hierarchical starts need continuous data".into()))?;
            em_fit(family, &hclust_init(data, spec.groups)?, &conv)?
        }
        InitOptions::Burnin(cfg) => em_fit(family, &burnin_pyramid(family, spec.groups, &cfg, &mut rng)?, &conv)?,
        InitOptions::Anneal(schedule) => {
            let schedule = AnnealSchedule::new(schedule.nu0, schedule.rate, schedule.stage)?;
            anneal_fit(family, &random_z(n, spec.groups, &mut rng)?, &schedule, &conv)?
        }
        InitOptions::Bia { starts, pre_iterations } => {
            let cfg = BiaConfig::new(starts, pre_iterations, rng.next_u64())?;
            bia_init(family, spec.groups, &cfg, &conv)?
        }
    };
    Ok(erase(fit))
}

/// One repetition of an experiment: the start drawn from stream `repetition` of the master seed.
pub fn fit_once(spec: &ExperimentSpec, dataset: &Dataset, repetition: usize) -> Result<ErasedFit, HarnessError> {
    spec.validate(Some(dataset))?;
    let x = &dataset.values;
    match spec.model {
        Model::Gmm => {
            let structure = spec.structure.expect("validated");
            fit_family(&GaussianMixture::new(x, structure)?, spec, repetition, Some(x))
        }
        Model::Lca => fit_family(&LatentClass::new(x)?, spec, repetition, None),
        Model::Sbm => fit_family(&StochasticBlock::with_flat_priors(x, spec.groups)?, spec, repetition, None),
    }
}

/// Outcome of a single repetition as stored in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repetition: usize,
    /// Convergent objective; `None` when the run failed.
    pub objective: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub flags: FitFlags,
    pub error: Option<String>,
    pub trace: Vec<f64>,
    pub params: Option<serde_json::Value>,
    /// Row-argmax memberships, lowest index on ties.
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl RunRecord {
    fn from_outcome(repetition: usize, outcome: Result<ErasedFit, HarnessError>, elapsed_ms: Option<f64>) -> Self {
        match outcome {
            Ok(fit) => Self {
                repetition,
                objective: fit.objective.is_finite().then_some(fit.objective),
                iterations: fit.iterations,
                converged: fit.converged,
                flags: fit.flags,
                error: (!fit.objective.is_finite()).then(|| "non-finite objective".to_string()),
                labels: fit.responsibilities.hard_labels(),
                trace: fit.trace,
                params: Some(fit.params),
                elapsed_ms,
            },
            Err(e) => Self {
                repetition,
                objective: None,
                iterations: 0,
                converged: false,
                flags: FitFlags::default(),
                error: Some(e.to_string()),
                trace: Vec::new(),
                params: None,
                labels: Vec::new(),
                elapsed_ms,
            },
        }
    }

    pub fn is_spurious(&self) -> bool {
        self.flags.spurious_candidate
    }
}

/// Summary of the convergent objectives over all repetitions.
///
/// Bin counts cover every finite objective, spurious or not, so
/// `sum(bins) + failed == repetitions`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartDistribution {
    pub repetitions: usize,
    /// Non-spurious convergent objectives, ascending.
    pub values: Vec<f64>,
    /// Objectives of fits flagged spurious, ascending.
    pub spurious_values: Vec<f64>,
    pub bins: BTreeMap<i64, usize>,
    /// Largest non-spurious objective.
    pub best: Option<f64>,
    /// Runs within [`ATTAIN_TOL`] of `best`.
    pub attained: usize,
    pub attain_rate: f64,
    pub failed: usize,
    /// Runs flagged with coincident components.
    pub collapsed: usize,
}

impl RestartDistribution {
    pub fn from_runs(runs: &[RunRecord]) -> Self {
        let mut values = Vec::new();
        let mut spurious_values = Vec::new();
        let mut bins = BTreeMap::new();
        let mut failed = 0;
        for r in runs {
            match r.objective {
                Some(v) => {
                    *bins.entry(bin_of(v)).or_insert(0) += 1;
                    if r.is_spurious() {
                        spurious_values.push(v);
                    } else {
                        values.push(v);
                    }
                }
                None => failed += 1,
            }
        }
        values.sort_by(f64::total_cmp);
        spurious_values.sort_by(f64::total_cmp);
        let best = values.last().copied();
        let attained = best.map_or(0, |b| values.iter().filter(|&&v| b - v <= ATTAIN_TOL).count());
        let repetitions = runs.len();
        Self {
            repetitions,
            values,
            spurious_values,
            bins,
            best,
            attained,
            attain_rate: if repetitions > 0 { attained as f64 / repetitions as f64 } else { 0.0 },
            failed,
            collapsed: runs.iter().filter(|r| r.objective.is_some() && r.flags.collapsed).count(),
        }
    }

    pub fn bin_count(&self, bin: i64) -> usize {
        self.bins.get(&bin).copied().unwrap_or(0)
    }

    /// Size of the integer bin holding the best non-spurious objective.
    pub fn best_bin_count(&self) -> usize {
        self.best.map_or(0, |b| self.bin_count(bin_of(b)))
    }

    /// The most populated bin (lowest bin on ties).
    pub fn modal_bin(&self) -> Option<(i64, usize)> {
        self.bins.iter().fold(None, |acc, (&b, &c)| match acc {
            Some((_, best)) if best >= c => acc,
            _ => Some((b, c)),
        })
    }

    /// Runs whose objective is within `tol` of `target`.
    pub fn count_near(&self, target: f64, tol: f64) -> usize {
        self.values.iter().chain(&self.spurious_values).filter(|v| (*v - target).abs() <= tol).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Spread repetitions over the rayon pool; results do not depend on it.
    pub parallel: bool,
    /// Record wall-clock time per run. Reports then stop being byte-reproducible.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { parallel: true, timing: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub label: String,
    pub spec: ExperimentSpec,
    pub distribution: RestartDistribution,
    pub runs: Vec<RunRecord>,
}

pub fn run_experiment(spec: &ExperimentSpec, dataset: &Dataset) -> Result<ExperimentReport, HarnessError> {
    run_experiment_with(spec, dataset, RunOptions::default())
}

pub fn run_experiment_with(
    spec: &ExperimentSpec,
    dataset: &Dataset,
    options: RunOptions,
) -> Result<ExperimentReport, HarnessError> {
    spec.validate(Some(dataset))?;
    let one = |rep: usize| {
        let start = Instant::now();
        let outcome = fit_once(spec, dataset, rep);
        let elapsed = options.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
        RunRecord::from_outcome(rep, outcome, elapsed)
    };
    let runs: Vec<RunRecord> = if options.parallel {
        (0..spec.repetitions).into_par_iter().map(one).collect()
    } else {
        (0..spec.repetitions).map(one).collect()
    };
    Ok(ExperimentReport {
        label: spec.init.kind().to_string(),
        spec: spec.clone(),
        distribution: RestartDistribution::from_runs(&runs),
        runs,
    })
}

/// Two init parameters to vary over a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SweepGrid {
    /// Rows are starting exponents, columns are rates; the stage length is fixed.
    Anneal { nu0: Vec<f64>, rate: Vec<f64>, stage: usize },
    /// Rows are numbers of starts, columns are preliminary iteration counts.
    Bia { starts: Vec<usize>, pre_iterations: Vec<usize> },
}

impl SweepGrid {
    fn axes(&self) -> (&'static str, Vec<f64>, &'static str, Vec<f64>) {
        match self {
            Self::Anneal { nu0, rate, .. } => ("nu0", nu0.clone(), "rate", rate.clone()),
            Self::Bia { starts, pre_iterations } => (
                "starts",
                starts.iter().map(|&v| v as f64).collect(),
                "pre_iterations",
                pre_iterations.iter().map(|&v| v as f64).collect(),
            ),
        }
    }

    fn init_at(&self, r: usize, c: usize) -> Result<InitOptions, HarnessError> {
        Ok(match self {
            Self::Anneal { nu0, rate, stage } => InitOptions::Anneal(AnnealSchedule::new(nu0[r], rate[c], *stage)?),
            Self::Bia { starts, pre_iterations } => {
                InitOptions::Bia { starts: starts[r], pre_iterations: pre_iterations[c] }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub row: f64,
    pub col: f64,
    /// Best non-spurious objective over the cell's repetitions.
    pub objective: Option<f64>,
    /// Some run ended with coincident components (a saddle rather than a mode).
    pub saddle: bool,
    pub distribution: RestartDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub row_name: String,
    pub col_name: String,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    pub cells: Vec<Vec<SweepCell>>,
}

impl SweepResult {
    pub fn objectives(&self) -> Vec<Vec<Option<f64>>> {
        self.cells.iter().map(|row| row.iter().map(|c| c.objective).collect()).collect()
    }

    /// The objective matrix as delimited text, header row first; failed cells are `NA`.
    pub fn to_delimited(&self, sep: char) -> String {
        let mut out = format!("{}\\{}", self.row_name, self.col_name);
        for c in &self.cols {
            out.push(sep);
            out.push_str(&c.to_string());
        }
        out.push('\n');
        for (r, row) in self.rows.iter().zip(&self.cells) {
            out.push_str(&r.to_string());
            for cell in row {
                out.push(sep);
                match cell.objective {
                    Some(v) => out.push_str(&v.to_string()),
                    None => out.push_str("NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Runs `base` at every grid point, replacing its init with the grid's.
pub fn sweep(base: &ExperimentSpec, grid: &SweepGrid, dataset: &Dataset) -> Result<SweepResult, HarnessError> {
    let (row_name, rows, col_name, cols) = grid.axes();
    if rows.is_empty() || cols.is_empty() {
        return Err(HarnessError::Validation("sweep grid is empty".into()));
    }
    let points: Vec<(usize, usize)> = (0..rows.len()).flat_map(|r| (0..cols.len()).map(move |c| (r, c))).collect();
    let specs = points
        .iter()
        .map(|&(r, c)| Ok(base.clone().with_init(grid.init_at(r, c)?)))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    for s in &specs {
        s.validate(Some(dataset))?;
    }
    let reports = specs
        .par_iter()
        .map(|s| run_experiment_with(s, dataset, RunOptions { parallel: false, timing: false }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut cells: Vec<Vec<SweepCell>> = vec![Vec::with_capacity(cols.len()); rows.len()];
    for (&(r, c), report) in points.iter().zip(reports) {
        let d = report.distribution;
        cells[r].push(SweepCell {
            row: rows[r],
            col: cols[c],
            objective: d.best,
            saddle: d.collapsed > 0,
            distribution: d,
        });
    }
    Ok(SweepResult { row_name: row_name.into(), col_name: col_name.into(), rows, cols, cells })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub objective_a: f64,
    pub objective_b: f64,
    /// Observations whose hard label differs once `b` is aligned to `a`.
    pub changed: Vec<usize>,
    pub changes: usize,
    pub wss_a: Option<f64>,
    pub wss_b: Option<f64>,
}

/// Aligns `b` to `a`, hardens both and counts membership changes.
pub fn compare_solutions<P>(a: &FitResult<P>, b: &FitResult<P>, dataset: &Dataset) -> Result<Comparison, HarnessError> {
    let (za, zb) = (&a.responsibilities, &b.responsibilities);
    if za.n() != zb.n() || za.groups() != zb.groups() || za.n() != dataset.n() {
        return Err(HarnessError::Validation(format!(
            "fits of shape {}x{} and {}x{} cannot be compared on {} observations",
            za.n(),
            za.groups(),
            zb.n(),
            zb.groups(),
            dataset.n()
        )));
    }
    let la = za.hard_labels();
    let lb = align_labels(za, zb).hard_labels();
    let changed: Vec<usize> = (0..la.len()).filter(|&i| la[i] != lb[i]).collect();
    let wss =
        |labels: &[usize]| (dataset.kind == DataKind::Continuous).then(|| within_cluster_ss(&dataset.values, labels));
    Ok(Comparison {
        objective_a: a.objective,
        objective_b: b.objective,
        changes: changed.len(),
        changed,
        wss_a: wss(&la),
        wss_b: wss(&lb),
    })
}
