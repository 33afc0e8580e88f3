//! Seeded benchmark instances and the method comparison harness.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anneal::{anneal, AnnealSchedule, TraceEntry};
use crate::baselines::{direct_joint, fedorov_exchange, mean_impute, uniform_sample, MethodResult};
use crate::error::{Result, SsioError};
use crate::linalg::{
    hard_cost_or_inf, parse_selection_bits, selection_bits, Criterion, HardDesign,
    IncompleteMatrix, MissingCell,
};

/// Parameters of one randomly generated benchmark instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub id: String,
    pub n: usize,
    pub p: usize,
    pub missing_fraction: f64,
    pub r: usize,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains([',', '"', '\n']) {
            return Err(SsioError::input(format!("bad instance id {:?}", self.id)));
        }
        if self.p == 0 || self.n < self.p {
            return Err(SsioError::input(format!(
                "{}: need n >= p >= 1, got {}x{}",
                self.id, self.n, self.p
            )));
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return Err(SsioError::input(format!(
                "{}: missing fraction {} outside [0, 1)",
                self.id, self.missing_fraction
            )));
        }
        if self.r < self.p || self.r > self.n {
            return Err(SsioError::input(format!(
                "{}: r = {} outside [{}, {}]",
                self.id, self.r, self.p, self.n
            )));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(SsioError::input(format!(
                "{}: bad value range [{}, {}]",
                self.id, self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// Number of missing cells: `ceil(fraction * n * p)`.
    pub fn missing_count(&self) -> usize {
        let exact = self.missing_fraction * (self.n * self.p) as f64;
        // guard against 0.24 * 100 = 24.000000000000004
        (exact - 1e-9).ceil().max(0.0) as usize
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        InstanceSpec {
            seed,
            ..self.clone()
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream seed derived from a master seed and a stream index.
pub fn stream_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(1)))
}

/// Draws the instance: known values i.i.d. uniform on `[lo, hi]`, missing
/// cells at distinct uniformly random positions with bounds `[lo, hi]`.
pub fn generate_instance(spec: &InstanceSpec) -> Result<IncompleteMatrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, p) = (spec.n, spec.p);
    let mut values = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            values[(i, j)] = if spec.lo == spec.hi {
                spec.lo
            } else {
                rng.gen_range(spec.lo..=spec.hi)
            };
        }
    }
    let mut missing: Vec<MissingCell> = index::sample(&mut rng, n * p, spec.missing_count())
        .into_iter()
        .map(|k| MissingCell::new(k / p, k % p, spec.lo, spec.hi))
        .collect();
    missing.sort_by_key(|c| (c.row, c.col));
    IncompleteMatrix::new(values, missing)
}

/// The six configurations of the reference experiments.
pub fn table1_specs() -> Vec<InstanceSpec> {
    let row = |id: &str, n, p, f, r, lo, hi| InstanceSpec {
        id: id.into(),
        n,
        p,
        missing_fraction: f,
        r,
        lo,
        hi,
        seed: 0,
    };
    vec![
        row("E1", 20, 4, 0.125, 11, -1.0, 2.0),
        row("E2", 20, 4, 0.10, 12, 0.0, 4.0),
        row("E3", 20, 4, 0.1625, 12, -2.0, 2.0),
        row("E4", 20, 5, 0.24, 11, 0.0, 1.0),
        row("E5", 30, 5, 0.10, 12, 5.0, 10.0),
        row("E6", 30, 5, 0.10, 6, 5.0, 10.0),
    ]
}

/// A method in the comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Joint annealing on the incomplete matrix.
    Ssio,
    /// Mean imputation, then annealing on the completed matrix.
    MeanSsio,
    MeanFedorov,
    MeanUniform,
    /// Projected-gradient local descent, no annealing.
    Direct,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ssio,
        Method::MeanSsio,
        Method::MeanFedorov,
        Method::MeanUniform,
        Method::Direct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ssio => "ssio",
            Method::MeanSsio => "mean+ssio",
            Method::MeanFedorov => "mean+fedorov",
            Method::MeanUniform => "mean+uniform",
            Method::Direct => "direct",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| SsioError::input(format!("unknown method {name:?}")))
    }
}

/// Per-temperature record of an annealing run, kept for diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnealDiagnostics {
    pub trace: Vec<TraceEntry>,
    pub final_q: Vec<f64>,
}

/// One (instance, seed, method) cell of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub seed: u64,
    pub method: String,
    /// `None` when the method failed.
    #[serde(with = "opt_float")]
    pub cost: Option<f64>,
    /// SSIO cost divided by this method's cost.
    #[serde(with = "opt_float")]
    pub ratio_to_ssio: Option<f64>,
    #[serde(with = "opt_float")]
    pub wall_time_s: Option<f64>,
    pub converged: bool,
    /// Selection bitstring.
    pub s: String,
    /// `(row, col, value)` for every formerly missing cell.
    pub imputed_cells: Vec<(usize, usize, f64)>,
    pub error: Option<String>,
    #[serde(skip)]
    pub diagnostics: Option<AnnealDiagnostics>,
}

impl RunRecord {
    /// Rebuilds the completed matrix from the instance and the stored cells
    /// and re-evaluates the A-cost of the stored selection.
    pub fn recompute_cost(&self, problem: &IncompleteMatrix) -> Result<f64> {
        let s = parse_selection_bits(&self.s)?;
        let values: Vec<f64> = self.imputed_cells.iter().map(|c| c.2).collect();
        let x = problem.fill(&values)?;
        Ok(hard_cost_or_inf(&x, &s, Criterion::A))
    }
}

/// JSON has no infinity; non-finite values travel as strings ("inf").
mod opt_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, ser: S) -> Result<S::Ok, S::Error> {
        match v {
            None => ser.serialize_none(),
            Some(x) if x.is_finite() => ser.serialize_f64(*x),
            Some(x) => ser.serialize_str(&x.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(de)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) => t.parse().map(Some).map_err(serde::de::Error::custom),
        }
    }
}

/// Aggregate of one method against SSIO over all runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub failures: usize,
    /// Geometric mean of the finite, positive ratios.
    pub geo_mean_ratio: f64,
    pub median_ratio: f64,
    /// Share of runs where SSIO's cost is at most this method's.
    pub win_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatioReport {
    pub records: Vec<RunRecord>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl RatioReport {
    pub fn summary(&self, method: &str) -> MethodSummary {
        let rows: Vec<&RunRecord> = self.records.iter().filter(|r| r.method == method).collect();
        let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio_to_ssio).collect();
        let positive: Vec<f64> = ratios
            .iter()
            .cloned()
            .filter(|x| x.is_finite() && *x > 0.0)
            .collect();
        let geo = if positive.is_empty() {
            f64::NAN
        } else {
            (positive.iter().map(|x| x.ln()).sum::<f64>() / positive.len() as f64).exp()
        };
        let wins = ratios.iter().filter(|&&x| x <= 1.0).count();
        MethodSummary {
            method: method.to_string(),
            runs: rows.len(),
            failures: rows.iter().filter(|r| r.cost.is_none()).count(),
            geo_mean_ratio: geo,
            median_ratio: median(ratios.clone()),
            win_rate: if rows.is_empty() {
                f64::NAN
            } else {
                wins as f64 / rows.len() as f64
            },
        }
    }

    /// Summaries for every method except SSIO, in first-appearance order.
    pub fn summaries(&self) -> Vec<MethodSummary> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.records {
            if r.method != Method::Ssio.name() && !names.contains(&r.method.as_str()) {
                names.push(&r.method);
            }
        }
        names.into_iter().map(|m| self.summary(m)).collect()
    }

    /// One line with the geometric-mean ratio of every baseline.
    pub fn summary_line(&self) -> String {
        let parts: Vec<String> = self
            .summaries()
            .iter()
            .map(|s| {
                format!(
                    "{}: geo-mean ratio {:.4}, win rate {:.3}",
                    s.method, s.geo_mean_ratio, s.win_rate
                )
            })
            .collect();
        if parts.is_empty() {
            "ssio only: all ratios 1".to_string()
        } else {
            parts.join("; ")
        }
    }
}

/// Seeds used for the stochastic baselines of one run.
const FEDOROV_STREAM: u64 = 1;
const UNIFORM_STREAM: u64 = 2;

fn run_method(
    method: Method,
    problem: &IncompleteMatrix,
    r: usize,
    schedule: &AnnealSchedule,
    seed: u64,
) -> Result<(MethodResult, Option<AnnealDiagnostics>)> {
    let started = Instant::now();
    let annealed = |m: &IncompleteMatrix, name: &str| -> Result<_> {
        let (state, design) = anneal(m, r, schedule, Criterion::A)?;
        let converged = state.trace.iter().all(|t| t.converged);
        let iterations = state.trace.iter().map(|t| t.iterations).sum();
        Ok((
            MethodResult {
                method: name.into(),
                design,
                wall_time_s: started.elapsed().as_secs_f64(),
                iterations,
                converged,
            },
            Some(AnnealDiagnostics {
                trace: state.trace,
                final_q: state.q,
            }),
        ))
    };
    match method {
        Method::Ssio => annealed(problem, method.name()),
        Method::MeanSsio => {
            let complete = IncompleteMatrix::complete(mean_impute(problem))?;
            annealed(&complete, method.name())
        }
        Method::MeanFedorov => Ok((
            fedorov_exchange(
                &mean_impute(problem),
                r,
                Criterion::A,
                stream_seed(seed, FEDOROV_STREAM),
            )?,
            None,
        )),
        Method::MeanUniform => Ok((
            uniform_sample(&mean_impute(problem), r, stream_seed(seed, UNIFORM_STREAM))?,
            None,
        )),
        Method::Direct => Ok((direct_joint(problem, r, Criterion::A)?, None)),
    }
}

fn record_for(
    spec: &InstanceSpec,
    problem: &IncompleteMatrix,
    seed: u64,
    method: Method,
    outcome: Result<(MethodResult, Option<AnnealDiagnostics>)>,
    timings: bool,
) -> RunRecord {
    let mut rec = RunRecord {
        instance_id: spec.id.clone(),
        seed,
        method: method.name().into(),
        cost: None,
        ratio_to_ssio: None,
        wall_time_s: None,
        converged: false,
        s: String::new(),
        imputed_cells: Vec::new(),
        error: None,
        diagnostics: None,
    };
    match outcome {
        Ok((res, diag)) => {
            let HardDesign { s, imputed, cost } = &res.design;
            rec.cost = Some(*cost);
            rec.converged = res.converged;
            rec.s = selection_bits(s);
            rec.imputed_cells = problem
                .missing()
                .iter()
                .map(|c| (c.row, c.col, imputed[(c.row, c.col)]))
                .collect();
            rec.wall_time_s = timings.then_some(res.wall_time_s);
            rec.diagnostics = diag;
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

/// Runs every method on every (spec, seed) pair. The instance for a pair is
/// generated from `stream_seed(seed, spec index)`. Failures are recorded and
/// the run continues. Records come back in (spec, seed, method) order
/// regardless of scheduling.
pub fn run_comparison(
    specs: &[InstanceSpec],
    seeds: &[u64],
    methods: &[Method],
    schedule: &AnnealSchedule,
    timings: bool,
) -> Result<RatioReport> {
    if specs.is_empty() {
        return Err(SsioError::input("empty suite"));
    }
    if seeds.is_empty() || methods.is_empty() {
        return Err(SsioError::input("no seeds or no methods to run"));
    }
    schedule.validate()?;
    let mut methods: Vec<Method> = methods.to_vec();
    methods.sort();
    methods.dedup();
    let mut instances = Vec::new();
    for (k, spec) in specs.iter().enumerate() {
        for &seed in seeds {
            let concrete = spec.with_seed(stream_seed(seed, k as u64));
            let problem = generate_instance(&concrete)?;
            instances.push((spec, seed, concrete, problem));
        }
    }
    let cells: Vec<(usize, Method)> = (0..instances.len())
        .flat_map(|i| methods.iter().map(move |&m| (i, m)))
        .collect();
    let mut records: Vec<RunRecord> = cells
        .par_iter()
        .map(|&(i, method)| {
            let (spec, seed, concrete, problem) = &instances[i];
            let outcome = run_method(method, problem, spec.r, schedule, concrete.seed);
            record_for(spec, problem, *seed, method, outcome, timings)
        })
        .collect();

    for chunk in records.chunks_mut(methods.len()) {
        let ssio = chunk
            .iter()
            .find(|r| r.method == Method::Ssio.name())
            .and_then(|r| r.cost);
        for rec in chunk.iter_mut() {
            rec.ratio_to_ssio = match (ssio, rec.cost) {
                (Some(_), Some(_)) if rec.method == Method::Ssio.name() => Some(1.0),
                (Some(a), Some(b)) => Some(if b.is_infinite() { 0.0 } else { a / b }),
                _ => None,
            };
        }
    }
    Ok(RatioReport { records })
}

/// Flat CSV row of a report.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    instance_id: String,
    seed: u64,
    method: String,
    cost: Option<f64>,
    ratio_to_ssio: Option<f64>,
    wall_time_s: Option<f64>,
    converged: bool,
}

pub const CSV_HEADER: &str = "instance_id,seed,method,cost,ratio_to_ssio,wall_time_s,converged";

fn csv_error(path: &Path, e: csv::Error) -> SsioError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    SsioError::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

/// Serializes the report as CSV (header always present).
pub fn report_to_csv(report: &RatioReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for r in &report.records {
        w.serialize(CsvRow {
            instance_id: r.instance_id.clone(),
            seed: r.seed,
            method: r.method.clone(),
            cost: r.cost,
            ratio_to_ssio: r.ratio_to_ssio,
            wall_time_s: r.wall_time_s,
            converged: r.converged,
        })
        .expect("in-memory CSV write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));
    out
}

/// Serializes the report as pretty JSON, including selections and imputed
/// cells.
pub fn report_to_json(report: &RatioReport) -> String {
    let mut s = serde_json::to_string_pretty(&report.records).expect("report serializes");
    s.push('\n');
    s
}

/// Output format for reports and results.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = SsioError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(SsioError::input(format!("unknown format {s:?}"))),
        }
    }
}

pub fn emit_report(report: &RatioReport, format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Csv => report_to_csv(report),
        Format::Json => report_to_json(report),
    };
    fs::write(path, text).map_err(|e| SsioError::io(path, e))
}

/// Reads back a CSV report. Selections and imputations are not part of the
/// CSV schema and come back empty.
pub fn read_csv_report(path: &Path) -> Result<RatioReport> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut records = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        records.push(RunRecord {
            instance_id: row.instance_id,
            seed: row.seed,
            method: row.method,
            cost: row.cost,
            ratio_to_ssio: row.ratio_to_ssio,
            wall_time_s: row.wall_time_s,
            converged: row.converged,
            s: String::new(),
            imputed_cells: Vec::new(),
            error: None,
            diagnostics: None,
        });
    }
    Ok(RatioReport { records })
}

pub fn read_json_report(path: &Path) -> Result<RatioReport> {
    let text = fs::read_to_string(path).map_err(|e| SsioError::io(path, e))?;
    let records: Vec<RunRecord> = serde_json::from_str(&text).map_err(|e| SsioError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    Ok(RatioReport { records })
}
