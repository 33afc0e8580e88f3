//! File formats and the solve driver behind the command-line tool.
//!
//! Design matrices are CSV files whose cells are numbers or the token `NA`.
//! Bounds for missing cells come from a `#bounds lo hi` directive (applies to
//! every missing cell) and/or a sidecar file of `i,j,lo,hi` rows with
//! 0-based indices, which takes precedence. Other `#` lines are comments.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::anneal::{anneal, AnnealSchedule, AnnealState};
use crate::baselines::{
    brute_force_joint, brute_force_select, direct_joint, fedorov_exchange, mean_impute,
    uniform_sample,
};
use crate::bench::Format;
use crate::error::{Result, SsioError};
use crate::extensions::{constrained_anneal, BudgetSpec};
use crate::linalg::{selection_bits, Criterion, HardDesign, IncompleteMatrix, MissingCell};

/// Grid points per missing cell for the exhaustive joint search.
pub const BRUTE_GRID_POINTS: usize = 51;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| SsioError::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> SsioError {
    SsioError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_float(path: &Path, line: usize, what: &str, tok: &str) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| !v.is_nan())
        .ok_or_else(|| parse_err(path, line, format!("{what}: cannot parse {:?} as a number", tok.trim())))
}

/// Directive lines (`#name args...`) and numeric rows of a CSV-like file.
struct Sheet {
    directives: Vec<(usize, String, Vec<String>)>,
    rows: Vec<(usize, Vec<String>)>,
}

fn split_sheet(text: &str) -> Sheet {
    let mut sheet = Sheet {
        directives: Vec::new(),
        rows: Vec::new(),
    };
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut words = rest.split_whitespace().map(str::to_string);
            if let Some(name) = words.next() {
                sheet.directives.push((k + 1, name, words.collect()));
            }
            continue;
        }
        sheet
            .rows
            .push((k + 1, line.split(',').map(|c| c.trim().to_string()).collect()));
    }
    sheet
}

fn parse_bounds_directive(path: &Path, line: usize, args: &[String]) -> Result<(f64, f64)> {
    if args.len() != 2 {
        return Err(parse_err(path, line, "#bounds expects two values: lo hi"));
    }
    let lo = parse_float(path, line, "#bounds lo", &args[0])?;
    let hi = parse_float(path, line, "#bounds hi", &args[1])?;
    if lo > hi {
        return Err(parse_err(path, line, format!("#bounds lo {lo} exceeds hi {hi}")));
    }
    Ok((lo, hi))
}

/// Reads an incomplete design matrix and, optionally, its bounds sidecar.
pub fn parse_matrix(path: &Path, sidecar: Option<&Path>) -> Result<IncompleteMatrix> {
    let sheet = split_sheet(&read(path)?);
    let mut global = None;
    for (line, name, args) in &sheet.directives {
        if name == "bounds" {
            if global.is_some() {
                return Err(parse_err(path, *line, "duplicate #bounds directive"));
            }
            global = Some(parse_bounds_directive(path, *line, args)?);
        }
    }
    if sheet.rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    let p = sheet.rows[0].1.len();
    let n = sheet.rows.len();
    let mut values = DMatrix::zeros(n, p);
    let mut na = Vec::new();
    for (i, (line, cells)) in sheet.rows.iter().enumerate() {
        if cells.len() != p {
            return Err(parse_err(
                path,
                *line,
                format!("expected {p} columns, found {}", cells.len()),
            ));
        }
        for (j, tok) in cells.iter().enumerate() {
            if tok == "NA" {
                values[(i, j)] = f64::NAN;
                na.push((i, j, *line));
            } else {
                let v = parse_float(path, *line, &format!("column {}", j + 1), tok)?;
                if !v.is_finite() {
                    return Err(parse_err(path, *line, format!("column {}: value {v} is not finite", j + 1)));
                }
                values[(i, j)] = v;
            }
        }
    }
    if n < p {
        return Err(parse_err(
            path,
            sheet.rows[n - 1].0,
            format!("{n} rows but {p} columns: need at least as many rows as columns"),
        ));
    }

    let mut explicit: Vec<Option<(f64, f64)>> = vec![None; na.len()];
    if let Some(side) = sidecar {
        let bounds = split_sheet(&read(side)?);
        for (line, cells) in &bounds.rows {
            if cells.len() != 4 {
                return Err(parse_err(side, *line, "expected i,j,lo,hi"));
            }
            let idx = |k: usize, what: &str| {
                cells[k]
                    .parse::<usize>()
                    .map_err(|_| parse_err(side, *line, format!("{what}: bad index {:?}", cells[k])))
            };
            let (i, j) = (idx(0, "i")?, idx(1, "j")?);
            let lo = parse_float(side, *line, "lo", &cells[2])?;
            let hi = parse_float(side, *line, "hi", &cells[3])?;
            if lo > hi {
                return Err(parse_err(side, *line, format!("lo {lo} exceeds hi {hi}")));
            }
            let k = na
                .iter()
                .position(|&(a, b, _)| (a, b) == (i, j))
                .ok_or_else(|| parse_err(side, *line, format!("({i}, {j}) is not an NA cell")))?;
            if explicit[k].is_some() {
                return Err(parse_err(side, *line, format!("duplicate bounds for ({i}, {j})")));
            }
            explicit[k] = Some((lo, hi));
        }
    }

    let mut missing = Vec::with_capacity(na.len());
    for (k, &(i, j, line)) in na.iter().enumerate() {
        let (lo, hi) = explicit[k].or(global).ok_or_else(|| {
            parse_err(
                path,
                line,
                format!(
                    "NA at cell ({}, {}) (row {}, column {}) has no bounds; add '#bounds lo hi' or a sidecar row",
                    i, j, i + 1, j + 1
                ),
            )
        })?;
        missing.push(MissingCell::new(i, j, lo, hi));
    }
    IncompleteMatrix::new(values, missing).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Writes the matrix with `NA` for missing cells. Uniform bounds go into a
/// `#bounds` directive; otherwise every cell's bounds are written to
/// `sidecar`, which is then required. Returns the sidecar path if written.
pub fn write_matrix(
    m: &IncompleteMatrix,
    path: &Path,
    sidecar: Option<&Path>,
) -> Result<Option<PathBuf>> {
    let mut out = String::new();
    let cells = m.missing();
    let uniform = cells
        .first()
        .map(|c| (c.lo, c.hi))
        .filter(|&(lo, hi)| cells.iter().all(|c| c.lo == lo && c.hi == hi));
    if let Some((lo, hi)) = uniform {
        out.push_str(&format!("#bounds {lo} {hi}\n"));
    }
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols())
            .map(|j| {
                if m.is_missing(i, j) {
                    "NA".to_string()
                } else {
                    format!("{}", m.values()[(i, j)])
                }
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| SsioError::io(path, e))?;
    if uniform.is_some() || cells.is_empty() {
        return Ok(None);
    }
    let side = sidecar.ok_or_else(|| {
        SsioError::input("cells have different bounds: a sidecar path is required")
    })?;
    let mut text = String::new();
    for c in cells {
        text.push_str(&format!("{},{},{},{}\n", c.row, c.col, c.lo, c.hi));
    }
    fs::write(side, text).map_err(|e| SsioError::io(side, e))?;
    Ok(Some(side.to_path_buf()))
}

/// Reads a budget: an `n x p` CSV of per-experiment feature costs with a
/// `#kappa k_1 ... k_p` directive.
pub fn parse_budget(path: &Path) -> Result<BudgetSpec> {
    let sheet = split_sheet(&read(path)?);
    let mut caps = None;
    for (line, name, args) in &sheet.directives {
        if name == "kappa" {
            if caps.is_some() {
                return Err(parse_err(path, *line, "duplicate #kappa directive"));
            }
            caps = Some(
                args.iter()
                    .map(|a| parse_float(path, *line, "#kappa", a))
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
    }
    let caps = caps.ok_or_else(|| parse_err(path, 1, "missing '#kappa k_1 ... k_p' directive"))?;
    let p = caps.len();
    let n = sheet.rows.len();
    let mut costs = DMatrix::zeros(n, p);
    for (i, (line, cells)) in sheet.rows.iter().enumerate() {
        if cells.len() != p {
            return Err(parse_err(
                path,
                *line,
                format!("expected {p} costs (one per #kappa value), found {}", cells.len()),
            ));
        }
        for (j, tok) in cells.iter().enumerate() {
            costs[(i, j)] = parse_float(path, *line, &format!("cost column {}", j + 1), tok)?;
        }
    }
    BudgetSpec::new(costs, caps).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Selection method of the solve command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Ssio,
    Fedorov,
    Uniform,
    Direct,
    Brute,
}

impl std::str::FromStr for SolveMethod {
    type Err = SsioError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ssio" => SolveMethod::Ssio,
            "fedorov" => SolveMethod::Fedorov,
            "uniform" => SolveMethod::Uniform,
            "direct" => SolveMethod::Direct,
            "brute" => SolveMethod::Brute,
            _ => return Err(SsioError::input(format!("unknown method {s:?}"))),
        })
    }
}

impl SolveMethod {
    pub fn name(self) -> &'static str {
        match self {
            SolveMethod::Ssio => "ssio",
            SolveMethod::Fedorov => "fedorov",
            SolveMethod::Uniform => "uniform",
            SolveMethod::Direct => "direct",
            SolveMethod::Brute => "brute",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveConfig {
    pub input: PathBuf,
    pub bounds: Option<PathBuf>,
    pub r: usize,
    pub criterion: Criterion,
    pub schedule: AnnealSchedule,
    pub method: SolveMethod,
    pub budget: Option<PathBuf>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget.is_some() && self.method != SolveMethod::Ssio {
            return Err(SsioError::input("--budget is only supported with --method ssio"));
        }
        if self.budget.is_some() && self.criterion != Criterion::A {
            return Err(SsioError::input("--budget is only supported with --criterion a"));
        }
        self.schedule.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub temperature: f64,
    pub free_energy: f64,
    pub entropy: f64,
}

/// Result of the solve command.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveOutput {
    pub s: String,
    /// `(row, col, value)` for every formerly missing cell (0-based).
    pub imputed_cells: Vec<(usize, usize, f64)>,
    pub cost: f64,
    pub method: String,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_energy_trace: Option<Vec<TracePoint>>,
}

impl SolveOutput {
    fn new(
        problem: &IncompleteMatrix,
        design: &HardDesign,
        method: SolveMethod,
        converged: bool,
        state: Option<&AnnealState>,
    ) -> Self {
        SolveOutput {
            s: selection_bits(&design.s),
            imputed_cells: problem
                .missing()
                .iter()
                .map(|c| (c.row, c.col, design.imputed[(c.row, c.col)]))
                .collect(),
            cost: design.cost,
            method: method.name().into(),
            converged,
            free_energy_trace: state.map(|st| {
                st.trace
                    .iter()
                    .map(|t| TracePoint {
                        temperature: t.temperature,
                        free_energy: t.free_energy,
                        entropy: t.entropy,
                    })
                    .collect()
            }),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("solve output serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        format!(
            "method,cost,converged,s\n{},{},{},{}\n",
            self.method, self.cost, self.converged, self.s
        )
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

/// Runs the configured method on an already-parsed problem.
pub fn solve_problem(
    problem: &IncompleteMatrix,
    config: &SolveConfig,
    budget: Option<&BudgetSpec>,
) -> Result<SolveOutput> {
    config.validate()?;
    let r = config.r;
    let crit = config.criterion;
    let out = match config.method {
        SolveMethod::Ssio => {
            let (state, design) = match budget {
                Some(b) => constrained_anneal(problem, r, &config.schedule, b)?,
                None => anneal(problem, r, &config.schedule, crit)?,
            };
            let converged = state.trace.last().is_some_and(|t| t.converged);
            SolveOutput::new(problem, &design, config.method, converged, Some(&state))
        }
        SolveMethod::Fedorov => {
            let res = fedorov_exchange(&mean_impute(problem), r, crit, config.seed)?;
            SolveOutput::new(problem, &res.design, config.method, res.converged, None)
        }
        SolveMethod::Uniform => {
            let mut res = uniform_sample(&mean_impute(problem), r, config.seed)?;
            res.design.cost = crate::linalg::hard_cost_or_inf(&res.design.imputed, &res.design.s, crit);
            SolveOutput::new(problem, &res.design, config.method, res.converged, None)
        }
        SolveMethod::Direct => {
            let res = direct_joint(problem, r, crit)?;
            SolveOutput::new(problem, &res.design, config.method, res.converged, None)
        }
        SolveMethod::Brute => {
            let design = if problem.is_complete() {
                brute_force_select(&problem.to_complete()?, r, crit)?
            } else {
                brute_force_joint(problem, r, crit, BRUTE_GRID_POINTS)?.design
            };
            SolveOutput::new(problem, &design, config.method, true, None)
        }
    };
    Ok(out)
}

/// Parses the inputs named by the config and solves.
pub fn solve(config: &SolveConfig) -> Result<SolveOutput> {
    config.validate()?;
    let problem = parse_matrix(&config.input, config.bounds.as_deref())?;
    let budget = config.budget.as_deref().map(parse_budget).transpose()?;
    solve_problem(&problem, config, budget.as_ref())
}

/// Reads a custom benchmark suite: CSV with header
/// `id,n,p,missing_fraction,r,lo,hi`.
pub fn parse_suite(path: &Path) -> Result<Vec<crate::bench::InstanceSpec>> {
    let sheet = split_sheet(&read(path)?);
    let mut rows = sheet.rows.into_iter();
    let expected = ["id", "n", "p", "missing_fraction", "r", "lo", "hi"];
    match rows.next() {
        Some((line, header)) if header != expected => {
            return Err(parse_err(
                path,
                line,
                format!("header must be {}", expected.join(",")),
            ))
        }
        None => return Err(SsioError::input("empty suite")),
        _ => {}
    }
    let mut specs = Vec::new();
    for (line, cells) in rows {
        if cells.len() != expected.len() {
            return Err(parse_err(path, line, format!("expected {} fields", expected.len())));
        }
        let count = |k: usize| {
            cells[k]
                .parse::<usize>()
                .map_err(|_| parse_err(path, line, format!("{}: bad count {:?}", expected[k], cells[k])))
        };
        let spec = crate::bench::InstanceSpec {
            id: cells[0].clone(),
            n: count(1)?,
            p: count(2)?,
            missing_fraction: parse_float(path, line, "missing_fraction", &cells[3])?,
            r: count(4)?,
            lo: parse_float(path, line, "lo", &cells[5])?,
            hi: parse_float(path, line, "hi", &cells[6])?,
            seed: 0,
        };
        spec.validate().map_err(|e| parse_err(path, line, e.to_string()))?;
        specs.push(spec);
    }
    if specs.is_empty() {
        return Err(SsioError::input("empty suite"));
    }
    Ok(specs)
}
