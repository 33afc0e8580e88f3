//! Comparison methods (mean imputation, Fedorov exchange, uniform sampling,
//! direct local optimization) and exhaustive oracles for small instances.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::anneal::harden;
use crate::error::{Result, SsioError};
use crate::linalg::{
    criterion_row_gradient, fisher_matrix, hard_cost, hard_cost_or_inf, leverages, Criterion,
    HardDesign, IncompleteMatrix,
};

/// Largest number of subsets `brute_force_select` will enumerate.
pub const SELECT_GUARD: f64 = 1e6;
/// Largest `C(n, r) * grid^|G|` for `brute_force_joint`.
pub const JOINT_GUARD: f64 = 1e7;

const FEDOROV_RESTARTS: usize = 5;
const FEDOROV_START_DRAWS: usize = 1000;
const DIRECT_MAX_ITERS: usize = 2000;
const DIRECT_ARMIJO_C: f64 = 1e-4;

/// Result of running one selection method.
#[derive(Clone, Debug)]
pub struct MethodResult {
    pub method: String,
    pub design: HardDesign,
    pub wall_time_s: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Mean of the known entries of each column, clamped into each missing
/// cell's bounds; columns with no known entry use the bound midpoint.
pub fn mean_impute_values(problem: &IncompleteMatrix) -> Vec<f64> {
    let x = problem.values();
    let means: Vec<Option<f64>> = (0..problem.cols())
        .map(|j| {
            let known: Vec<f64> = x.column(j).iter().cloned().filter(|v| !v.is_nan()).collect();
            (!known.is_empty()).then(|| known.iter().sum::<f64>() / known.len() as f64)
        })
        .collect();
    problem
        .missing()
        .iter()
        .map(|c| match means[c.col] {
            Some(m) => c.clamp(m),
            None if c.midpoint().is_finite() => c.midpoint(),
            None => c.clamp(0.0),
        })
        .collect()
}

/// Completes the matrix by column-mean imputation.
pub fn mean_impute(problem: &IncompleteMatrix) -> DMatrix<f64> {
    problem
        .fill(&mean_impute_values(problem))
        .expect("mean imputation stays within bounds")
}

fn check_r(x: &DMatrix<f64>, r: usize) -> Result<()> {
    let (n, p) = x.shape();
    if r < p || r > n {
        return Err(SsioError::Infeasible(format!(
            "cannot select r = {r} rows: need {p} <= r <= {n}"
        )));
    }
    Ok(())
}

fn mask(n: usize, rows: &[usize]) -> Vec<bool> {
    let mut s = vec![false; n];
    for &i in rows {
        s[i] = true;
    }
    s
}

/// One best-improvement exchange run from `start`. Returns the final
/// selection and the cost after every accepted swap (starting cost first).
pub fn fedorov_from(
    x: &DMatrix<f64>,
    start: &[bool],
    criterion: Criterion,
) -> Result<(Vec<bool>, Vec<f64>)> {
    let mut s = start.to_vec();
    let mut cost = hard_cost(x, &s, criterion)?;
    let mut trace = vec![cost];
    loop {
        let inside: Vec<usize> = (0..s.len()).filter(|&i| s[i]).collect();
        let outside: Vec<usize> = (0..s.len()).filter(|&i| !s[i]).collect();
        let mut best: Option<(f64, usize, usize)> = None;
        for &i in &inside {
            for &j in &outside {
                s[i] = false;
                s[j] = true;
                let c = hard_cost_or_inf(x, &s, criterion);
                s[i] = true;
                s[j] = false;
                if best.is_none_or(|(b, _, _)| c < b) {
                    best = Some((c, i, j));
                }
            }
        }
        match best {
            Some((c, i, j)) if c < cost - 1e-12 * cost.abs() => {
                s[i] = false;
                s[j] = true;
                cost = c;
                trace.push(c);
            }
            _ => break,
        }
    }
    Ok((s, trace))
}

/// Fedorov exchange from random full-rank starts; best of the restarts.
pub fn fedorov_exchange(
    x: &DMatrix<f64>,
    r: usize,
    criterion: Criterion,
    seed: u64,
) -> Result<MethodResult> {
    let started = Instant::now();
    check_r(x, r)?;
    let n = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<bool>, f64)> = None;
    let mut swaps = 0;
    let restarts = if r == n { 1 } else { FEDOROV_RESTARTS };
    for _ in 0..restarts {
        let start = (0..FEDOROV_START_DRAWS).find_map(|_| {
            let s = mask(n, &index::sample(&mut rng, n, r).into_vec());
            hard_cost_or_inf(x, &s, criterion).is_finite().then_some(s)
        });
        let Some(start) = start else { continue };
        let (s, trace) = fedorov_from(x, &start, criterion)?;
        swaps += trace.len() - 1;
        let c = *trace.last().unwrap();
        if best.as_ref().is_none_or(|(_, b)| c < *b) {
            best = Some((s, c));
        }
    }
    let (s, cost) = best.ok_or_else(|| {
        SsioError::Infeasible(format!(
            "no full-rank {r}-subset found in {} random draws",
            restarts * FEDOROV_START_DRAWS
        ))
    })?;
    Ok(MethodResult {
        method: "fedorov".into(),
        design: HardDesign {
            s,
            imputed: x.clone(),
            cost,
        },
        wall_time_s: started.elapsed().as_secs_f64(),
        iterations: swaps,
        converged: true,
    })
}

/// Uniformly random `r`-subset. Rank-deficient draws are reported with
/// infinite cost rather than redrawn.
pub fn uniform_sample(x: &DMatrix<f64>, r: usize, seed: u64) -> Result<MethodResult> {
    let started = Instant::now();
    let n = x.nrows();
    if r > n || r == 0 {
        return Err(SsioError::Infeasible(format!("cannot sample {r} of {n} rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = mask(n, &index::sample(&mut rng, n, r).into_vec());
    let cost = hard_cost_or_inf(x, &s, Criterion::A);
    Ok(MethodResult {
        method: "uniform".into(),
        design: HardDesign {
            s,
            imputed: x.clone(),
            cost,
        },
        wall_time_s: started.elapsed().as_secs_f64(),
        iterations: 1,
        converged: true,
    })
}

/// Euclidean projection onto `{q in [0,1]^n : sum q = r}`.
pub fn project_capped_simplex(y: &[f64], r: f64) -> Vec<f64> {
    let sum: f64 = y.iter().sum();
    if y.iter().all(|v| (0.0..=1.0).contains(v)) && (sum - r).abs() <= 1e-12 * r.max(1.0) {
        return y.to_vec();
    }
    let mass = |tau: f64| y.iter().map(|v| (v - tau).clamp(0.0, 1.0)).sum::<f64>();
    let mut lo = y.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > r {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    // solve exactly on the free set identified by the bisection
    let (mut free_sum, mut free, mut ones) = (0.0, 0usize, 0usize);
    for &v in y {
        let z = v - tau;
        if z >= 1.0 {
            ones += 1;
        } else if z > 0.0 {
            free += 1;
            free_sum += v;
        }
    }
    let tau = if free > 0 {
        (free_sum + ones as f64 - r) / free as f64
    } else {
        tau
    };
    y.iter().map(|v| (v - tau).clamp(0.0, 1.0)).collect()
}

struct JointPoint {
    q: Vec<f64>,
    x: DMatrix<f64>,
}

fn relaxed_cost(pt: &JointPoint, criterion: Criterion) -> f64 {
    fisher_matrix(&pt.x, &pt.q)
        .ok()
        .and_then(|r| r.factor().ok())
        .map(|f| f.criterion(criterion))
        .unwrap_or(f64::INFINITY)
}

/// Projected-gradient local descent on the relaxed criterion over weights and
/// missing cells jointly, from `q = r/n` and mean imputation, without
/// annealing; hardened at the end.
pub fn direct_joint(
    problem: &IncompleteMatrix,
    r: usize,
    criterion: Criterion,
) -> Result<MethodResult> {
    let started = Instant::now();
    let (n, p) = (problem.rows(), problem.cols());
    if r < p || r > n {
        return Err(SsioError::Infeasible(format!(
            "cannot select r = {r} rows: need {p} <= r <= {n}"
        )));
    }
    let cells = problem.missing().to_vec();
    let mut pt = JointPoint {
        q: vec![r as f64 / n as f64; n],
        x: mean_impute(problem),
    };
    let mut cost = relaxed_cost(&pt, criterion);
    if !cost.is_finite() {
        return Err(SsioError::Infeasible(
            "initial information matrix is singular".into(),
        ));
    }
    let initial = harden(&pt.q, &pt.x, r, criterion).ok().map(|d| d.s);
    let mut step = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < DIRECT_MAX_ITERS {
        iterations += 1;
        let factor = fisher_matrix(&pt.x, &pt.q)?.factor()?;
        let gq: Vec<f64> = leverages(&factor, &pt.x, criterion)
            .into_iter()
            .map(|v| -v)
            .collect();
        let gm: Vec<f64> = cells
            .iter()
            .map(|c| criterion_row_gradient(&factor, &pt.x, pt.q[c.row], c.row, criterion)[c.col])
            .collect();
        let gmax = gq.iter().chain(&gm).fold(0.0f64, |a, g| a.max(g.abs()));
        if gmax == 0.0 {
            converged = true;
            break;
        }
        if !step.is_finite() {
            step = 1.0 / gmax;
        } else {
            step *= 2.0;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let q = project_capped_simplex(
                &pt.q.iter().zip(&gq).map(|(q, g)| q - step * g).collect::<Vec<_>>(),
                r as f64,
            );
            let mut x = pt.x.clone();
            for (c, g) in cells.iter().zip(&gm) {
                x[(c.row, c.col)] = c.clamp(pt.x[(c.row, c.col)] - step * g);
            }
            let cand = JointPoint { q, x };
            let decrease: f64 = cand
                .q
                .iter()
                .zip(&pt.q)
                .zip(&gq)
                .map(|((a, b), g)| g * (a - b))
                .sum::<f64>()
                + cells
                    .iter()
                    .zip(&gm)
                    .map(|(c, g)| g * (cand.x[(c.row, c.col)] - pt.x[(c.row, c.col)]))
                    .sum::<f64>();
            let c_new = relaxed_cost(&cand, criterion);
            if c_new <= cost + DIRECT_ARMIJO_C * decrease {
                accepted = Some((cand, c_new));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, c_new)) = accepted else {
            converged = true;
            break;
        };
        let moved = cand
            .q
            .iter()
            .zip(&pt.q)
            .map(|(a, b)| (a - b).abs())
            .chain(cells.iter().map(|c| (cand.x[(c.row, c.col)] - pt.x[(c.row, c.col)]).abs()))
            .fold(0.0f64, f64::max);
        pt = cand;
        cost = c_new;
        if moved < 1e-10 {
            converged = true;
            break;
        }
    }
    let design = harden(&pt.q, &pt.x, r, criterion)?;
    if let Some(init) = initial {
        let hamming = init.iter().zip(&design.s).filter(|(a, b)| a != b).count();
        log::debug!("direct_joint: selection moved {hamming} rows from its initialization");
    }
    Ok(MethodResult {
        method: "direct".into(),
        design,
        wall_time_s: started.elapsed().as_secs_f64(),
        iterations,
        converged,
    })
}

/// `C(n, k)` as a float (exact for the guarded range).
pub fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Calls `visit` with each `r`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, r: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        visit(&idx);
        let mut i = r;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < n - r + i {
                break;
            }
            if i == 0 {
                return;
            }
        }
        if idx[i] >= n - r + i {
            return;
        }
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn best_subset(x: &DMatrix<f64>, r: usize, criterion: Criterion) -> Option<(Vec<bool>, f64)> {
    let n = x.nrows();
    let mut best: Option<(Vec<bool>, f64)> = None;
    let mut s = vec![false; n];
    for_each_subset(n, r, |rows| {
        s.iter_mut().for_each(|b| *b = false);
        for &i in rows {
            s[i] = true;
        }
        let c = hard_cost_or_inf(x, &s, criterion);
        if !c.is_finite() {
            return;
        }
        let better = match &best {
            None => true,
            // subsets arrive in decreasing order of s, so on a tie the later
            // one is lexicographically smaller
            Some((_, b)) => c < *b || (c - b).abs() <= 1e-12 * b.abs(),
        };
        if better {
            best = Some((s.clone(), c));
        }
    });
    best
}

/// Exhaustive search over all `r`-subsets.
pub fn brute_force_select(x: &DMatrix<f64>, r: usize, criterion: Criterion) -> Result<HardDesign> {
    check_r(x, r)?;
    let count = binomial(x.nrows(), r);
    if count > SELECT_GUARD {
        return Err(SsioError::TooLarge(format!(
            "C({}, {r}) = {count:.0} subsets exceeds {SELECT_GUARD:.0}",
            x.nrows()
        )));
    }
    let (s, cost) = best_subset(x, r, criterion)
        .ok_or_else(|| SsioError::Singular(format!("every {r}-subset is rank deficient")))?;
    Ok(HardDesign {
        s,
        imputed: x.clone(),
        cost,
    })
}

/// Grid-certified optimum of the joint problem.
#[derive(Clone, Debug)]
pub struct JointOracle {
    pub design: HardDesign,
    /// Largest grid spacing over the missing cells (0 when none).
    pub resolution: f64,
}

/// Exhaustive search over subsets and a uniform grid of `grid_points` values
/// per missing cell.
pub fn brute_force_joint(
    problem: &IncompleteMatrix,
    r: usize,
    criterion: Criterion,
    grid_points: usize,
) -> Result<JointOracle> {
    let cells = problem.missing();
    let grids: Vec<Vec<f64>> = cells
        .iter()
        .map(|c| {
            if !(c.lo.is_finite() && c.hi.is_finite()) {
                return Err(SsioError::input(format!(
                    "cell ({}, {}) needs finite bounds for a grid",
                    c.row, c.col
                )));
            }
            if c.lo == c.hi {
                return Ok(vec![c.lo]);
            }
            if grid_points < 2 {
                return Err(SsioError::input("grid needs at least two points"));
            }
            let h = (c.hi - c.lo) / (grid_points - 1) as f64;
            Ok((0..grid_points)
                .map(|k| if k + 1 == grid_points { c.hi } else { c.lo + h * k as f64 })
                .collect())
        })
        .collect::<Result<_>>()?;
    let resolution = cells
        .iter()
        .zip(&grids)
        .map(|(c, g)| if g.len() > 1 { (c.hi - c.lo) / (g.len() - 1) as f64 } else { 0.0 })
        .fold(0.0, f64::max);
    let (n, p) = (problem.rows(), problem.cols());
    if r < p || r > n {
        return Err(SsioError::Infeasible(format!(
            "cannot select r = {r} rows: need {p} <= r <= {n}"
        )));
    }
    let work = binomial(n, r) * grids.iter().map(|g| g.len() as f64).product::<f64>();
    if work > JOINT_GUARD {
        return Err(SsioError::TooLarge(format!(
            "{work:.0} evaluations exceeds {JOINT_GUARD:.0}"
        )));
    }

    let mut x = problem.values().clone();
    let mut counter = vec![0usize; cells.len()];
    let mut best: Option<(Vec<bool>, f64, DMatrix<f64>)> = None;
    loop {
        for (k, c) in cells.iter().enumerate() {
            x[(c.row, c.col)] = grids[k][counter[k]];
        }
        if let Some((s, c)) = best_subset(&x, r, criterion) {
            if best.as_ref().is_none_or(|(_, b, _)| c < *b) {
                best = Some((s, c, x.clone()));
            }
        }
        // mixed-radix increment
        let mut k = 0;
        while k < counter.len() {
            counter[k] += 1;
            if counter[k] < grids[k].len() {
                break;
            }
            counter[k] = 0;
            k += 1;
        }
        if k == counter.len() {
            break;
        }
    }
    let (s, cost, imputed) = best
        .ok_or_else(|| SsioError::Singular(format!("every {r}-subset is rank deficient")))?;
    Ok(JointOracle {
        design: HardDesign { s, imputed, cost },
        resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anneal::{anneal, AnnealSchedule};
    use crate::linalg::MissingCell;

    fn column_with_gap(lo: f64, hi: f64) -> IncompleteMatrix {
        let values = DMatrix::from_row_slice(3, 1, &[1.0, f64::NAN, 3.0]);
        IncompleteMatrix::new(values, vec![MissingCell::new(1, 0, lo, hi)]).unwrap()
    }

    fn three_rows() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0])
    }

    #[test]
    fn mean_impute_examples() {
        assert_eq!(mean_impute(&column_with_gap(-10.0, 10.0))[(1, 0)], 2.0);
        assert_eq!(mean_impute(&column_with_gap(0.0, 1.5))[(1, 0)], 1.5);
        let full = three_rows();
        let m = IncompleteMatrix::complete(full.clone()).unwrap();
        assert_eq!(mean_impute(&m), full);
    }

    #[test]
    fn mean_impute_fully_missing_column_uses_midpoint() {
        let values = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 2.0, f64::NAN]);
        let cells = vec![MissingCell::new(0, 1, 0.0, 4.0), MissingCell::new(1, 1, -1.0, 1.0)];
        let m = IncompleteMatrix::new(values, cells).unwrap();
        assert_eq!(mean_impute_values(&m), vec![2.0, 0.0]);
    }

    #[test]
    fn fedorov_examples() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let res = fedorov_exchange(&x, 1, Criterion::A, 4).unwrap();
        assert_eq!(res.design.s, vec![false, false, true]);
        assert!((res.design.cost - 1.0 / 9.0).abs() < 1e-15);

        let all = fedorov_exchange(&three_rows(), 3, Criterion::A, 1).unwrap();
        assert_eq!(all.design.s, vec![true; 3]);
        assert_eq!(all.iterations, 0);
    }

    #[test]
    fn fedorov_trace_strictly_decreases() {
        let x = DMatrix::from_fn(12, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 - 4.0 + 0.1 * j as f64);
        let start: Vec<bool> = (0..12).map(|i| i < 4).collect();
        let (_, trace) = fedorov_from(&x, &start, Criterion::A).unwrap();
        assert!(trace.len() > 1);
        for w in trace.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn uniform_examples() {
        let x = three_rows();
        assert_eq!(uniform_sample(&x, 3, 9).unwrap().design.s, vec![true; 3]);
        let big = DMatrix::from_fn(10, 2, |i, j| (i + 2 * j) as f64);
        let a = uniform_sample(&big, 4, 123).unwrap();
        let b = uniform_sample(&big, 4, 123).unwrap();
        assert_eq!(a.design.s, b.design.s);
        assert_eq!(a.design.selected(), 4);
    }

    #[test]
    fn uniform_reports_rank_deficiency_as_infinite() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        assert!(uniform_sample(&x, 2, 0).unwrap().design.cost.is_infinite());
    }

    #[test]
    fn projection_examples() {
        let q = vec![0.25, 0.5, 0.75, 0.5];
        assert_eq!(project_capped_simplex(&q, 2.0), q);
        let p = project_capped_simplex(&[2.0, -1.0, 0.5, 0.7], 2.0);
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 0.0);
        assert!((p[2] - 0.4).abs() < 1e-12 && (p[3] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn direct_matches_anneal_on_symmetric_rows() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let m = IncompleteMatrix::complete(x).unwrap();
        let d = direct_joint(&m, 2, Criterion::A).unwrap();
        let (_, a) = anneal(&m, 2, &AnnealSchedule::default(), Criterion::A).unwrap();
        assert_eq!(d.design.s, a.s);
        assert!((d.design.cost - a.cost).abs() < 1e-12);
    }

    #[test]
    fn direct_respects_bounds() {
        let values = DMatrix::from_row_slice(
            5,
            2,
            &[1.0, 0.5, f64::NAN, 1.0, 0.3, -0.2, 0.9, f64::NAN, -0.5, 0.8],
        );
        let cells = vec![MissingCell::new(1, 0, -1.0, 1.0), MissingCell::new(3, 1, 0.0, 0.5)];
        let m = IncompleteMatrix::new(values, cells.clone()).unwrap();
        let d = direct_joint(&m, 3, Criterion::A).unwrap();
        for c in &cells {
            assert!(c.contains(d.design.imputed[(c.row, c.col)]));
        }
        let cost = hard_cost(&d.design.imputed, &d.design.s, Criterion::A).unwrap();
        assert!((cost - d.design.cost).abs() <= 1e-12 * cost);
    }

    #[test]
    fn brute_select_examples() {
        let d = brute_force_select(&three_rows(), 2, Criterion::A).unwrap();
        assert_eq!(d.s, vec![true, true, false]);
        assert!((d.cost - 2.0).abs() < 1e-12);
        assert_eq!(brute_force_select(&three_rows(), 3, Criterion::A).unwrap().s, vec![true; 3]);
        let col = DMatrix::from_row_slice(4, 1, &[0.5, -3.0, 2.0, 1.0]);
        assert_eq!(
            brute_force_select(&col, 1, Criterion::A).unwrap().s,
            vec![false, true, false, false]
        );
    }

    #[test]
    fn brute_select_breaks_ties_toward_smallest_bits() {
        let col = DMatrix::from_row_slice(3, 1, &[2.0, 1.0, -2.0]);
        // rows 0 and 2 tie; 001 < 100
        assert_eq!(
            brute_force_select(&col, 1, Criterion::A).unwrap().s,
            vec![false, false, true]
        );
    }

    #[test]
    fn brute_guards() {
        let big = DMatrix::from_fn(40, 2, |i, j| (i * (j + 1)) as f64);
        assert!(matches!(brute_force_select(&big, 20, Criterion::A), Err(SsioError::TooLarge(_))));
        assert_eq!(binomial(8, 3), 56.0);
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(5, 5), 1.0);
    }

    #[test]
    fn joint_oracle_reductions() {
        let x = three_rows();
        let m = IncompleteMatrix::complete(x.clone()).unwrap();
        let j = brute_force_joint(&m, 2, Criterion::A, 51).unwrap();
        assert_eq!(j.design.s, brute_force_select(&x, 2, Criterion::A).unwrap().s);
        assert_eq!(j.resolution, 0.0);

        let values = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, f64::NAN]);
        let fixed = IncompleteMatrix::new(values, vec![MissingCell::new(2, 1, 1.0, 1.0)]).unwrap();
        let j = brute_force_joint(&fixed, 2, Criterion::A, 51).unwrap();
        let b = brute_force_select(&x, 2, Criterion::A).unwrap();
        assert_eq!(j.design.s, b.s);
        assert_eq!(j.design.cost, b.cost);
    }

    #[test]
    fn joint_oracle_dominates_mean_imputation() {
        let values = DMatrix::from_row_slice(
            6,
            2,
            &[1.0, 0.2, -0.4, 1.0, 0.7, 0.7, f64::NAN, -0.3, 0.1, 0.9, -0.8, 0.5],
        );
        let m = IncompleteMatrix::new(values, vec![MissingCell::new(3, 0, -2.0, 2.0)]).unwrap();
        let joint = brute_force_joint(&m, 3, Criterion::A, 101).unwrap();
        let fixed = brute_force_select(&mean_impute(&m), 3, Criterion::A).unwrap();
        assert!(joint.design.cost <= fixed.cost);
        assert!((joint.resolution - 0.04).abs() < 1e-12);
        let c = joint.design.imputed[(3, 0)];
        assert!((-2.0..=2.0).contains(&c));
    }

    #[test]
    fn joint_oracle_guard_and_bounds() {
        let values = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        let open = IncompleteMatrix::new(
            values,
            vec![MissingCell::new(1, 0, f64::NEG_INFINITY, f64::INFINITY)],
        )
        .unwrap();
        assert!(brute_force_joint(&open, 1, Criterion::A, 11).is_err());
        let values = DMatrix::from_fn(20, 2, |i, j| if i < 4 && j == 0 { f64::NAN } else { (i + j) as f64 });
        let cells = (0..4).map(|i| MissingCell::new(i, 0, 0.0, 1.0)).collect();
        let wide = IncompleteMatrix::new(values, cells).unwrap();
        assert!(matches!(
            brute_force_joint(&wide, 5, Criterion::A, 51),
            Err(SsioError::TooLarge(_))
        ));
    }
}
