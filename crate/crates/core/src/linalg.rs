//! Dense numerical foundation: the incomplete design matrix, Fisher information
//! assembly, SPD factorizations and the A/D design criteria.
//!
//! Every routine that inverts the information matrix goes through a Cholesky
//! factorization followed by triangular solves; `R^{-1}` is never formed.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsioError};

/// Pivots below this fraction of the largest diagonal entry of `R` are
/// treated as rank deficiency.
const PIVOT_RTOL: f64 = 1e-13;

/// Optimality criterion used to score a design.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    /// `trace(R^{-1})`
    A,
    /// `det(R)^{-1/p}`
    D,
}

impl Criterion {
    /// Power of `R^{-1}` appearing in the row sensitivity `x^T R^{-k} x`.
    pub fn sensitivity_power(self) -> u32 {
        match self {
            Criterion::A => 2,
            Criterion::D => 1,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::A => f.write_str("A"),
            Criterion::D => f.write_str("D"),
        }
    }
}

impl FromStr for Criterion {
    type Err = SsioError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Criterion::A),
            "d" => Ok(Criterion::D),
            other => Err(SsioError::input(format!(
                "unknown criterion '{other}' (expected a or d)"
            ))),
        }
    }
}

/// A missing (or designable) cell with its admissible closed interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingCell {
    pub row: usize,
    pub col: usize,
    pub lo: f64,
    pub hi: f64,
}

impl MissingCell {
    pub fn new(row: usize, col: usize, lo: f64, hi: f64) -> Self {
        MissingCell { row, col, lo, hi }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// An `n x p` design matrix where some cells are unknown.
///
/// Unknown cells hold `NaN` in `values`; they are never read as data. The
/// missing cells are kept sorted in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct IncompleteMatrix {
    values: DMatrix<f64>,
    missing: Vec<MissingCell>,
}

impl IncompleteMatrix {
    /// Builds a matrix from known values and a list of missing cells. The
    /// entries of `values` at missing coordinates are overwritten with `NaN`.
    pub fn new(mut values: DMatrix<f64>, mut missing: Vec<MissingCell>) -> Result<Self> {
        let (n, p) = values.shape();
        if p == 0 || n < p {
            return Err(SsioError::input(format!(
                "design matrix must satisfy n >= p >= 1, got {n}x{p}"
            )));
        }
        missing.sort_by_key(|c| (c.row, c.col));
        for w in missing.windows(2) {
            if (w[0].row, w[0].col) == (w[1].row, w[1].col) {
                return Err(SsioError::input(format!(
                    "missing cell ({}, {}) listed twice",
                    w[0].row, w[0].col
                )));
            }
        }
        for c in &missing {
            if c.row >= n || c.col >= p {
                return Err(SsioError::input(format!(
                    "missing cell ({}, {}) outside {n}x{p} matrix",
                    c.row, c.col
                )));
            }
            if c.lo.is_nan() || c.hi.is_nan() || c.lo > c.hi {
                return Err(SsioError::input(format!(
                    "missing cell ({}, {}) has invalid bounds [{}, {}]",
                    c.row, c.col, c.lo, c.hi
                )));
            }
            values[(c.row, c.col)] = f64::NAN;
        }
        let mut k = 0;
        for i in 0..n {
            for j in 0..p {
                let is_missing = k < missing.len() && (missing[k].row, missing[k].col) == (i, j);
                if is_missing {
                    k += 1;
                } else if !values[(i, j)].is_finite() {
                    return Err(SsioError::input(format!(
                        "known cell ({i}, {j}) is not a finite number"
                    )));
                }
            }
        }
        Ok(IncompleteMatrix { values, missing })
    }

    /// A fully known matrix.
    pub fn complete(values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, Vec::new())
    }

    pub fn from_row_slice(n: usize, p: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * p {
            return Err(SsioError::input(format!(
                "expected {} values for a {n}x{p} matrix, got {}",
                n * p,
                data.len()
            )));
        }
        Self::complete(DMatrix::from_row_slice(n, p, data))
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    /// Raw values; missing cells are `NaN`.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn missing(&self) -> &[MissingCell] {
        &self.missing
    }

    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing
            .binary_search_by_key(&(row, col), |c| (c.row, c.col))
            .is_ok()
    }

    /// Returns the complete matrix obtained by writing `imputed` (one value per
    /// missing cell, row-major order) into the unknown cells.
    pub fn fill(&self, imputed: &[f64]) -> Result<DMatrix<f64>> {
        if imputed.len() != self.missing.len() {
            return Err(SsioError::input(format!(
                "expected {} imputed values, got {}",
                self.missing.len(),
                imputed.len()
            )));
        }
        let mut out = self.values.clone();
        for (c, &v) in self.missing.iter().zip(imputed) {
            if !c.contains(v) {
                return Err(SsioError::input(format!(
                    "imputed value {v} for cell ({}, {}) outside [{}, {}]",
                    c.row, c.col, c.lo, c.hi
                )));
            }
            out[(c.row, c.col)] = v;
        }
        Ok(out)
    }

    /// The known matrix, for instances without missing cells.
    pub fn to_complete(&self) -> Result<DMatrix<f64>> {
        self.fill(&[])
    }

    /// Values of the missing cells read from a complete matrix.
    pub fn imputed_from(&self, complete: &DMatrix<f64>) -> Vec<f64> {
        self.missing
            .iter()
            .map(|c| complete[(c.row, c.col)])
            .collect()
    }
}

/// Relaxed selection weights `q in [0,1]^n` with target mass `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionWeights {
    q: Vec<f64>,
    r: usize,
}

impl SelectionWeights {
    pub fn new(q: Vec<f64>, r: usize) -> Result<Self> {
        if r == 0 || r > q.len() {
            return Err(SsioError::input(format!(
                "target mass r = {r} must lie in [1, {}]",
                q.len()
            )));
        }
        if let Some((i, v)) = q
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(SsioError::input(format!("q[{i}] = {v} outside [0, 1]")));
        }
        Ok(SelectionWeights { q, r })
    }

    pub fn uniform(n: usize, r: usize) -> Result<Self> {
        Self::new(vec![r as f64 / n as f64; n], r)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn target(&self) -> usize {
        self.r
    }

    pub fn mass(&self) -> f64 {
        self.q.iter().sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.q
    }
}

/// A binary selection of `r` rows together with the completed matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct HardDesign {
    pub s: Vec<bool>,
    pub imputed: DMatrix<f64>,
    /// Criterion value of the selection; `+inf` when rank deficient.
    pub cost: f64,
}

impl HardDesign {
    pub fn selected(&self) -> usize {
        self.s.iter().filter(|&&b| b).count()
    }

    pub fn selected_rows(&self) -> Vec<usize> {
        self.s
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// The selection as a string of `0`/`1` characters.
    pub fn bits(&self) -> String {
        selection_bits(&self.s)
    }
}

pub fn selection_bits(s: &[bool]) -> String {
    s.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn parse_selection_bits(bits: &str) -> Result<Vec<bool>> {
    bits.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(SsioError::input(format!(
                "selection string contains '{other}'"
            ))),
        })
        .collect()
}

/// Symmetric `p x p` information matrix `R = sum_i q_i x_i x_i^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherMatrix(DMatrix<f64>);

impl FisherMatrix {
    /// Wraps a square matrix, checking symmetry to round-off.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(SsioError::input("information matrix must be square"));
        }
        if m.iter().any(|v| v.is_nan()) {
            return Err(SsioError::input("information matrix contains NaN"));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let p = m.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(SsioError::input(format!(
                        "information matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(FisherMatrix(m))
    }

    pub fn identity(p: usize) -> Self {
        FisherMatrix(DMatrix::identity(p, p))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        FisherMatrix(&self.0 * c)
    }

    /// `R + eps I`.
    pub fn ridged(&self, eps: f64) -> Self {
        if eps == 0.0 {
            return self.clone();
        }
        let mut m = self.0.clone();
        for k in 0..m.nrows() {
            m[(k, k)] += eps;
        }
        FisherMatrix(m)
    }

    pub fn factor(&self) -> Result<SpdFactor> {
        SpdFactor::new(&self.0)
    }
}

/// Cholesky factor of a symmetric positive definite matrix.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(SsioError::Singular("non-finite entry".into()));
        }
        let max_diag = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b));
        if max_diag <= 0.0 {
            return Err(SsioError::Singular("zero information".into()));
        }
        let chol = Cholesky::new(m.clone())
            .ok_or_else(|| SsioError::Singular("matrix is not positive definite".into()))?;
        let l = chol.l_dirty();
        for k in 0..m.nrows() {
            let piv = l[(k, k)];
            if piv * piv <= PIVOT_RTOL * max_diag {
                return Err(SsioError::Singular(format!(
                    "pivot {k} below tolerance ({:.3e})",
                    piv * piv
                )));
            }
        }
        Ok(SpdFactor { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// `R^{-1} b`
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `R^{-1} B` for a block of right-hand sides.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `trace(R^{-1}) = ||L^{-1}||_F^2`, from `p` forward substitutions.
    pub fn trace_inverse(&self) -> f64 {
        let p = self.dim();
        let l = self.chol.l();
        let mut total = 0.0;
        let mut z = vec![0.0; p];
        for k in 0..p {
            // L z = e_k; z is zero above row k.
            for i in k..p {
                let mut acc = if i == k { 1.0 } else { 0.0 };
                for j in k..i {
                    acc -= l[(i, j)] * z[j];
                }
                z[i] = acc / l[(i, i)];
                total += z[i] * z[i];
            }
        }
        total
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..self.dim()).map(|k| l[(k, k)].ln()).sum::<f64>()
    }

    pub fn criterion(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::A => self.trace_inverse(),
            Criterion::D => (-self.log_det() / self.dim() as f64).exp(),
        }
    }

    /// `x^T R^{-power} x` for every row `x` of `x_rows`.
    pub fn row_sensitivities(&self, x_rows: &DMatrix<f64>, power: u32) -> Vec<f64> {
        let y = self.solve_matrix(&x_rows.transpose());
        (0..x_rows.nrows())
            .map(|i| match power {
                1 => x_rows.row(i).transpose().dot(&y.column(i)),
                _ => y.column(i).norm_squared(),
            })
            .collect()
    }

    /// `R^{-power} e_k`
    pub fn inverse_power_column(&self, k: usize, power: u32) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim());
        e[k] = 1.0;
        let mut y = self.solve(&e);
        for _ in 1..power {
            y = self.solve(&y);
        }
        y
    }
}

fn check_no_nan(x: &DMatrix<f64>) -> Result<()> {
    if let Some(idx) = x.iter().position(|v| v.is_nan()) {
        let n = x.nrows();
        return Err(SsioError::input(format!(
            "matrix cell ({}, {}) is an unresolved missing value",
            idx % n,
            idx / n
        )));
    }
    Ok(())
}

/// `R = sum_i q_i x_i x_i^T`, accumulated on the upper triangle and mirrored.
pub fn fisher_matrix(x: &DMatrix<f64>, q: &[f64]) -> Result<FisherMatrix> {
    if x.nrows() != q.len() {
        return Err(SsioError::input(format!(
            "weights have length {} but the matrix has {} rows",
            q.len(),
            x.nrows()
        )));
    }
    check_no_nan(x)?;
    Ok(FisherMatrix(weighted_gram(x, q, None)))
}

/// `sum_{i != skip} q_i x_i x_i^T` over column slices, upper triangle
/// mirrored. The caller guarantees matching shapes.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, q: &[f64], skip: Option<usize>) -> DMatrix<f64> {
    let p = x.ncols();
    let mut r = DMatrix::zeros(p, p);
    let mut wa = vec![0.0; q.len()];
    for a in 0..p {
        let ca = x.column(a);
        for (i, w) in wa.iter_mut().enumerate() {
            *w = if Some(i) == skip { 0.0 } else { q[i] * ca[i] };
        }
        for b in a..p {
            let v: f64 = wa.iter().zip(x.column(b).iter()).map(|(u, v)| u * v).sum();
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    r
}

/// `trace(R^{-1})`
pub fn a_cost(r: &FisherMatrix) -> Result<f64> {
    Ok(r.factor()?.trace_inverse())
}

/// `det(R)^{-1/p}`, through the log-determinant.
pub fn d_cost(r: &FisherMatrix) -> Result<f64> {
    Ok(r.factor()?.criterion(Criterion::D))
}

pub fn criterion_cost(r: &FisherMatrix, criterion: Criterion) -> Result<f64> {
    Ok(r.factor()?.criterion(criterion))
}

/// Criterion value of the rows selected by `s`.
pub fn hard_cost(x: &DMatrix<f64>, s: &[bool], criterion: Criterion) -> Result<f64> {
    if s.len() != x.nrows() {
        return Err(SsioError::input(format!(
            "selection has length {} but the matrix has {} rows",
            s.len(),
            x.nrows()
        )));
    }
    let chosen = s.iter().filter(|&&b| b).count();
    if chosen < x.ncols() {
        return Err(SsioError::Singular(format!(
            "{chosen} rows selected for {} parameters",
            x.ncols()
        )));
    }
    let q: Vec<f64> = s.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    criterion_cost(&fisher_matrix(x, &q)?, criterion)
}

/// Like [`hard_cost`] but maps rank deficiency to `+inf`.
pub fn hard_cost_or_inf(x: &DMatrix<f64>, s: &[bool], criterion: Criterion) -> f64 {
    hard_cost(x, s, criterion).unwrap_or(f64::INFINITY)
}

/// Gradient of the criterion with respect to row `j` of `x`, with
/// `R = sum_i q_i x_i x_i^T` recomputed: `-2 q_j w R^{-k} x_j` where `k` is
/// the criterion's sensitivity power and `w` is 1 for A and `C/p` for D.
pub fn criterion_row_gradient(
    factor: &SpdFactor,
    x: &DMatrix<f64>,
    q_j: f64,
    j: usize,
    criterion: Criterion,
) -> DVector<f64> {
    let xj = x.row(j).transpose();
    let mut y = factor.solve(&xj);
    if criterion.sensitivity_power() == 2 {
        y = factor.solve(&y);
    }
    let w = match criterion {
        Criterion::A => 1.0,
        Criterion::D => factor.criterion(Criterion::D) / x.ncols() as f64,
    };
    y * (-2.0 * q_j * w)
}

/// Negative criterion gradient in the weights, `v_i = -dC/dq_i`:
/// `x_i^T R^{-2} x_i` for A and `(C/p) x_i^T R^{-1} x_i` for D.
pub fn leverages(factor: &SpdFactor, x: &DMatrix<f64>, criterion: Criterion) -> Vec<f64> {
    let raw = factor.row_sensitivities(x, criterion.sensitivity_power());
    match criterion {
        Criterion::A => raw,
        Criterion::D => {
            let scale = factor.criterion(Criterion::D) / x.ncols() as f64;
            raw.into_iter().map(|v| scale * v).collect()
        }
    }
}

/// `x^T R^{-power} x` with `power` 1 or 2.
pub fn sensitivity(r: &FisherMatrix, x: &[f64], power: u32) -> Result<f64> {
    if x.len() != r.dim() {
        return Err(SsioError::input("vector length does not match R"));
    }
    if !(1..=2).contains(&power) {
        return Err(SsioError::input("sensitivity power must be 1 or 2"));
    }
    let f = r.factor()?;
    let xv = DVector::from_column_slice(x);
    let y = f.solve(&xv);
    Ok(match power {
        1 => xv.dot(&y),
        _ => y.norm_squared(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_rows() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0])
    }

    #[test]
    fn fisher_matrix_examples() {
        let i2 = DMatrix::identity(2, 2);
        assert_eq!(fisher_matrix(&i2, &[1.0, 1.0]).unwrap().matrix(), &i2);
        assert_eq!(
            fisher_matrix(&i2, &[0.5, 0.5]).unwrap().matrix(),
            &(&i2 * 0.5)
        );
        let r = fisher_matrix(&three_rows(), &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.matrix(), &DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn fisher_matrix_rejects_bad_input() {
        let x = three_rows();
        assert!(matches!(
            fisher_matrix(&x, &[1.0, 1.0]),
            Err(SsioError::Input(_))
        ));
        let mut y = x.clone();
        y[(1, 0)] = f64::NAN;
        assert!(fisher_matrix(&y, &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn cost_examples() {
        let r = FisherMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]))
            .unwrap();
        assert!((a_cost(&FisherMatrix::identity(4)).unwrap() - 4.0).abs() < 1e-14);
        assert!((a_cost(&r).unwrap() - 3.0).abs() < 1e-12);
        assert!((a_cost(&FisherMatrix::identity(2).scaled(0.5)).unwrap() - 4.0).abs() < 1e-14);

        assert!((d_cost(&FisherMatrix::identity(3)).unwrap() - 1.0).abs() < 1e-14);
        assert!((d_cost(&r).unwrap() - 1.0).abs() < 1e-12);
        assert!((d_cost(&FisherMatrix::identity(2).scaled(4.0)).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn singular_information_is_typed() {
        let r = FisherMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]))
            .unwrap();
        assert!(matches!(a_cost(&r), Err(SsioError::Singular(_))));
        assert!(matches!(d_cost(&r), Err(SsioError::Singular(_))));
        let indefinite =
            FisherMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]))
                .unwrap();
        assert!(matches!(a_cost(&indefinite), Err(SsioError::Singular(_))));
    }

    #[test]
    fn hard_cost_examples() {
        let i3 = DMatrix::identity(3, 3);
        assert!((hard_cost(&i3, &[true; 3], Criterion::A).unwrap() - 3.0).abs() < 1e-14);
        let x = three_rows();
        assert!((hard_cost(&x, &[true, true, false], Criterion::A).unwrap() - 2.0).abs() < 1e-12);
        assert!((hard_cost(&x, &[true, false, true], Criterion::A).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(
            hard_cost(&x, &[true, false, false], Criterion::A),
            Err(SsioError::Singular(_))
        ));
        assert_eq!(
            hard_cost_or_inf(&x, &[false, false, true], Criterion::D),
            f64::INFINITY
        );
    }

    #[test]
    fn sensitivity_examples() {
        let i2 = FisherMatrix::identity(2);
        assert!((sensitivity(&i2, &[1.0, 1.0], 2).unwrap() - 2.0).abs() < 1e-14);
        assert!((sensitivity(&i2.scaled(2.0), &[1.0, 0.0], 2).unwrap() - 0.25).abs() < 1e-14);
        let r = FisherMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]))
            .unwrap();
        assert!((sensitivity(&r, &[1.0, 1.0], 1).unwrap() - 1.0).abs() < 1e-12);
        assert!(sensitivity(&r, &[1.0, 1.0], 3).is_err());
    }

    #[test]
    fn incomplete_matrix_validation() {
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let m = IncompleteMatrix::new(v.clone(), vec![MissingCell::new(1, 0, 0.0, 5.0)]).unwrap();
        assert!(m.values()[(1, 0)].is_nan());
        assert!(m.is_missing(1, 0));
        assert!(m.fill(&[6.0]).is_err());
        assert_eq!(m.fill(&[2.5]).unwrap()[(1, 0)], 2.5);
        assert!(m.to_complete().is_err());

        let dup = vec![
            MissingCell::new(0, 0, 0.0, 1.0),
            MissingCell::new(0, 0, 0.0, 1.0),
        ];
        assert!(IncompleteMatrix::new(v.clone(), dup).is_err());
        assert!(IncompleteMatrix::new(v.clone(), vec![MissingCell::new(2, 0, 0.0, 1.0)]).is_err());
        assert!(IncompleteMatrix::new(v.clone(), vec![MissingCell::new(0, 0, 2.0, 1.0)]).is_err());
        assert!(IncompleteMatrix::complete(DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn selection_weights_validation() {
        assert!(SelectionWeights::new(vec![0.5, 1.2], 1).is_err());
        assert!(SelectionWeights::new(vec![0.5, 0.5], 3).is_err());
        let w = SelectionWeights::uniform(4, 2).unwrap();
        assert_eq!(w.mass(), 2.0);
    }
}
