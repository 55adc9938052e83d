//! Self-contained dense-tableau simplex, generic over the scalar field so the
//! same code runs in f64 and in exact rational arithmetic.

use crate::{Error, Result};
use num::rational::BigRational;
use num::{FromPrimitive, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rel: Rel,
    pub rhs: f64,
    pub name: String,
}

/// A linear program. Variables default to bounds `[0, +inf)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lp {
    pub maximize: bool,
    pub n_vars: usize,
    /// sparse objective coefficients
    pub objective: Vec<(usize, f64)>,
    pub rows: Vec<LpRow>,
    /// optional per-variable (lower, upper); missing entries mean [0, inf)
    pub bounds: Vec<(f64, Option<f64>)>,
}

impl Lp {
    pub fn new(maximize: bool, n_vars: usize) -> Lp {
        Lp {
            maximize,
            n_vars,
            objective: Vec::new(),
            rows: Vec::new(),
            bounds: vec![(0.0, None); n_vars],
        }
    }

    pub fn set_objective(&mut self, var: usize, coef: f64) {
        self.objective.push((var, coef));
    }

    pub fn add_row(&mut self, name: impl Into<String>, coeffs: Vec<(usize, f64)>, rel: Rel, rhs: f64) {
        self.rows.push(LpRow { coeffs, rel, rhs, name: name.into() });
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.coeffs.len()).sum::<usize>() + self.objective.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub point: Vec<f64>,
    pub objective: f64,
    /// one dual value per row, in the sign convention of a maximization problem
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub row: String,
    /// negative slack = amount by which the row is violated
    pub slack: f64,
}

/// Numeric field the simplex runs over.
pub trait Scalar: Clone + PartialOrd + std::fmt::Debug {
    fn zero() -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    /// feasibility / pivot tolerance; exact fields return zero
    fn eps() -> Self;
    /// reduced-cost tolerance for declaring optimality, and the minimum pivot
    /// magnitude the ratio test will accept before falling back; exact fields
    /// return zero
    fn opt_eps() -> Self;
    fn abs(&self) -> Self;
    fn is_zero(&self) -> bool;
    /// cheap-arithmetic fields prefer branch-free dense row updates
    const DENSE_UPDATE: bool;
}

impl Scalar for f64 {
    fn zero() -> f64 { 0.0 }
    fn from_f64(x: f64) -> f64 { x }
    fn to_f64(&self) -> f64 { *self }
    fn add(&self, o: &f64) -> f64 { self + o }
    fn sub(&self, o: &f64) -> f64 { self - o }
    fn mul(&self, o: &f64) -> f64 { self * o }
    fn div(&self, o: &f64) -> f64 { self / o }
    fn neg(&self) -> f64 { -self }
    fn eps() -> f64 { 1e-9 }
    fn opt_eps() -> f64 { 1e-7 }
    fn abs(&self) -> f64 { f64::abs(*self) }
    fn is_zero(&self) -> bool { *self == 0.0 }
    const DENSE_UPDATE: bool = true;
}

impl Scalar for BigRational {
    fn zero() -> BigRational { num::zero() }
    fn from_f64(x: f64) -> BigRational {
        <BigRational as FromPrimitive>::from_f64(x).expect("finite float")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn add(&self, o: &BigRational) -> BigRational { self + o }
    fn sub(&self, o: &BigRational) -> BigRational { self - o }
    fn mul(&self, o: &BigRational) -> BigRational { self * o }
    fn div(&self, o: &BigRational) -> BigRational { self / o }
    fn neg(&self) -> BigRational { -self }
    fn eps() -> BigRational { num::zero() }
    fn opt_eps() -> BigRational { num::zero() }
    fn abs(&self) -> BigRational { Signed::abs(self) }
    fn is_zero(&self) -> bool { Zero::is_zero(self) }
    const DENSE_UPDATE: bool = false;
}

/// Solve in f64.
pub fn solve(lp: &Lp) -> Result<LpSolution> {
    solve_with::<f64>(lp)
}

/// Solve in exact rational arithmetic (small instances only).
pub fn solve_exact(lp: &Lp) -> Result<LpSolution> {
    if lp.nonzeros() > 2_000 {
        return Err(Error::Config(format!(
            "exact mode capped at 2000 nonzeros, got {}",
            lp.nonzeros()
        )));
    }
    solve_with::<BigRational>(lp)
}

/// Evaluate a candidate point against every row and bound; returns the rows it
/// violates (beyond 1e-9) with their signed slack.
pub fn check_point(lp: &Lp, point: &[f64]) -> Vec<Violation> {
    let mut out = Vec::new();
    let tol = 1e-9;
    for (i, (lo, hi)) in lp.bounds.iter().enumerate() {
        if point[i] < lo - tol {
            out.push(Violation { row: format!("lb(x{i})"), slack: point[i] - lo });
        }
        if let Some(h) = hi {
            if point[i] > h + tol {
                out.push(Violation { row: format!("ub(x{i})"), slack: h - point[i] });
            }
        }
    }
    for row in &lp.rows {
        let lhs: f64 = row.coeffs.iter().map(|&(j, c)| c * point[j]).sum();
        let slack = match row.rel {
            Rel::Le => row.rhs - lhs,
            Rel::Ge => lhs - row.rhs,
            Rel::Eq => -(lhs - row.rhs).abs(),
        };
        if slack < -tol {
            out.push(Violation { row: row.name.clone(), slack });
        }
    }
    out
}

struct Tableau<S> {
    rows: Vec<Vec<S>>, // m rows, each of width `cols` (rhs last)
    cols: usize,
    basis: Vec<usize>,
    obj: Vec<S>, // reduced-cost row, width `cols`; last entry = -objective value
}

fn solve_with<S: Scalar>(lp: &Lp) -> Result<LpSolution> {
    let n = lp.n_vars;
    let m = lp.rows.len();

    // shift out finite lower bounds; collect upper-bound rows
    let mut shift = vec![0.0f64; n];
    let mut extra_rows: Vec<LpRow> = Vec::new();
    for (i, (lo, hi)) in lp.bounds.iter().enumerate() {
        assert!(lo.is_finite(), "lower bounds must be finite");
        shift[i] = *lo;
        if let Some(h) = hi {
            extra_rows.push(LpRow {
                coeffs: vec![(i, 1.0)],
                rel: Rel::Le,
                rhs: *h,
                name: format!("__ub{i}"),
            });
        }
    }
    let all_rows: Vec<&LpRow> = lp.rows.iter().chain(extra_rows.iter()).collect();
    let mt = all_rows.len();

    // normalized rows: coeffs (dense), rel in {Le, Ge, Eq}, rhs >= 0, and a flag
    // recording whether the row was sign-flipped (for dual recovery)
    let mut dense: Vec<Vec<S>> = Vec::with_capacity(mt);
    let mut rhs: Vec<S> = Vec::with_capacity(mt);
    let mut rel: Vec<Rel> = Vec::with_capacity(mt);
    let mut flipped: Vec<bool> = Vec::with_capacity(mt);
    for row in &all_rows {
        let mut a = vec![S::zero(); n];
        for &(j, c) in &row.coeffs {
            a[j] = a[j].add(&S::from_f64(c));
        }
        let mut b = S::from_f64(row.rhs);
        for (j, s) in shift.iter().enumerate() {
            if *s != 0.0 && !a[j].is_zero() {
                b = b.sub(&a[j].mul(&S::from_f64(*s)));
            }
        }
        let mut r = row.rel;
        let mut fl = false;
        if b < S::zero() {
            for v in &mut a {
                *v = v.neg();
            }
            b = b.neg();
            r = match r {
                Rel::Le => Rel::Ge,
                Rel::Ge => Rel::Le,
                Rel::Eq => Rel::Eq,
            };
            fl = true;
        }
        dense.push(a);
        rhs.push(b);
        rel.push(r);
        flipped.push(fl);
    }

    // column layout: structural | slack/surplus | artificial | rhs
    let mut slack_col = vec![usize::MAX; mt];
    let mut art_col = vec![usize::MAX; mt];
    let mut next = n;
    for i in 0..mt {
        if !matches!(rel[i], Rel::Eq) {
            slack_col[i] = next;
            next += 1;
        }
    }
    let art_start = next;
    for i in 0..mt {
        if !matches!(rel[i], Rel::Le) {
            art_col[i] = next;
            next += 1;
        }
    }
    let cols = next + 1;
    let rhs_col = cols - 1;

    let mut t = Tableau::<S> {
        rows: (0..mt)
            .map(|i| {
                let mut r = vec![S::zero(); cols];
                r[..n].clone_from_slice(&dense[i]);
                if slack_col[i] != usize::MAX {
                    r[slack_col[i]] =
                        if matches!(rel[i], Rel::Le) { S::from_f64(1.0) } else { S::from_f64(-1.0) };
                }
                if art_col[i] != usize::MAX {
                    r[art_col[i]] = S::from_f64(1.0);
                }
                r[rhs_col] = rhs[i].clone();
                r
            })
            .collect(),
        cols,
        basis: (0..mt)
            .map(|i| if matches!(rel[i], Rel::Le) { slack_col[i] } else { art_col[i] })
            .collect(),
        obj: vec![S::zero(); cols],
    };

    let n_arts = cols - 1 - art_start;
    if n_arts > 0 {
        // phase 1: maximize -(sum of artificials); after eliminating the basic
        // artificial costs, the z-row is +sum of the artificial rows
        for i in 0..mt {
            if art_col[i] != usize::MAX {
                let row = t.rows[i].clone();
                for j in 0..cols {
                    t.obj[j] = t.obj[j].add(&row[j]);
                }
            }
        }
        for j in art_start..cols - 1 {
            t.obj[j] = S::zero();
        }
        run_simplex(&mut t, art_start, true)?;
        // the z-row rhs stores -(current objective) = sum of artificials
        let residual = t.obj[rhs_col].clone();
        if residual > S::from_f64(1e-7) {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                point: vec![],
                objective: f64::NAN,
                duals: vec![],
            });
        }
        // drive remaining basic artificials out or drop redundant rows,
        // pivoting on the largest-magnitude entry for stability
        for i in 0..mt {
            if t.basis[i] >= art_start {
                let mut piv = usize::MAX;
                let mut best = S::eps();
                for j in 0..art_start {
                    let a = t.rows[i][j].abs();
                    if a > best {
                        best = a;
                        piv = j;
                    }
                }
                if piv != usize::MAX {
                    pivot(&mut t, i, piv);
                }
                // no pivot: the row is all-zero over real columns, i.e. redundant
            }
        }
    }

    // phase 2 objective (internal sense: maximize)
    t.obj = vec![S::zero(); cols];
    let sense = if lp.maximize { 1.0 } else { -1.0 };
    for &(j, c) in &lp.objective {
        t.obj[j] = t.obj[j].add(&S::from_f64(sense * c));
    }
    // make reduced costs consistent with the current basis
    for i in 0..mt {
        let bj = t.basis[i];
        if !t.obj[bj].is_zero() {
            let factor = t.obj[bj].clone();
            let row = t.rows[i].clone();
            for j in 0..cols {
                t.obj[j] = t.obj[j].sub(&factor.mul(&row[j]));
            }
        }
    }
    let status = run_simplex(&mut t, art_start, false)?;
    if status == LpStatus::Unbounded {
        return Ok(LpSolution { status, point: vec![], objective: f64::NAN, duals: vec![] });
    }

    // read out the primal point
    let mut point = shift.clone();
    for i in 0..mt {
        if t.basis[i] < n {
            point[t.basis[i]] += t.rows[i][rhs_col].to_f64();
        }
    }
    let objective: f64 = lp
        .objective
        .iter()
        .map(|&(j, c)| c * point[j])
        .sum();

    // duals from the reduced costs of slack/surplus (or artificial) columns:
    // for a +1 column, cbar = -y; for the -1 surplus column, cbar = +y
    let mut duals = vec![0.0f64; m];
    for i in 0..m {
        let (col, sign) = if slack_col[i] != usize::MAX {
            (slack_col[i], if matches!(rel[i], Rel::Le) { -1.0 } else { 1.0 })
        } else {
            (art_col[i], -1.0)
        };
        let mut y = sign * t.obj[col].to_f64();
        if flipped[i] {
            y = -y;
        }
        if !lp.maximize {
            y = -y;
        }
        duals[i] = y;
    }

    Ok(LpSolution { status: LpStatus::Optimal, point, objective, duals })
}

fn pivot<S: Scalar>(t: &mut Tableau<S>, r: usize, c: usize) {
    let p = t.rows[r][c].clone();
    for v in t.rows[r].iter_mut() {
        *v = v.div(&p);
    }
    let prow = t.rows[r].clone();
    for i in 0..t.rows.len() {
        if i == r {
            continue;
        }
        let f = t.rows[i][c].clone();
        if f.is_zero() {
            continue;
        }
        let row = &mut t.rows[i];
        if S::DENSE_UPDATE {
            for (rj, pj) in row.iter_mut().zip(prow.iter()) {
                *rj = rj.sub(&f.mul(pj));
            }
        } else {
            for j in 0..t.cols {
                if !prow[j].is_zero() {
                    row[j] = row[j].sub(&f.mul(&prow[j]));
                }
            }
        }
    }
    let f = t.obj[c].clone();
    if !f.is_zero() {
        for j in 0..t.cols {
            if !prow[j].is_zero() {
                t.obj[j] = t.obj[j].sub(&f.mul(&prow[j]));
            }
        }
    }
    t.basis[r] = c;
}

/// Run the simplex to optimality. `limit_cols` bounds which columns may enter
/// (used to lock artificials out in phase 2). Dantzig rule with a Bland
/// fallback after a stall, which guarantees termination.
fn run_simplex<S: Scalar>(
    t: &mut Tableau<S>,
    limit_cols: usize,
    phase1: bool,
) -> Result<LpStatus> {
    let m = t.rows.len();
    let rhs_col = t.cols - 1;
    let enter_limit = if phase1 { t.cols - 1 } else { limit_cols };
    let cap = 20_000 + 60 * (m + t.cols);
    let mut stall = 0usize;
    let mut best = t.obj[rhs_col].clone();
    for _iter in 0..cap {
        // entering column
        let bland = stall > 200;
        let mut enter = usize::MAX;
        let mut best_c = S::opt_eps();
        for j in 0..enter_limit {
            if t.obj[j] > best_c {
                enter = j;
                if bland {
                    break;
                }
                best_c = t.obj[j].clone();
            }
        }
        if enter == usize::MAX {
            return Ok(LpStatus::Optimal);
        }
        // two-pass ratio test over rhs clamped at zero (negative entries are
        // roundoff): find the minimum ratio among well-scaled pivots, then
        // among near-ties take the largest pivot element (lowest basis index
        // under Bland) — pivoting on a tiny element blows the tableau up
        let ratio_of = |t: &Tableau<S>, i: usize| {
            let b = &t.rows[i][rhs_col];
            if *b < S::zero() { S::zero() } else { b.div(&t.rows[i][enter]) }
        };
        let mut piv_floor = S::opt_eps();
        let mut min_ratio: Option<S> = None;
        for _attempt in 0..2 {
            for i in 0..m {
                if t.rows[i][enter] > piv_floor {
                    let ratio = ratio_of(t, i);
                    if min_ratio.as_ref().map_or(true, |r| ratio < *r) {
                        min_ratio = Some(ratio);
                    }
                }
            }
            if min_ratio.is_some() {
                break;
            }
            // no well-scaled pivot in the column: retry at noise level before
            // declaring the column unbounded
            piv_floor = S::eps();
        }
        let Some(min_ratio) = min_ratio else {
            return Ok(LpStatus::Unbounded);
        };
        let tie_cap = min_ratio.add(&S::eps()).add(&min_ratio.abs().mul(&S::eps()));
        let mut leave = usize::MAX;
        let mut best_piv = S::zero();
        for i in 0..m {
            if t.rows[i][enter] > piv_floor && ratio_of(t, i) <= tie_cap {
                let better = if bland {
                    leave == usize::MAX || t.basis[i] < t.basis[leave]
                } else {
                    t.rows[i][enter] > best_piv
                };
                if better {
                    best_piv = t.rows[i][enter].clone();
                    leave = i;
                }
            }
        }
        debug_assert!(leave != usize::MAX);
        pivot(t, leave, enter);
        let cur = t.obj[rhs_col].clone();
        if cur < best {
            best = cur;
            stall = 0;
        } else {
            stall += 1;
        }
    }
    Err(Error::Certificate("simplex iteration cap exceeded".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_var() {
        let mut lp = Lp::new(true, 1);
        lp.set_objective(0, 1.0);
        lp.add_row("cap", vec![(0, 1.0)], Rel::Le, 3.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-9);
        assert!((s.point[0] - 3.0).abs() < 1e-9);
        // dual of the binding row is the objective gradient
        assert!((s.duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_face() {
        let mut lp = Lp::new(true, 2);
        lp.set_objective(0, 1.0);
        lp.set_objective(1, 1.0);
        lp.add_row("sum", vec![(0, 1.0), (1, 1.0)], Rel::Le, 1.0);
        let s = solve(&lp).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min 2x + 3y  s.t. x + y = 4, x >= 1, y <= 5
        let mut lp = Lp::new(false, 2);
        lp.set_objective(0, 2.0);
        lp.set_objective(1, 3.0);
        lp.add_row("eq", vec![(0, 1.0), (1, 1.0)], Rel::Eq, 4.0);
        lp.add_row("floor", vec![(0, 1.0)], Rel::Ge, 1.0);
        lp.bounds[1] = (0.0, Some(5.0));
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 8.0).abs() < 1e-9, "obj={}", s.objective);
        assert!((s.point[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let mut lp = Lp::new(true, 1);
        lp.set_objective(0, 1.0);
        lp.add_row("a", vec![(0, 1.0)], Rel::Le, 1.0);
        lp.add_row("b", vec![(0, 1.0)], Rel::Ge, 2.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = Lp::new(true, 1);
        lp.set_objective(0, 1.0);
        lp.add_row("a", vec![(0, -1.0)], Rel::Le, 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn check_point_reports_violations() {
        let mut lp = Lp::new(true, 2);
        lp.add_row("r1", vec![(0, 1.0), (1, 1.0)], Rel::Le, 1.0);
        assert!(check_point(&lp, &[0.5, 0.4]).is_empty());
        let v = check_point(&lp, &[1.0, 0.5]);
        assert_eq!(v.len(), 1);
        assert!((v[0].slack + 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_mode_matches_float() {
        let mut lp = Lp::new(true, 2);
        lp.set_objective(0, 1.0);
        lp.set_objective(1, 2.0);
        lp.add_row("a", vec![(0, 1.0), (1, 3.0)], Rel::Le, 2.0);
        lp.add_row("b", vec![(0, 2.0), (1, 1.0)], Rel::Le, 2.0);
        let f = solve(&lp).unwrap();
        let e = solve_exact(&lp).unwrap();
        assert!((f.objective - e.objective).abs() < 1e-12);
    }

    #[test]
    fn weak_duality_on_random_lps() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _case in 0..40 {
            let n = rng.gen_range(2..6);
            let m = rng.gen_range(2..7);
            let mut lp = Lp::new(true, n);
            for j in 0..n {
                lp.set_objective(j, rng.gen_range(0.0..2.0));
            }
            for i in 0..m {
                let coeffs = (0..n).map(|j| (j, rng.gen_range(0.1..2.0))).collect();
                lp.add_row(format!("r{i}"), coeffs, Rel::Le, rng.gen_range(0.5..3.0));
            }
            let s = solve(&lp).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            assert!(check_point(&lp, &s.point).is_empty());
            // weak duality: y >= 0 and y.b >= c.x
            let dual_obj: f64 = s.duals.iter().zip(&lp.rows).map(|(y, r)| y * r.rhs).sum();
            assert!(s.duals.iter().all(|&y| y >= -1e-7));
            assert!(dual_obj >= s.objective - 1e-6, "dual {dual_obj} < primal {}", s.objective);
        }
    }

    #[test]
    fn permuted_rows_same_objective() {
        let mut lp = Lp::new(true, 3);
        for j in 0..3 {
            lp.set_objective(j, (j + 1) as f64);
        }
        lp.add_row("a", vec![(0, 1.0), (1, 2.0)], Rel::Le, 2.0);
        lp.add_row("b", vec![(1, 1.0), (2, 1.0)], Rel::Le, 1.5);
        lp.add_row("c", vec![(0, 1.0), (2, 2.0)], Rel::Le, 2.5);
        let o1 = solve(&lp).unwrap().objective;
        lp.rows.reverse();
        let o2 = solve(&lp).unwrap().objective;
        assert!((o1 - o2).abs() < 1e-9);
    }
}
