//! Interim-allocation calculus: piecewise closed-form functions, ironing,
//! the payment identity, feasibility checks, and the ex ante relaxation.

use crate::dist::{piece_index, Dist};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// One additive term `coef * (shift + scale*v)^pow * (ln v)^log`.
///
/// Plain powers use `shift = 0, scale = 1`. Keeping the affine base lets
/// `F(v)^(n-1)` stay exact for large `n` without binomial expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub shift: f64,
    pub scale: f64,
    pub pow: i32,
    pub log: bool,
}

impl Term {
    pub fn constant(c: f64) -> Term {
        Term { coef: c, shift: 0.0, scale: 1.0, pow: 0, log: false }
    }

    pub fn power(coef: f64, pow: i32) -> Term {
        Term { coef, shift: 0.0, scale: 1.0, pow, log: false }
    }

    pub fn affine_power(coef: f64, shift: f64, scale: f64, pow: i32) -> Term {
        Term { coef, shift, scale, pow, log: false }
    }

    pub fn eval(&self, v: f64) -> f64 {
        let base = self.shift + self.scale * v;
        let mut y = self.coef * powi_checked(base, self.pow);
        if self.log {
            y *= v.ln();
        }
        y
    }

    /// Antiderivative of this term, as a sum of terms (plus the convention that
    /// constants of integration are handled by the caller).
    fn antiderivative(&self) -> Vec<Term> {
        let t = *self;
        if !t.log {
            if t.pow == -1 {
                // only the pure 1/v case arises in this crate's rules
                assert!(
                    t.shift == 0.0,
                    "antiderivative of 1/(shift + scale v) with shift != 0 is unsupported"
                );
                return vec![Term { coef: t.coef / t.scale, shift: 0.0, scale: 1.0, pow: 0, log: true }];
            }
            let k = t.pow + 1;
            return vec![Term {
                coef: t.coef / (t.scale * k as f64),
                shift: t.shift,
                scale: t.scale,
                pow: k,
                log: false,
            }];
        }
        // log terms only occur with pure powers (shift = 0)
        assert!(t.shift == 0.0, "affine-base log terms are unsupported");
        let c = t.coef * powi_checked(t.scale, t.pow);
        assert!(t.pow != -1, "ln(v)/v has no closed form in this basis");
        let k = t.pow + 1;
        // int v^p ln v dv = v^{p+1} ln v/(p+1) - v^{p+1}/(p+1)^2
        vec![
            Term { coef: c / k as f64, shift: 0.0, scale: 1.0, pow: k, log: true },
            Term { coef: -c / (k as f64 * k as f64), shift: 0.0, scale: 1.0, pow: k, log: false },
        ]
    }

    /// Definite integral over `[a, b]`.
    fn integral(&self, a: f64, b: f64) -> f64 {
        if self.log && self.pow == -1 && self.shift == 0.0 {
            // int c ln(v)/v dv = c ln(v)^2 / 2
            let c = self.coef / self.scale;
            return c * (b.ln().powi(2) - a.ln().powi(2)) / 2.0;
        }
        let anti = self.antiderivative();
        anti.iter().map(|t| t.eval(b) - t.eval(a)).sum()
    }

    /// This term multiplied by `a + b*v`.
    pub fn mul_affine(&self, a: f64, b: f64) -> Vec<Term> {
        assert!(!self.log || b == 0.0 || self.shift == 0.0);
        let mut out = Vec::with_capacity(2);
        if a != 0.0 {
            let mut t = *self;
            t.coef *= a;
            out.push(t);
        }
        if b != 0.0 {
            // b*v*(shift + scale v)^p = (b/scale)(shift+scale v)^{p+1} - (b*shift/scale)(shift+scale v)^p
            let mut hi = *self;
            hi.coef *= b / self.scale;
            hi.pow += 1;
            out.push(hi);
            if self.shift != 0.0 {
                let mut lo = *self;
                lo.coef *= -b * self.shift / self.scale;
                out.push(lo);
            }
        }
        out
    }
}

fn powi_checked(base: f64, pow: i32) -> f64 {
    if pow == 0 {
        1.0
    } else {
        base.powi(pow)
    }
}

/// A function on `[0, h]` given by closed-form pieces. Piece `i` applies on
/// `[breaks[i], breaks[i+1])`; the value at the final breakpoint comes from the
/// last piece. Step rules built from discrete distributions append a phantom
/// top piece so the jump at the highest atom is representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFn {
    pub breaks: Vec<f64>,
    pub pieces: Vec<Vec<Term>>,
}

impl PiecewiseFn {
    pub fn constant(c: f64, lo: f64, hi: f64) -> PiecewiseFn {
        PiecewiseFn { breaks: vec![lo, hi], pieces: vec![vec![Term::constant(c)]] }
    }

    /// Step function with level `levels[i]` on `[cuts[i], cuts[i+1])`;
    /// `levels.last()` applies at and beyond the final cut (a phantom top
    /// piece keeps the jump at the last cut representable).
    pub fn step(cuts: &[f64], levels: &[f64]) -> PiecewiseFn {
        assert_eq!(cuts.len(), levels.len());
        let mut breaks: Vec<f64> = cuts.to_vec();
        let top = *cuts.last().unwrap();
        breaks.push(top + 1.0 + top.abs());
        let pieces: Vec<Vec<Term>> = levels.iter().map(|&c| vec![Term::constant(c)]).collect();
        PiecewiseFn { breaks, pieces }
    }

    pub fn domain_hi(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    fn piece_at(&self, v: f64) -> usize {
        piece_index(&self.breaks, v.max(self.breaks[0]))
    }

    pub fn eval(&self, v: f64) -> f64 {
        let i = self.piece_at(v);
        self.pieces[i].iter().map(|t| t.eval(v)).sum()
    }

    /// Insert a breakpoint at `v` (no effect if already present).
    pub fn split_at(&mut self, v: f64) {
        if self.breaks.iter().any(|&b| b == v) || v <= self.breaks[0] || v >= self.domain_hi() {
            return;
        }
        let i = self.piece_at(v);
        self.breaks.insert(i + 1, v);
        let piece = self.pieces[i].clone();
        self.pieces.insert(i + 1, piece);
    }

    /// Plain Lebesgue integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        assert!(b >= a);
        let mut total = aggregate_over_pieces(&self.breaks, a, b, |i, lo, hi| {
            self.pieces[i].iter().map(|t| t.integral(lo, hi)).sum::<f64>()
        });
        if total.abs() < 1e-300 {
            total = 0.0;
        }
        total
    }

    /// Integral of `w(v) * self(v)` against the distribution over `[a, b]`,
    /// where `w` is the affine weight `wa + wb*v`. Atoms at both endpoints are
    /// included in the discrete case.
    pub fn integral_weighted_df(&self, d: &Dist, a: f64, b: f64, wa: f64, wb: f64) -> f64 {
        match d {
            Dist::Continuous { breaks: db, densities, .. } => {
                let mut total = 0.0;
                // walk the common refinement of the two breakpoint sets
                let lo = a.max(db[0]).max(self.breaks[0]);
                let hi = b.min(*db.last().unwrap());
                if hi <= lo {
                    return 0.0;
                }
                let mut cuts: Vec<f64> = self
                    .breaks
                    .iter()
                    .chain(db.iter())
                    .copied()
                    .filter(|&x| x > lo && x < hi)
                    .collect();
                cuts.push(lo);
                cuts.push(hi);
                cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
                cuts.dedup();
                for w in cuts.windows(2) {
                    let mid = 0.5 * (w[0] + w[1]);
                    let f = densities[piece_index(db, mid)];
                    if f == 0.0 {
                        continue;
                    }
                    let terms = &self.pieces[self.piece_at(mid)];
                    let s: f64 = terms
                        .iter()
                        .flat_map(|t| t.mul_affine(wa * f, wb * f))
                        .map(|t| t.integral(w[0], w[1]))
                        .sum();
                    total += s;
                }
                total
            }
            Dist::Discrete { values, masses, .. } => values
                .iter()
                .zip(masses)
                .filter(|(v, _)| **v >= a - 1e-12 && **v <= b + 1e-12)
                .map(|(&v, &m)| (wa + wb * v) * self.eval(v) * m)
                .sum(),
        }
    }

    /// `∫ x dF` over `[a, b]`.
    pub fn integral_df(&self, d: &Dist, a: f64, b: f64) -> f64 {
        self.integral_weighted_df(d, a, b, 1.0, 0.0)
    }

    /// `∫ v·x(v) dF` over the whole support.
    pub fn welfare_integrand_df(&self, d: &Dist) -> f64 {
        self.integral_weighted_df(d, 0.0, d.hbar(), 0.0, 1.0)
    }

    /// Distribution-weighted average on `[a, b]`.
    pub fn df_average(&self, d: &Dist, a: f64, b: f64) -> Result<f64> {
        let mass = match d {
            Dist::Continuous { .. } => d.cdf(b) - d.cdf(a),
            Dist::Discrete { values, masses, .. } => values
                .iter()
                .zip(masses)
                .filter(|(v, _)| **v >= a - 1e-12 && **v <= b + 1e-12)
                .map(|(_, m)| m)
                .sum(),
        };
        if mass <= 1e-15 {
            return Err(Error::Domain(format!("zero-mass interval [{a}, {b}]")));
        }
        Ok(self.integral_df(d, a, b) / mass)
    }

    /// Pointwise scale by a constant.
    pub fn scaled(&self, c: f64) -> PiecewiseFn {
        let pieces = self
            .pieces
            .iter()
            .map(|p| p.iter().map(|t| Term { coef: t.coef * c, ..*t }).collect())
            .collect();
        PiecewiseFn { breaks: self.breaks.clone(), pieces }
    }
}

/// Sum a per-subinterval quantity over the pieces of a partition restricted to `[a,b]`.
fn aggregate_over_pieces<F: FnMut(usize, f64, f64) -> f64>(
    breaks: &[f64],
    a: f64,
    b: f64,
    mut f: F,
) -> f64 {
    let mut total = 0.0;
    for i in 0..breaks.len() - 1 {
        let lo = breaks[i].max(a);
        let hi = breaks[i + 1].min(b);
        if hi > lo {
            total += f(i, lo, hi);
        }
    }
    total
}

/// The highest-bid-wins interim constraint `z(v) = F(v)^(n-1)`.
pub fn hbw_constraint(d: &Dist, n: usize) -> PiecewiseFn {
    assert!(n >= 1);
    match d {
        Dist::Continuous { breaks, densities, cum } => {
            let pieces = (0..densities.len())
                .map(|i| {
                    // F(v) = cum[i] + f_i (v - b_i) on this piece
                    let shift = cum[i] - densities[i] * breaks[i];
                    vec![Term::affine_power(1.0, shift, densities[i], n as i32 - 1)]
                })
                .collect();
            PiecewiseFn { breaks: breaks.clone(), pieces }
        }
        Dist::Discrete { values, masses, cum } => {
            // uniform tie-splitting at atoms: x(v_i) = (F_i^n - F_{i-1}^n)/(n m_i)
            let mut levels = Vec::with_capacity(values.len());
            for i in 0..values.len() {
                let flo = if i == 0 { 0.0 } else { cum[i - 1] };
                levels.push((cum[i].powi(n as i32) - flo.powi(n as i32)) / (n as f64 * masses[i]));
            }
            let mut cuts = vec![0.0];
            cuts.extend_from_slice(values);
            // allocation below the lowest atom is pinned to the lowest atom's level
            let mut lv = vec![levels[0]];
            lv.extend_from_slice(&levels);
            PiecewiseFn::step(&cuts, &lv)
        }
    }
}

/// Distribution-weighted averaging of `x` on `[a, b]`.
pub fn iron(x: &PiecewiseFn, d: &Dist, a: f64, b: f64) -> Result<PiecewiseFn> {
    if !(a < b) {
        return Err(Error::Domain(format!("iron interval [{a}, {b}] is empty")));
    }
    let avg = x.df_average(d, a, b)?;
    let mut out = x.clone();
    out.split_at(a);
    out.split_at(b);
    for i in 0..out.pieces.len() {
        let lo = out.breaks[i];
        if lo >= a - 1e-15 && out.breaks[i + 1] <= b + 1e-15 {
            out.pieces[i] = vec![Term::constant(avg)];
        }
    }
    Ok(out)
}

/// `p(v) = v·x(v) − ∫₀^v x(t) dt` for a nondecreasing allocation rule.
pub fn payment_identity(x: &PiecewiseFn) -> PiecewiseFn {
    let mut pieces = Vec::with_capacity(x.pieces.len());
    let mut acc = 0.0; // ∫ up to the start of the current piece
    for i in 0..x.pieces.len() {
        let mut terms: Vec<Term> = Vec::new();
        // v * x(v)
        for t in &x.pieces[i] {
            terms.extend(t.mul_affine(0.0, 1.0));
        }
        // minus the running integral: -(acc - X(b_i)) - X(v)
        let mut head = -acc;
        for t in &x.pieces[i] {
            for anti in t.antiderivative() {
                head += anti.eval(x.breaks[i]);
                terms.push(Term { coef: -anti.coef, ..anti });
            }
        }
        if head != 0.0 {
            terms.push(Term::constant(head));
        }
        acc += x.pieces[i]
            .iter()
            .map(|t| t.integral(x.breaks[i], x.breaks[i + 1]))
            .sum::<f64>();
        pieces.push(terms);
    }
    PiecewiseFn { breaks: x.breaks.clone(), pieces }
}

/// Tail average of `z` on `[v, h]` under `d`.
pub fn tail_average(z: &PiecewiseFn, d: &Dist, v: f64) -> Result<f64> {
    let h = d.hbar();
    if !d.is_discrete() && v >= h - 1e-12 {
        return Ok(z.eval(h));
    }
    z.df_average(d, v, h)
}

/// The budget-binding ironing threshold: the unique `v'` with
/// `v'·z̄(v') − ∫₀^{v'} z dt = B`, or `h` if the budget never binds.
pub fn allpay_iron_threshold(z: &PiecewiseFn, d: &Dist, b_budget: f64) -> Result<f64> {
    if b_budget <= 0.0 {
        return Err(Error::Domain("budget must be positive".into()));
    }
    let h = d.hbar();
    let g = |v: f64| -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let zbar = if v >= h { z.eval(h) } else { tail_average(z, d, v).unwrap_or_else(|_| z.eval(h)) };
        v * zbar - z.integral(0.0, v)
    };
    if g(h) <= b_budget {
        return Ok(h);
    }
    bisect(|v| g(v) - b_budget, 0.0, h)
}

/// Interim feasibility: tail dominance `∫ᵥ x dF ≤ ∫ᵥ z dF` for all `v`,
/// checked at all breakpoints plus a uniform grid.
pub fn interim_feasible(x: &PiecewiseFn, z: &PiecewiseFn, d: &Dist) -> bool {
    let h = d.hbar();
    let mut probes: Vec<f64> = x
        .breaks
        .iter()
        .chain(z.breaks.iter())
        .copied()
        .filter(|&v| (0.0..=h).contains(&v))
        .collect();
    let grid = 10_000;
    probes.extend((0..=grid).map(|i| h * i as f64 / grid as f64));
    probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    probes.dedup();
    probes.iter().all(|&v| {
        x.integral_df(d, v, h) <= z.integral_df(d, v, h) + 1e-9
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LotteryRegime {
    BudgetBinds,
    AllocationBinds,
}

/// Welfare-optimal mechanism for the ex ante relaxation: a posted price with a lottery.
#[derive(Debug, Clone, Serialize)]
pub struct PostedLottery {
    pub price: f64,
    pub win_prob: f64,
    pub cutoff: f64,
    pub regime: LotteryRegime,
    /// set when the input distribution was not welfare-regular
    pub irregular_input: bool,
}

/// Ex ante welfare-optimal posted lottery: values above the cutoff `v†` buy a
/// win probability, tuned so the item sells out ex ante.
pub fn ex_ante_optimal(d: &Dist, n: usize, b_budget: f64) -> Result<PostedLottery> {
    if d.is_discrete() {
        return Err(Error::Domain(
            "posted lottery requires a continuous distribution; use the ex ante LP for atoms"
                .into(),
        ));
    }
    let irregular = !d.check_regularity().welfare_regular;
    let nf = n as f64;
    // psi(v) = (B/v)(1 - F(v)) is decreasing in v; budget binds if it still
    // exceeds 1/n at v = B (the first point where the lottery price is feasible)
    let psi = |v: f64| (b_budget / v) * (1.0 - d.cdf(v));
    if b_budget > 0.0 && psi(b_budget.min(d.hbar())) > 1.0 / nf && b_budget < d.hbar() {
        let vd = bisect(|v| psi(v) - 1.0 / nf, b_budget, d.hbar())?;
        return Ok(PostedLottery {
            price: b_budget,
            win_prob: b_budget / vd,
            cutoff: vd,
            regime: LotteryRegime::BudgetBinds,
            irregular_input: irregular,
        });
    }
    let cutoff = d.quantile_value(1.0 / nf)?;
    Ok(PostedLottery {
        price: cutoff,
        win_prob: 1.0,
        cutoff,
        regime: LotteryRegime::AllocationBinds,
        irregular_input: irregular,
    })
}

/// Expected welfare of the posted lottery across `n` agents.
pub fn posted_lottery_welfare(lot: &PostedLottery, d: &Dist, n: usize) -> f64 {
    let x = PiecewiseFn::constant(lot.win_prob, 0.0, d.hbar());
    n as f64 * x.integral_weighted_df(d, lot.cutoff, d.hbar(), 0.0, 1.0)
}

/// Upper bound `min(1, 2·z̄(v'))` on the top interim allocation of any
/// budget-balanced interim-feasible rule.
pub fn relax_budget_bound(z: &PiecewiseFn, d: &Dist, b_budget: f64) -> Result<f64> {
    let vp = allpay_iron_threshold(z, d, b_budget)?;
    let zbar = tail_average(z, d, vp)?;
    Ok((2.0 * zbar).min(1.0))
}

/// Bisection for a continuous function with a sign change on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Domain(format!(
            "no sign change on [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-10 * (1.0 + hi.abs()) {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(h: f64) -> Dist {
        Dist::uniform(h).unwrap()
    }

    #[test]
    fn hbw_basics() {
        let d = uniform(1.0);
        let z = hbw_constraint(&d, 2);
        assert!((z.eval(0.3) - 0.3).abs() < 1e-12);
        assert!((z.eval(1.0) - 1.0).abs() < 1e-12);
        let z3 = hbw_constraint(&d, 3);
        assert!((z3.eval(0.5) - 0.25).abs() < 1e-12);
        let z1 = hbw_constraint(&d, 1);
        assert!((z1.eval(0.7) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hbw_large_n_stays_finite() {
        let n = 1000;
        let nf = n as f64;
        let d = Dist::piecewise(vec![0.0, 1.0 / nf, 1.0], vec![nf - 1.0, 1.0 / (nf - 1.0)])
            .unwrap();
        let z = hbw_constraint(&d, n);
        assert!((z.eval(1.0) - 1.0).abs() < 1e-9);
        let at = z.eval(1.0 / nf);
        let expect = (1.0 - 1.0 / nf).powi(n as i32 - 1);
        assert!((at - expect).abs() < 1e-12);
        // tail integral of F^{n-1} f dv = (1 - F(v)^n)/n
        let tail = z.integral_df(&d, 1.0 / nf, 1.0);
        let expect_tail = (1.0 - (1.0 - 1.0 / nf).powi(n as i32)) / nf;
        assert!((tail - expect_tail).abs() < 1e-12);
    }

    #[test]
    fn iron_full_interval_and_idempotence() {
        let d = uniform(1.0);
        let z = hbw_constraint(&d, 2);
        let ironed = iron(&z, &d, 0.0, 1.0).unwrap();
        assert!((ironed.eval(0.2) - 0.5).abs() < 1e-12);
        let again = iron(&ironed, &d, 0.0, 1.0).unwrap();
        assert!((again.eval(0.9) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn iron_top_uniform_h() {
        let h = 4.04;
        let d = uniform(h);
        let z = hbw_constraint(&d, 2);
        let x = iron(&z, &d, 2.0, h).unwrap();
        assert!((x.eval(3.0) - (h + 2.0) / (2.0 * h)).abs() < 1e-12);
        assert!((x.eval(1.5) - 1.5 / h).abs() < 1e-12);
        assert!(interim_feasible(&x, &z, &d));
    }

    #[test]
    fn payment_identity_examples() {
        let x = PiecewiseFn {
            breaks: vec![0.0, 1.0],
            pieces: vec![vec![Term::power(1.0, 1)]],
        };
        let p = payment_identity(&x);
        assert!((p.eval(1.0) - 0.5).abs() < 1e-12);
        assert!((p.eval(0.6) - 0.18).abs() < 1e-12);
        assert!(p.eval(0.0).abs() < 1e-12);

        let c = PiecewiseFn::constant(0.7, 0.0, 2.0);
        let pc = payment_identity(&c);
        assert!(pc.eval(1.3).abs() < 1e-12);
    }

    #[test]
    fn ironed_allpay_budget_binds_exactly() {
        // symbolic identity: p(h) = v' z̄(v') - ∫_0^{v'} z for the top-ironed rule
        let h = 4.04;
        let d = uniform(h);
        let z = hbw_constraint(&d, 2);
        let vp = allpay_iron_threshold(&z, &d, 1.0).unwrap();
        assert!((vp - 2.0).abs() < 1e-9);
        let x = iron(&z, &d, vp, h).unwrap();
        let p = payment_identity(&x);
        assert!((p.eval(h) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn threshold_examples_and_monotonicity() {
        let d = uniform(1.0);
        let z = hbw_constraint(&d, 2);
        let v1 = allpay_iron_threshold(&z, &d, 0.125).unwrap();
        assert!((v1 - 0.25).abs() < 1e-9);
        assert!((allpay_iron_threshold(&z, &d, 2.0).unwrap() - 1.0).abs() < 1e-12);
        let mut last = 0.0;
        for b in [0.01, 0.05, 0.1, 0.2, 0.4, 0.6] {
            let v = allpay_iron_threshold(&z, &d, b).unwrap();
            assert!(v >= last - 1e-12);
            last = v;
        }
        assert!(allpay_iron_threshold(&z, &d, 0.0).is_err());
    }

    #[test]
    fn feasibility_counterexample() {
        let d = uniform(1.0);
        let z = hbw_constraint(&d, 2);
        let x = PiecewiseFn::constant(1.0, 0.0, 1.0);
        assert!(!interim_feasible(&x, &z, &d));
        assert!(interim_feasible(&z, &z, &d));
    }

    #[test]
    fn ex_ante_examples() {
        let d = uniform(1.0);
        let lot = ex_ante_optimal(&d, 2, 0.25).unwrap();
        assert!(matches!(lot.regime, LotteryRegime::BudgetBinds));
        assert!((lot.cutoff - 1.0 / 3.0).abs() < 1e-9);
        assert!((lot.win_prob - 0.75).abs() < 1e-9);
        assert!((lot.win_prob * (1.0 - d.cdf(lot.cutoff)) - 0.5).abs() < 1e-9);

        let slack = ex_ante_optimal(&d, 2, 10.0).unwrap();
        assert!(matches!(slack.regime, LotteryRegime::AllocationBinds));
        assert!((slack.price - 0.5).abs() < 1e-9);
        assert_eq!(slack.win_prob, 1.0);

        let d404 = uniform(4.04);
        let l = ex_ante_optimal(&d404, 2, 1.0).unwrap();
        assert!(matches!(l.regime, LotteryRegime::BudgetBinds));
        // 0.5 = (1/v)(1 - v/4.04)
        let resid = (1.0 / l.cutoff) * (1.0 - l.cutoff / 4.04) - 0.5;
        assert!(resid.abs() < 1e-9);
    }

    #[test]
    fn relax_bound_examples() {
        let d = uniform(4.04);
        let z = hbw_constraint(&d, 2);
        let b = relax_budget_bound(&z, &d, 1.0).unwrap();
        assert_eq!(b, 1.0); // 1.495... capped
        let zb = tail_average(&z, &d, 2.0).unwrap();
        assert!((2.0 * zb - 2.0 * (4.04 + 2.0) / (2.0 * 4.04)).abs() < 1e-9);
        let slack = relax_budget_bound(&z, &d, 10.0).unwrap();
        assert_eq!(slack, 1.0);
    }

    #[test]
    fn iron_preserves_tail_integrals() {
        let d = uniform(2.0);
        let z = hbw_constraint(&d, 3);
        let x = iron(&z, &d, 0.5, 1.5).unwrap();
        for v in [0.0, 0.2, 0.5, 1.5, 1.7, 2.0] {
            let tx = x.integral_df(&d, v, 2.0);
            let tz = z.integral_df(&d, v, 2.0);
            assert!(tx <= tz + 1e-9, "tail at {v}");
        }
        assert!((x.integral_df(&d, 0.0, 2.0) - z.integral_df(&d, 0.0, 2.0)).abs() < 1e-12);
    }

    #[test]
    fn discrete_step_rule_eval_and_integrals() {
        let d = Dist::discrete(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let z = hbw_constraint(&d, 2);
        assert!((z.eval(1.0) - 0.25).abs() < 1e-12);
        assert!((z.eval(2.0) - 0.75).abs() < 1e-12);
        // extension below the lowest atom keeps the lowest type's payment at zero
        assert!((z.eval(0.5) - 0.25).abs() < 1e-12);
        let p = payment_identity(&z);
        // lowest type pays nothing; the top type's downward-IC payment:
        // 2*(3/4) - [1/4 + 1/4] = 1, leaving it indifferent to mimicking type 1
        assert!(p.eval(1.0).abs() < 1e-12);
        assert!((p.eval(2.0) - 1.0).abs() < 1e-12);
        // interim total: 2 * sum x m = 1
        let total: f64 = 2.0 * z.integral_df(&d, 0.0, 2.0);
        assert!((total - 1.0).abs() < 1e-12);
    }
}
