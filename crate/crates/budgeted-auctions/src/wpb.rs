//! Winner-pays-bid machinery: Lagrangian price-posting payoff curves, concave
//! hull ironing, the budget-binding first-price threshold, and the linear
//! lower-bound instance separating first-price from all-pay welfare.

use crate::dist::Dist;
use crate::interim::{
    bisect, hbw_constraint, iron, payment_identity, tail_average,
    PiecewiseFn,
};
use crate::mechanisms::MechanismRule;
use crate::{Error, Result};
use serde::Serialize;

/// A sampled Lagrangian payoff curve with its concave hull.
///
/// The ironed interval is `[0, q_dagger]`: the hull is the chord from the
/// origin there and coincides with the curve beyond it.
#[derive(Debug, Clone, Serialize)]
pub struct PayoffCurve {
    pub qs: Vec<f64>,
    pub values: Vec<f64>,
    pub hull: Vec<f64>,
    pub q_dagger: f64,
    pub lambda: f64,
}

/// Expected value of the top `q` quantile: `∫₀^q v(t) dt = ∫_{v(q)}^{h̄} x dF`.
fn tail_expectation(d: &Dist, v: f64) -> f64 {
    PiecewiseFn::constant(1.0, 0.0, d.hbar()).integral_weighted_df(d, v, d.hbar(), 0.0, 1.0)
}

/// Lagrangian price-posting payoff at ex ante sale probability `q`:
/// `∫₀^q v(t) dt − λ·v(q) + λ·B`, with value 0 at `q = 0` (the curve is
/// discontinuous there whenever λ > 0).
pub fn lagrangian_curve(d: &Dist, lambda: f64, budget: f64, q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let v = d.quantile_value(q).unwrap_or(0.0);
    tail_expectation(d, v) - lambda * v + lambda * budget
}

/// Upper concave envelope of curve samples plus the `(0,0)` atom; reports the
/// largest sampled `q` still strictly below the hull.
pub fn concave_hull(qs: &[f64], values: &[f64], lambda: f64) -> PayoffCurve {
    assert_eq!(qs.len(), values.len());
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(qs.len() + 1);
    if qs.first().map_or(true, |&q| q > 0.0) {
        pts.push((0.0, 0.0));
    }
    pts.extend(qs.iter().copied().zip(values.iter().copied()));
    // monotone chain, upper hull
    let mut stack: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while stack.len() >= 2 {
            let a = stack[stack.len() - 2];
            let b = stack[stack.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                stack.pop();
            } else {
                break;
            }
        }
        stack.push(p);
    }
    // evaluate the envelope back on the sample grid
    let mut hull = Vec::with_capacity(qs.len());
    let mut seg = 0;
    for &q in qs {
        while seg + 1 < stack.len() - 1 && stack[seg + 1].0 < q {
            seg += 1;
        }
        let (x0, y0) = stack[seg];
        let (x1, y1) = stack[seg + 1];
        let y = if x1 > x0 { y0 + (y1 - y0) * (q - x0) / (x1 - x0) } else { y0.max(y1) };
        hull.push(y);
    }
    let tol = 1e-9;
    let q_dagger = qs
        .iter()
        .zip(values.iter().zip(hull.iter()))
        .filter(|(_, (v, h))| **h > **v + tol)
        .map(|(&q, _)| q)
        .fold(0.0, f64::max);
    PayoffCurve { qs: qs.to_vec(), values: values.to_vec(), hull, q_dagger, lambda }
}

/// Sample the Lagrangian curve on a uniform grid, take its concave hull, and
/// refine the ironed endpoint by the tangency condition
/// `R(q) = q·(v(q) + λ/f(v(q)))`.
pub fn payoff_curve(d: &Dist, lambda: f64, budget: f64, grid: usize) -> Result<PayoffCurve> {
    if d.is_discrete() {
        return Err(Error::Domain("payoff curves need a continuous distribution".into()));
    }
    let qs: Vec<f64> = (1..=grid).map(|i| i as f64 / grid as f64).collect();
    let values: Vec<f64> = qs.iter().map(|&q| lagrangian_curve(d, lambda, budget, q)).collect();
    let mut curve = concave_hull(&qs, &values, lambda);
    if curve.q_dagger > 0.0 && curve.q_dagger < 1.0 {
        // chord-slope-equals-curve-slope; negative below q†, positive above
        let t = |q: f64| -> f64 {
            let v = d.quantile_value(q).unwrap_or(0.0);
            let f = d.pdf(v);
            if f <= 0.0 {
                return f64::NAN;
            }
            lagrangian_curve(d, lambda, budget, q) - q * (v + lambda / f)
        };
        let step = 1.0 / grid as f64;
        let lo = (curve.q_dagger - step).max(step);
        let hi = (curve.q_dagger + step).min(1.0);
        if let Ok(q) = bisect(t, lo, hi) {
            curve.q_dagger = q;
        }
    }
    Ok(curve)
}

/// Ratio of interim payment to interim allocation (the bid under
/// winner-pays-bid); errors where the allocation vanishes.
pub fn bid_ratio(rule: &MechanismRule, v: f64) -> Result<f64> {
    let x = rule.interim_alloc.eval(v);
    if x <= 1e-12 {
        return Err(Error::UndefinedRatio(format!("allocation is 0 at v = {v}")));
    }
    Ok(rule.interim_pay.eval(v) / x)
}

/// Welfare-optimal winner-pays-bid rule: highest-bid-wins ironed on `[v', h̄]`
/// where `v'` makes the top bid exactly `B`, i.e. `(v' − B)·z̄(v') = ∫₀^{v'} z`.
///
/// The bid of ironed types is constant (the monotone bid ratio binds at the
/// top type only), so no closed-form bid function is attached; use
/// [`bid_ratio`].
pub fn first_price_rule(d: &Dist, n: usize, budget: f64) -> Result<MechanismRule> {
    if budget <= 0.0 {
        return Err(Error::Domain("budget must be positive".into()));
    }
    let z = hbw_constraint(d, n);
    let h = d.hbar();
    let g = |v: f64| -> f64 {
        let zbar = tail_average(&z, d, v).unwrap_or_else(|_| z.eval(h));
        (v - budget) * zbar - z.integral(0.0, v)
    };
    let x = if g(h) <= 0.0 {
        z // the unconstrained top bid already fits in the budget
    } else {
        let vp = bisect(g, budget.min(h), h)?;
        iron(&z, d, vp, h)?
    };
    let p = payment_identity(&x);
    Ok(MechanismRule { interim_alloc: x, interim_pay: p, bid_fn: None, label: "first-price".into() })
}

/// Result of the first-price linear lower-bound experiment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FpExperiment {
    pub n: usize,
    pub w_fp: f64,
    pub w_ap: f64,
    pub ratio: f64,
}

/// The two-piece instance on which winner-pays-bid loses a linear factor:
/// density `n−1` on `[0, 1/n]`, `1/(n−1)` on `(1/n, 1]`, budget `(1−1/e)/n`.
/// All-pay welfare stays Θ(1) while first-price welfare is Θ(1/n).
pub fn fp_lowerbound_experiment(n: usize) -> Result<FpExperiment> {
    if n < 2 {
        return Err(Error::Domain("need n >= 2".into()));
    }
    let nf = n as f64;
    let d = Dist::piecewise(vec![0.0, 1.0 / nf, 1.0], vec![nf - 1.0, 1.0 / (nf - 1.0)])?;
    let budget = (1.0 - (-1.0f64).exp()) / nf;
    let w_fp = nf * first_price_rule(&d, n, budget)?.interim_alloc.welfare_integrand_df(&d);
    let w_ap = nf * crate::mechanisms::allpay_rule(&d, n, budget)?.interim_alloc.welfare_integrand_df(&d);
    if w_fp <= 0.0 {
        return Err(Error::UndefinedRatio("first-price welfare is 0".into()));
    }
    Ok(FpExperiment { n, w_fp, w_ap, ratio: w_ap / w_fp })
}

/// The multiplier λ for which the rule induced by ironing `[v(q†(λ)), h̄]`
/// spends the budget exactly at the top type; 0 when the budget is slack.
pub fn find_binding_lambda(d: &Dist, n: usize, budget: f64) -> Result<f64> {
    let z = hbw_constraint(d, n);
    let h = d.hbar();
    let zbar_h = z.eval(h);
    if (h - budget) * zbar_h - z.integral(0.0, h) <= 0.0 {
        return Ok(0.0); // budget slack: no ironing, λ = 0
    }
    let grid = 10_000;
    let residual = |lambda: f64| -> Result<f64> {
        let q = payoff_curve(d, lambda, budget, grid)?.q_dagger;
        let vd = d.quantile_value(q)?;
        let x = if q > 0.0 && vd < h { iron(&z, d, vd, h)? } else { z.clone() };
        let p = payment_identity(&x);
        Ok(p.eval(h) - budget * x.eval(h))
    };
    // bracket: residual > 0 at λ = 0 (budget binding), decreasing in λ
    let mut hi = 1.0;
    while residual(hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Domain("no binding multiplier below 1e6".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if residual(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
