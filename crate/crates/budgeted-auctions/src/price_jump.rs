//! Price-jump reallocation: when the clinching price clock jumps from v′ to
//! v″, remaining supply is reallocated at v′ by an LP over the jump polytope;
//! the resulting auction reproduces the middle-ironed clinching auction for
//! two agents.

use crate::lp::{solve, Lp, LpStatus, Rel};
use crate::mechanisms::{clinch_run, ClinchState, ExPostOutcome};
use crate::{Error, Result};
use serde::Serialize;

/// Auction state at the moment of a price jump.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct JumpState {
    /// remaining supply
    pub supply: f64,
    /// number of active agents at the pre-jump price
    pub k_prime: usize,
    /// common remaining budget
    pub budget: f64,
    /// pre-jump price v′
    pub v_lo: f64,
    /// post-jump price v″
    pub v_hi: f64,
    /// probability an active agent quits (value below v″ given ≥ v′)
    pub pi: f64,
}

impl JumpState {
    pub fn new(
        supply: f64,
        k_prime: usize,
        budget: f64,
        v_lo: f64,
        v_hi: f64,
        pi: f64,
    ) -> Result<JumpState> {
        if !(0.0..=1.0).contains(&pi) || v_lo >= v_hi || supply < 0.0 || k_prime == 0 {
            return Err(Error::Domain(format!(
                "invalid jump state: s={supply}, k'={k_prime}, v'={v_lo}, v''={v_hi}, pi={pi}"
            )));
        }
        // total demand at v′ must cover the supply, else the polytope is empty
        if v_lo > 0.0 && k_prime as f64 * budget / v_lo < supply - 1e-12 {
            return Err(Error::Domain(format!(
                "k'B/v' = {} < supply {supply}",
                k_prime as f64 * budget / v_lo
            )));
        }
        Ok(JumpState { supply, k_prime, budget, v_lo, v_hi, pi })
    }
}

/// Quantities reallocated at the jump: when `k` agents stay, each stayer gets
/// `h[k]` and each quitter gets `l[k]`, both priced at v′.
#[derive(Debug, Clone, Serialize)]
pub struct JumpPlan {
    pub h: Vec<f64>,
    pub l: Vec<f64>,
    pub objective: f64,
}

/// LP over the jump polytope minimizing the expected quantity reallocated to
/// quitting (low-valued) agents; variables h_0..h_k′ then l_0..l_k′.
pub fn build_jump_lp(st: &JumpState) -> Lp {
    let kp = st.k_prime;
    let nv = 2 * (kp + 1);
    let hv = |k: usize| k; // h_k column
    let lv = |k: usize| kp + 1 + k; // l_k column
    let mut lp = Lp::new(false, nv);
    for k in 0..=kp {
        // weight of the "k agents stay" event on each quitter's quantity
        let w = st.pi.powi((kp - k) as i32) * (1.0 - st.pi).powi(k as i32);
        lp.set_objective(lv(k), w);
        if st.v_lo > 0.0 {
            lp.bounds[hv(k)] = (0.0, Some(st.budget / st.v_lo));
            lp.bounds[lv(k)] = (0.0, Some(st.budget / st.v_lo));
        }
    }
    for k in 1..=kp {
        // IC: staying and quitting agents are treated alike at the margin
        lp.add_row(
            format!("ic[{k}]"),
            vec![(hv(k), 1.0), (lv(k - 1), -1.0)],
            Rel::Eq,
            0.0,
        );
    }
    for k in 0..=kp {
        // MC: stayers' post-jump demand absorbs what the jump leaves over
        lp.add_row(
            format!("mc[{k}]"),
            vec![
                (hv(k), k as f64 * (1.0 - st.v_lo / st.v_hi)),
                (lv(k), (kp - k) as f64),
            ],
            Rel::Ge,
            st.supply - k as f64 * st.budget / st.v_hi,
        );
        // LS: the jump itself cannot over-allocate
        lp.add_row(
            format!("ls[{k}]"),
            vec![(hv(k), k as f64), (lv(k), (kp - k) as f64)],
            Rel::Le,
            st.supply,
        );
    }
    lp
}

/// Solve the jump LP and verify every polytope constraint post hoc.
pub fn solve_jump(st: &JumpState) -> Result<JumpPlan> {
    let lp = build_jump_lp(st);
    let sol = solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        // nonemptiness is guaranteed (h_k = l_k = s/k' is feasible)
        return Err(Error::Certificate(format!(
            "jump polytope reported {:?} for state {st:?}",
            sol.status
        )));
    }
    let bad = crate::lp::check_point(&lp, &sol.point);
    if !bad.is_empty() {
        return Err(Error::Certificate(format!("jump plan violates {}", bad[0].row)));
    }
    let kp = st.k_prime;
    Ok(JumpPlan {
        h: sol.point[..=kp].to_vec(),
        l: sol.point[kp + 1..].to_vec(),
        objective: sol.objective,
    })
}

/// Two-agent clinching auction with a single price jump from v′ to v″:
/// standard clinching below v′, LP reallocation at the jump, clinching again
/// above v″. `pi` is the conditional quit probability used by the jump LP.
pub fn simulate_jump_auction(
    vals: &[f64; 2],
    budget: f64,
    v_lo: f64,
    v_hi: f64,
    pi: f64,
) -> Result<ExPostOutcome> {
    let mut st = ClinchState::start(2, 1.0, budget);
    clinch_run(vals, &mut st, v_lo);
    if st.done {
        return Ok(ExPostOutcome { alloc: st.clinched, pay: st.paid });
    }
    let active: Vec<usize> = (0..2).filter(|&i| st.active[i]).collect();
    let state = JumpState::new(st.supply, active.len(), st.budget, st.price, v_hi, pi)?;
    let plan = solve_jump(&state)?;
    let stayers: Vec<usize> = active.iter().copied().filter(|&i| vals[i] >= v_hi).collect();
    let k = stayers.len();
    for &i in &active {
        let q = if vals[i] >= v_hi { plan.h[k] } else { plan.l[k] };
        st.clinched[i] += q;
        st.paid[i] += st.price * q;
        st.supply -= q;
        if vals[i] < v_hi {
            st.active[i] = false;
        }
    }
    if k == 0 || st.supply <= 1e-12 {
        return Ok(ExPostOutcome { alloc: st.clinched, pay: st.paid });
    }
    st.budget -= st.price * plan.h[k];
    st.price = v_hi;
    // arrival clinch at v″: every stayer is guaranteed s - (k-1)b/p on entry,
    // including a stayer with value exactly v″ who exits right after
    if k >= 2 {
        let delta = st.supply - (k as f64 - 1.0) * st.budget / st.price;
        if delta > 1e-12 {
            for &i in &stayers {
                st.clinched[i] += delta;
                st.paid[i] += st.price * delta;
            }
            st.supply -= k as f64 * delta;
            st.budget -= st.price * delta;
        }
    }
    clinch_run(vals, &mut st, f64::INFINITY);
    Ok(ExPostOutcome { alloc: st.clinched, pay: st.paid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{middle_ironed_expost, MicParams};

    #[test]
    fn witness_point_feasible() {
        let st = JumpState::new(1.0, 2, 1.0, 1.0, 3.0, 0.5).unwrap();
        let lp = build_jump_lp(&st);
        // h_k = l_k = s/k' satisfies every row
        let point = vec![0.5; 6];
        assert!(crate::lp::check_point(&lp, &point).is_empty());
        let plan = solve_jump(&st).unwrap();
        let witness_obj: f64 = (0..=2)
            .map(|k| 0.5 * 0.5f64.powi(2 - k as i32) * 0.5f64.powi(k as i32))
            .sum();
        assert!(plan.objective <= witness_obj + 1e-9);
    }

    #[test]
    fn zero_supply_zero_plan() {
        let st = JumpState::new(0.0, 2, 1.0, 1.0, 2.0, 0.3).unwrap();
        let plan = solve_jump(&st).unwrap();
        assert!(plan.l.iter().all(|&v| v.abs() < 1e-9));
        assert!(plan.objective.abs() < 1e-12);
    }

    #[test]
    fn single_stayer_by_hand() {
        // k'=1: l0 = s by MC(0)+LS(0), and IC pins h1 = l0
        let st = JumpState::new(1.0, 1, 1.2, 1.0, 2.0, 0.4).unwrap();
        let plan = solve_jump(&st).unwrap();
        assert!((plan.l[0] - 1.0).abs() < 1e-9);
        assert!((plan.h[1] - 1.0).abs() < 1e-9);
        // MC(1): h1 (1 - v'/v'') >= s - B/v''
        assert!(plan.h[1] * (1.0 - 1.0 / 2.0) >= 1.0 - 1.2 / 2.0 - 1e-9);
    }

    #[test]
    fn equivalence_with_middle_ironed() {
        let d = crate::dist::Dist::uniform(5.0).unwrap();
        for &(v_lo, budget) in &[(0.4f64, 1.0f64), (1.0, 1.5), (0.0, 1.0)] {
            let p = MicParams::new(v_lo, budget).unwrap();
            let pi = (d.cdf(p.v_hi) - d.cdf(p.v_lo)) / (1.0 - d.cdf(p.v_lo));
            for i in 1..=20 {
                for j in 1..=20 {
                    let vals = [5.0 * i as f64 / 20.0, 5.0 * j as f64 / 20.0];
                    let jump = simulate_jump_auction(&vals, budget, p.v_lo, p.v_hi, pi).unwrap();
                    let mic = middle_ironed_expost(&vals, &p);
                    for a in 0..2 {
                        assert!(
                            (jump.alloc[a] - mic.alloc[a]).abs() < 1e-6,
                            "alloc mismatch at {vals:?} (v'={v_lo}, B={budget}): {:?} vs {:?}",
                            jump.alloc,
                            mic.alloc
                        );
                        assert!(
                            (jump.pay[a] - mic.pay[a]).abs() < 1e-6,
                            "pay mismatch at {vals:?} (v'={v_lo}, B={budget}): {:?} vs {:?}",
                            jump.pay,
                            mic.pay
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn market_clears_and_ir() {
        let p = MicParams::new(0.6, 1.0).unwrap();
        let d = crate::dist::Dist::uniform(4.0).unwrap();
        let pi = (d.cdf(p.v_hi) - d.cdf(p.v_lo)) / (1.0 - d.cdf(p.v_lo));
        for i in 1..=15 {
            for j in 1..=15 {
                let vals = [4.0 * i as f64 / 15.0, 4.0 * j as f64 / 15.0];
                let out = simulate_jump_auction(&vals, 1.0, p.v_lo, p.v_hi, pi).unwrap();
                let total: f64 = out.alloc.iter().sum();
                assert!((total - 1.0).abs() < 1e-9, "market must clear at {vals:?}");
                for a in 0..2 {
                    assert!(out.pay[a] <= 1.0 + 1e-9, "budget cap at {vals:?}");
                    assert!(
                        vals[a] * out.alloc[a] - out.pay[a] >= -1e-9,
                        "ex post IR at {vals:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn ic_at_the_jump_boundary() {
        // quantity received at v' is the same for value v''-eps and v''+eps
        let p = MicParams::new(0.5, 1.0).unwrap();
        let pi = 0.4;
        for eps in [1e-3, 1e-6] {
            let lo = simulate_jump_auction(&[p.v_hi - eps, 3.0], 1.0, p.v_lo, p.v_hi, pi).unwrap();
            let hi = simulate_jump_auction(&[p.v_hi + eps, 3.0], 1.0, p.v_lo, p.v_hi, pi).unwrap();
            // at the boundary the stayer's jump quantity equals the quitter's
            // (IC row h_k = l_{k-1}); allocations can differ afterwards only
            // through post-jump clinching, which starts from the same holdings
            assert!((lo.pay[0] - p.v_lo * lo.alloc[0]).abs() < 1e-9);
            assert!(hi.alloc[0] >= lo.alloc[0] - 1e-9);
        }
    }

    #[test]
    fn random_states_never_infeasible() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let k = rng.gen_range(1..=5usize);
            let v_lo = rng.gen_range(0.1..2.0);
            let v_hi = v_lo + rng.gen_range(0.1..3.0);
            let budget = rng.gen_range(v_lo..4.0);
            let smax = (k as f64 * budget / v_lo).min(3.0);
            let supply = rng.gen_range(0.0..smax);
            let pi = rng.gen_range(0.0..1.0);
            let st = JumpState::new(supply, k, budget, v_lo, v_hi, pi).unwrap();
            let plan = solve_jump(&st).unwrap();
            assert!(plan.objective.is_finite());
        }
    }
}
