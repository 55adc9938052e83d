//! The clinching auction with a price jump: solve the reallocation LP at the
//! jump and check that the resulting dynamic auction reproduces the
//! middle-ironed clinching outcome ex post.

use budgeted_auctions::dist::Dist;
use budgeted_auctions::mechanisms::{middle_ironed_expost, MicParams};
use budgeted_auctions::price_jump::{simulate_jump_auction, solve_jump, JumpState};

fn main() {
    let st = JumpState::new(1.0, 3, 0.6, 0.5, 1.0, 0.3).unwrap();
    let plan = solve_jump(&st).unwrap();
    println!("jump LP at s = 1, k' = 3, B = 0.6, v' = 0.5, v'' = 1, pi = 0.3:");
    for k in 0..=3 {
        println!("  {k} stayers: each stayer gets {:.4}, each quitter {:.4}", plan.h[k], plan.l[k]);
    }
    println!("  expected low-type allocation {:.4}\n", plan.objective);

    let budget = 1.0;
    let params = MicParams::new(0.4, budget).unwrap();
    let d = Dist::uniform(5.0).unwrap();
    let pi = (d.cdf(params.v_hi) - d.cdf(params.v_lo)) / (1.0 - d.cdf(params.v_lo));
    println!("two agents, uniform[0, 5], B = 1, jump from {} to {}:", params.v_lo, params.v_hi);
    for vals in [[0.3, 1.1], [1.2, 1.5], [1.7, 3.0], [2.4, 4.8]] {
        let jump = simulate_jump_auction(&vals, budget, params.v_lo, params.v_hi, pi).unwrap();
        let mic = middle_ironed_expost(&vals, &params);
        println!(
            "  values {:?}: jump alloc ({:.4}, {:.4}) pay ({:.4}, {:.4})",
            vals, jump.alloc[0], jump.alloc[1], jump.pay[0], jump.pay[1]
        );
        let diff = (0..2)
            .map(|i| (jump.alloc[i] - mic.alloc[i]).abs().max((jump.pay[i] - mic.pay[i]).abs()))
            .fold(0.0f64, f64::max);
        println!("             matches middle-ironed within {diff:.2e}");
    }
}
