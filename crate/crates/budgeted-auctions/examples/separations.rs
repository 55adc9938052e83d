//! The two negative results: on an irregular three-atom instance the all-pay
//! auction loses a factor approaching 2, and against winner-pays-bid
//! mechanisms its advantage grows linearly in the number of agents.

use budgeted_auctions::eval::irregular_gap_experiment;
use budgeted_auctions::wpb::fp_lowerbound_experiment;

fn main() {
    println!("irregular three-atom instance (N+1 agents, B = 1):");
    for big_n in [10usize, 30, 100, 300] {
        let g = irregular_gap_experiment(big_n, 1e-6).unwrap();
        println!(
            "  N = {big_n:>3}: all-pay {:.4}, tailored rule {:.4}, gap {:.4}",
            g.w_allpay, g.w_crafted, g.ratio
        );
    }
    println!("  the gap approaches 2 from below\n");

    println!("two-piece instance, budget (1 - 1/e)/n:");
    for n in [10usize, 100, 1000] {
        let e = fp_lowerbound_experiment(n).unwrap();
        println!(
            "  n = {n:>4}: all-pay {:.4}, best winner-pays-bid {:.6}, ratio {:.2}",
            e.w_ap, e.w_fp, e.ratio
        );
    }
    println!("  the ratio grows linearly in n (~ n/6.9)");
}
