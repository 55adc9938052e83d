//! The two headline welfare ratios: all-pay vs clinching on uniform[0, 4.04]
//! (the direct-revelation side), and all-pay vs middle-ironed clinching on
//! uniform[0, 5.5] (the non-revelation side). The gap between the two
//! optimized ratios separates what revelation mechanisms can achieve.

use budgeted_auctions::dist::Dist;
use budgeted_auctions::eval::{ratio, welfare_interim};
use budgeted_auctions::mechanisms::{
    allpay_rule, clinching_interim_2agent, mic_interim_2agent, MicParams,
};

fn main() {
    let budget = 1.0;

    let d = Dist::uniform(4.04).unwrap();
    let w_ap = welfare_interim(&allpay_rule(&d, 2, budget).unwrap(), &d, 2);
    let w_cl = welfare_interim(&clinching_interim_2agent(&d, budget).unwrap(), &d, 2);
    let r1 = ratio(&w_ap, &w_cl).unwrap();
    println!("uniform[0, 4.04], B = 1:");
    println!("  all-pay welfare    {:.6}", w_ap.value);
    println!("  clinching welfare  {:.6}", w_cl.value);
    println!("  ratio              {:.6}  (blind-offer benchmark ~ 1.0302)", r1.value);

    let d = Dist::uniform(5.5).unwrap();
    let params = MicParams::new(0.0, budget).unwrap();
    let w_ap = welfare_interim(&allpay_rule(&d, 2, budget).unwrap(), &d, 2);
    let w_mic = welfare_interim(&mic_interim_2agent(&d, &params).unwrap(), &d, 2);
    let r2 = ratio(&w_ap, &w_mic).unwrap();
    println!("uniform[0, 5.5], B = 1, ironed on [{}, {}]:", params.v_lo, params.v_hi);
    println!("  all-pay welfare       {:.6}", w_ap.value);
    println!("  middle-ironed welfare {:.6}", w_mic.value);
    println!("  ratio                 {:.6}  (dominant-strategy benchmark ~ 1.0130)", r2.value);

    println!("revelation gap: [{:.4}, {:.4}]", r2.value, r1.value);
}
