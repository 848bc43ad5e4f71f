//! Audits analytic gradients against central finite differences, in 64-bit,
//! over graphs drawn from real environment rollouts. Three suites: the
//! relational stack, the attention stack, and the full training objective.
//!
//!     cargo run --example gradcheck_model

use hetmarl::error::Result;
use hetmarl::harness::{run_gradcheck, GRADCHECK_TOLERANCE};

fn main() -> Result<()> {
    for suite in run_gradcheck(0)? {
        let verdict = if suite.max_rel_err < GRADCHECK_TOLERANCE {
            "ok"
        } else {
            "FAIL"
        };
        println!(
            "{:<10} {:>9} elements  max rel err {:.3e}  worst {}  [{verdict}]",
            suite.name, suite.elements_checked, suite.max_rel_err, suite.worst_param
        );
    }
    Ok(())
}
