//! One PASS/FAIL line per acceptance criterion. Failing criteria are reported,
//! not hidden: `slipflow verify` is the gate that exits nonzero on them.

use slipflow::experiments::verify::run_criteria;

fn main() {
    let results = run_criteria(&[1, 2, 3, 4, 5, 6, 7, 8, 9], 0);
    for r in &results {
        println!("{r}");
    }
    let failing: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!("{} of {} criteria passed; failing: {failing:?}", results.len() - failing.len(), results.len());
}
