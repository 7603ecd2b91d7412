//! Run the built-in invariant suites.

fn main() {
    for r in antsel::harness::run_selftest(0) {
        match r.outcome {
            Ok(d) => println!("PASS {}: {d}", r.name),
            Err(d) => println!("FAIL {}: {d}", r.name),
        }
    }
}
