//! Run the contribution gate on a template directory.
//!
//! With the `hubforge` binary built, the live checks run too:
//! cargo build && cargo run --example validate_template -- templates/stub-vector

use std::time::Duration;

use hubforge::runtime::{Driver, ProcessDriver};
use hubforge::validator::validate;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../templates/stub-vector").into());
    let driver = ProcessDriver::locate().ok().map(|d| Box::new(d) as Box<dyn Driver>);
    if driver.is_none() {
        eprintln!("hubforge binary not found; live checks skipped");
    }
    let outcome = validate(std::path::Path::new(&dir), driver, Duration::from_secs(30));
    print!("{}", outcome.render());
    std::process::exit(if outcome.passed() { 0 } else { 1 });
}
