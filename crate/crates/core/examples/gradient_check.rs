//! Central finite differences against tape gradients on the small model.

use trajfuse::gradcheck::{gradient_check, small_config, TOLERANCE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = small_config(7);
    let report = gradient_check(&config, 7, Some(25))?;
    for g in &report.groups {
        println!(
            "{:<20} {:>3} entries  max relative error {:.2e}  kinks {}",
            g.group, g.checked, g.max_rel_error, g.kinks
        );
    }
    let worst = report.max_rel_error();
    println!("max relative error {worst:.2e} (tolerance {TOLERANCE:e})");
    Ok(())
}
