//! Compares analytic loss gradients with central finite differences on a
//! few random small scenes.
//!
//! cargo run --release --example gradient_check

use trigrid::gradcheck::{check_term, GradCheckConfig, GradInstance, LossTerm};

fn main() -> trigrid::Result<()> {
    for layers in 1..=3 {
        let cfg = GradCheckConfig {
            layers,
            ..GradCheckConfig::default()
        };
        let inst = GradInstance::new(&cfg, layers as u64)?;
        for term in LossTerm::ALL {
            let s = check_term(&inst, &cfg, term, 0);
            println!(
                "L={layers} {term:12?} {}/{} within tolerance, max rel err {:.2e}",
                s.passed,
                s.probes,
                s.max_rel_err
            );
        }
    }
    Ok(())
}
