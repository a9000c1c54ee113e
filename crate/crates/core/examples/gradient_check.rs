// Analytic gradients of the clipped triplet loss through whole networks,
// compared with central finite differences away from ReLU, pooling and clip
// breakpoints.

use tripemb::gradcheck::{run_grad_check, GradCheckConfig, GradCheckReport};
use tripemb::Result;

pub fn run_example() -> Result<GradCheckReport> {
    let config = GradCheckConfig {
        trials: 3,
        coords_per_trial: 50,
        ..GradCheckConfig::default()
    };
    let report = run_grad_check(&config)?;
    println!(
        "{} of {} coordinates within {} relative error ({} skipped near breakpoints)",
        report.passed, report.checked, config.tolerance, report.skipped_near_kink
    );
    if let Some(w) = &report.worst {
        println!(
            "largest error: {} tensor {} index {} analytic {:.6e} numeric {:.6e} ({:.2e})",
            w.model, w.tensor, w.index, w.analytic, w.numeric, w.rel_error
        );
    }
    Ok(report)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
