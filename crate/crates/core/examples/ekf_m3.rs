//! Extended Kalman filtering of the quadratic vehicle model M3, with a
//! finite-difference check of the analytic Jacobians.

use robust_kalman::bench::{default_contamination, Regime};
use robust_kalman::model::jacobian_check;
use robust_kalman::{
    build_preset, run_filter, simulate_contaminated, ClipHeight, FilterVariant, ModelPreset, StateSpace,
};

fn main() -> robust_kalman::Result<()> {
    let model = build_preset(ModelPreset::M3);
    let nl = model.as_nonlinear().expect("M3 is nonlinear");
    let report = jacobian_check(nl, 1, model.initial_mean(), 1e-4);
    println!("Jacobian check passed: {} (max deviation {:.2e})", report.passed(), report.max_deviation());

    let spec = default_contamination(ModelPreset::M3, &model, Regime::Ao)?;
    let tr = simulate_contaminated(&model, 500, &spec, 5)?;
    println!("{} AO outliers in 500 steps", tr.ao_count());
    for v in [FilterVariant::Classical, FilterVariant::rls_ao(ClipHeight::Fixed(5.0))] {
        let r = run_filter(&model, &tr.y_real, &v)?;
        let mse: f64 = r
            .steps
            .iter()
            .zip(&tr.x_real)
            .map(|(s, x)| (s.x_filt[0] - x[0]).powi(2))
            .sum::<f64>()
            / 500.0;
        let clipped = r.steps.iter().filter(|s| s.clipped).count();
        println!("{:<10} position MSE {:>10.3}  clipped steps {clipped}", r.variant.name(), mse);
    }
    Ok(())
}
