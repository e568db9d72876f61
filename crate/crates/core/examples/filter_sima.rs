//! Classical Kalman filter against rLS.AO and rLS.IO on one AO-contaminated
//! SimA path, with clipping heights calibrated at radius 0.1.

use robust_kalman::bench::{default_contamination, Regime};
use robust_kalman::{
    build_preset, calibrate_radius, run_filter, simulate_contaminated, CalibrationOptions, ClipHeight,
    ClipTarget, FilterVariant, ModelPreset,
};

fn main() -> robust_kalman::Result<()> {
    let model = build_preset(ModelPreset::SimA);
    let spec = default_contamination(ModelPreset::SimA, &model, Regime::Ao)?;
    let tr = simulate_contaminated(&model, 50, &spec, 11)?;

    let opts = |target| CalibrationOptions::new(target, 50).seed(1);
    let ao = calibrate_radius(&model, 0.1, &opts(ClipTarget::Ao))?;
    let io = calibrate_radius(&model, 0.1, &opts(ClipTarget::Io))?;
    println!("steady b: AO {:.3}, IO {:.3}", ao.b[49], io.b[49]);

    let variants = [
        FilterVariant::Classical,
        FilterVariant::rls_ao(ClipHeight::Table(ao)),
        FilterVariant::rls_io(ClipHeight::Table(io)),
    ];
    let runs: Vec<_> = variants
        .iter()
        .map(|v| run_filter(&model, &tr.y_real, v))
        .collect::<Result<_, _>>()?;

    println!("{:>3} {:>9} {:>9} {:>9} {:>9} {:>9}", "t", "y", "x", "kalman", "rls-ao", "rls-io");
    for t in 0..25 {
        let mark = if tr.ao_hits[t] { "*" } else { " " };
        print!("{:>3}{mark}{:>8.2} {:>9.2}", t + 1, tr.y_real[t][0], tr.x_real[t][0]);
        for r in &runs {
            print!(" {:>9.2}", r.steps[t].x_filt[0]);
        }
        println!();
    }
    for r in &runs {
        let sse: f64 = r.steps.iter().zip(&tr.x_real).map(|(s, x)| (&s.x_filt - x).norm_squared()).sum();
        println!("{:<10} mean squared error {:.3}", r.variant.name(), sse / 50.0);
    }
    Ok(())
}
