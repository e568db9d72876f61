//! Filter and smooth SimB; compare errors per coordinate.

use robust_kalman::{build_preset, run_filter, simulate_ideal, smooth, FilterVariant, ModelPreset};

fn main() -> robust_kalman::Result<()> {
    let model = build_preset(ModelPreset::SimB);
    let tr = simulate_ideal(&model, 50, 3)?;
    let filt = run_filter(&model, &tr.y_real, &FilterVariant::Classical)?;
    let sm = smooth(&filt, &model)?;

    let mut fe = [0.0; 3];
    let mut se = [0.0; 3];
    for t in 0..50 {
        for i in 0..3 {
            fe[i] += (filt.steps[t].x_filt[i] - tr.x_real[t][i]).powi(2) / 50.0;
            se[i] += (sm.x_smooth[t][i] - tr.x_real[t][i]).powi(2) / 50.0;
        }
    }
    for i in 0..3 {
        println!("coordinate {}: filter {:.5}  smoother {:.5}", i + 1, fe[i], se[i]);
    }
    println!(
        "t=35 variances  filter {:?}\n                smoother {:?}",
        filt.steps[34].sigma_filt.diagonal().as_slice(),
        sm.sigma_smooth[34].diagonal().as_slice()
    );
    Ok(())
}
