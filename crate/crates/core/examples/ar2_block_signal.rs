//! AR(2) with a piecewise-constant (block) signal entering the state.

use robust_kalman::contamination::block_signal;
use robust_kalman::{
    build_preset, calibrate_radius, run_filter, simulate_contaminated, CalibrationOptions, ClipHeight,
    ClipTarget, ContaminatingDist, ContaminationSpec, FilterVariant, ModelPreset,
};

fn main() -> robust_kalman::Result<()> {
    let sig = block_signal(100, 10.0, 5.0, 1)?;
    println!("block signal: {} segments starting at {:?}", sig.segment_count(), sig.segment_starts);

    let model = build_preset(ModelPreset::Ar2);
    let spec = ContaminationSpec::io(
        0.3,
        ContaminatingDist::BlockSignal { mean_duration: 10.0, amplitude_scale: 10.0 },
    );
    let opts = |target| CalibrationOptions::new(target, 100).seed(1);
    let b_ao = calibrate_radius(&model, 0.1, &opts(ClipTarget::Ao))?;
    let b_io = calibrate_radius(&model, 0.1, &opts(ClipTarget::Io))?;
    let variants = [
        FilterVariant::Classical,
        FilterVariant::rls_ao(ClipHeight::Table(b_ao)),
        FilterVariant::rls_io(ClipHeight::Table(b_io)),
    ];

    let mut mse = [0.0; 3];
    let mut clipped = [0usize; 3];
    let reps = 200;
    for seed in 0..reps {
        let tr = simulate_contaminated(&model, 100, &spec, seed)?;
        for (k, v) in variants.iter().enumerate() {
            let r = run_filter(&model, &tr.y_real, v)?;
            clipped[k] += r.steps.iter().filter(|s| s.clipped).count();
            mse[k] += r
                .steps
                .iter()
                .zip(&tr.x_real)
                .map(|(s, x)| (&s.x_filt - x).norm_squared())
                .sum::<f64>()
                / (100 * reps) as f64;
        }
    }
    for (k, v) in variants.iter().enumerate() {
        println!("{:<10} MSE {:>7.3}  clipped steps {}", v.kind().name(), mse[k], clipped[k]);
    }
    Ok(())
}
