//! Clipping heights for SimB under both criteria.

use robust_kalman::{
    build_preset, calibrate_efficiency, calibrate_radius, CalibrationOptions, ClipTarget, ModelPreset,
};

fn main() -> robust_kalman::Result<()> {
    let model = build_preset(ModelPreset::SimB);
    for target in [ClipTarget::Ao, ClipTarget::Io] {
        let opts = CalibrationOptions::new(target, 50).mc_size(50_000).seed(2);
        for r in [0.05, 0.1, 0.25] {
            let t = calibrate_radius(&model, r, &opts)?;
            println!(
                "{target:?} r={r:<5} b_1={:.4} b_50={:.4} steady from t={:?}",
                t.b[0], t.b[49], t.steady_state_index
            );
        }
        for delta in [0.05, 0.1] {
            let t = calibrate_efficiency(&model, delta, &opts)?;
            println!("{target:?} delta={delta:<5} b_50={:.4} warnings={:?}", t.b[49], t.warnings);
        }
    }
    let t = calibrate_radius(&model, 0.1, &CalibrationOptions::new(ClipTarget::Ao, 5).mc_size(10_000))?;
    println!("{}", t.to_json()?);
    Ok(())
}
