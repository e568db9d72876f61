//! Filtering through gaps: NaN entries are skipped, fully missing steps only
//! predict.

use robust_kalman::{build_preset, run_filter, simulate_ideal, smooth, FilterVariant, ModelPreset};

fn main() -> robust_kalman::Result<()> {
    let model = build_preset(ModelPreset::SimB);
    let tr = simulate_ideal(&model, 30, 9)?;
    let mut ys = tr.y_real.clone();
    for t in 10..15 {
        ys[t].fill(f64::NAN);
    }
    ys[20][1] = f64::NAN;
    let f = run_filter(&model, &ys, &FilterVariant::Classical)?;
    let s = smooth(&f, &model)?;
    for t in 8..22 {
        let st = &f.steps[t];
        println!(
            "t={:>2} observed={:<5} var(x1) filter {:.4} smoother {:.4}",
            t + 1,
            st.observed,
            st.sigma_filt[(0, 0)],
            s.sigma_smooth[t][(0, 0)]
        );
    }
    Ok(())
}
