//! Simulate SimA under each contamination regime and show where outliers hit.

use robust_kalman::bench::{default_contamination, Regime};
use robust_kalman::{build_preset, simulate_contaminated, ModelPreset};

fn main() -> robust_kalman::Result<()> {
    let model = build_preset(ModelPreset::SimA);
    for regime in [Regime::Ideal, Regime::Ao, Regime::Io, Regime::BlockSignal] {
        let spec = default_contamination(ModelPreset::SimA, &model, regime)?;
        let tr = simulate_contaminated(&model, 50, &spec, 7)?;
        println!("{:<13} io hits {:>2}  ao hits {:>2}", regime.name(), tr.io_count(), tr.ao_count());
        if regime == Regime::Io {
            for t in 0..10 {
                let mark = if tr.io_hits[t] { " <- IO" } else { "" };
                println!(
                    "  t={:>2}  x_ideal {:>8.3}  x_real {:>8.3}  y {:>8.3}{mark}",
                    t + 1,
                    tr.x_ideal[t][0],
                    tr.x_real[t][0],
                    tr.y_real[t][0]
                );
            }
        }
    }
    Ok(())
}
