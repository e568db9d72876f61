//! SimB: the second state coordinate is invisible to Z, so after an IO level
//! shift no filter can recover it, while the observed coordinates recover.

use robust_kalman::bench::{run_study, Regime, Scenario, Stage};
use robust_kalman::{ModelPreset, VariantKind};

fn main() -> robust_kalman::Result<()> {
    let mut scenario = Scenario::for_preset(ModelPreset::SimB).runs(2000).seed(3);
    scenario.score_time = 35;
    let report = run_study(&scenario)?;
    println!("{:<10} {:>6} {:>12} {:>12} {:>12}", "variant", "regime", "coord 1", "coord 2", "coord 3");
    for v in [VariantKind::Classical, VariantKind::RlsIo, VariantKind::RlsAo] {
        for r in [Regime::Ideal, Regime::Io] {
            let c = report.cell(r, v, Stage::Filter).expect("cell");
            println!(
                "{:<10} {:>6} {:>12.4e} {:>12.4e} {:>12.4e}",
                v.name(),
                r.name(),
                c.coord_mse[0],
                c.coord_mse[1],
                c.coord_mse[2]
            );
        }
    }
    Ok(())
}
