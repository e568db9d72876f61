//! A small Monte-Carlo study on SimA: ideal, AO and IO regimes, scored at
//! t = 35 of 50. Pass a run count as the first argument (default 2000).

use robust_kalman::bench::{run_study, Scenario};
use robust_kalman::ModelPreset;

fn main() -> robust_kalman::Result<()> {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let mut scenario = Scenario::for_preset(ModelPreset::SimA).runs(runs).seed(42);
    scenario.score_time = 35;
    let report = run_study(&scenario)?;
    println!("{runs} runs, clipping heights at t*: {:?}", report.heights);
    print!("{}", report.summary_table());
    Ok(())
}
