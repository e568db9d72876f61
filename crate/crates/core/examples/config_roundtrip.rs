//! Dump a preset as an explicit JSON config and load it back.

use robust_kalman::config::{Config, ModelConfig};
use robust_kalman::ModelPreset;

fn main() -> robust_kalman::Result<()> {
    let mut cfg = Config::for_preset(ModelPreset::SimB);
    cfg.model = ModelConfig::dump(ModelPreset::SimB, 50)?;
    cfg.horizon = Some(50);
    cfg.seed = Some(42);
    let text = cfg.to_json()?;
    println!("{text}");
    let back = Config::from_json(&text)?;
    assert_eq!(back, cfg);
    Ok(())
}
