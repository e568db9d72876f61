//! Two-dimensional random walk with contaminated-normal observation errors.

use robust_kalman::contamination::{simulate_mixture_noise, NormalMixture};
use robust_kalman::{build_preset, run_filter, ClipHeight, FilterVariant, Matrix, ModelPreset, Vector};

fn main() -> robust_kalman::Result<()> {
    let model = build_preset(ModelPreset::RandomWalk2D);
    let v = Matrix::from_diagonal(&Vector::from_vec(vec![9.0, 9.0]));
    let err = NormalMixture::new(0.1, &v, &Vector::zeros(2), &(&v * 100.0))?;
    let tr = simulate_mixture_noise(&model, 100, None, Some(&err), 8)?;
    println!("contaminated observation errors: {}", tr.ao_count());
    for var in [FilterVariant::Classical, FilterVariant::rls_ao(ClipHeight::Fixed(3.0))] {
        let r = run_filter(&model, &tr.y_real, &var)?;
        let mse = r
            .steps
            .iter()
            .zip(&tr.x_real)
            .map(|(s, x)| (&s.x_filt - x).norm_squared())
            .sum::<f64>()
            / 100.0;
        println!("{:<10} MSE {:.3}", r.variant.name(), mse);
    }
    Ok(())
}
