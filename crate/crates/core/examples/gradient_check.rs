//! Compares the analytic gradient of the two-head softmax loss with central
//! finite differences on a real featurized batch, with and without the
//! proximal term.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use fedsim::model::{loss_and_grad, step_example, ModelShape, ParamVector};
use fedsim::synth::DatasetPreset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let shape = ModelShape::new(32, 8)?;
    let data = DatasetPreset::AppLevel.build(0)?;
    let batch: Vec<_> = data.train[..3]
        .iter()
        .flat_map(|e| e.steps.iter().map(move |s| step_example(e, s, &shape, true)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w: ParamVector = (0..shape.n_params()).map(|_| rng.random_range(-0.5..0.5)).collect::<Vec<_>>().into();
    let global: ParamVector = (0..shape.n_params()).map(|_| rng.random_range(-0.5..0.5)).collect::<Vec<_>>().into();
    let h = 1e-6;

    for mu in [0.0, 0.2] {
        let (loss, grad) = loss_and_grad(&w, &batch, &global, mu, None, &shape)?;
        let mut probe = w.clone();
        let mut fd = vec![0.0; w.len()];
        for i in 0..w.len() {
            probe.values[i] = w.values[i] + h;
            let up = loss_and_grad(&probe, &batch, &global, mu, None, &shape)?.0;
            probe.values[i] = w.values[i] - h;
            let down = loss_and_grad(&probe, &batch, &global, mu, None, &shape)?.0;
            probe.values[i] = w.values[i];
            fd[i] = (up - down) / (2.0 * h);
        }
        // Errors are scaled by the largest gradient entry; tiny entries would
        // otherwise turn rounding noise into large relative errors.
        let scale = grad.iter().chain(&fd).fold(0.0f64, |m, g| m.max(g.abs()));
        let worst = grad.iter().zip(&fd).fold(0.0f64, |m, (g, f)| m.max((g - f).abs())) / scale;
        println!(
            "mu={mu}: {} steps, {} params, loss {loss:.5}, worst relative error {worst:.2e}",
            batch.len(),
            w.len()
        );
    }
    Ok(())
}
