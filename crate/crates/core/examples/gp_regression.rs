//! Fit a GP to noisy samples of a 1D function and print the posterior on a grid.
//!
//! ```bash
//! cargo run --example gp_regression
//! ```

use nalgebra::DVector;
use uncaps::gp::{GpHyperparams, GpModel, ObservationSet};
use uncaps::rng::derive_rng;

fn main() -> uncaps::Result<()> {
    let f = |x: f64| (6.0 * x).sin() + 0.5 * x;
    let data = ObservationSet::from_pairs(
        1,
        [0.05, 0.2, 0.35, 0.6, 0.8, 0.95].map(|x| (DVector::from_element(1, x), f(x))),
    )?;

    let fixed = GpModel::fit(&data, GpHyperparams::new(0.15, 1.0, 1e-4)?)?;
    let tuned = GpModel::fit_max_evidence(&data, 10, &mut derive_rng(0, "example", 0))?;
    println!("evidence-fitted hyperparameters: {:?}", tuned.hyperparams());
    println!(
        "log evidence: fixed {:.3}, tuned {:.3}",
        fixed.log_marginal_likelihood()?,
        tuned.log_marginal_likelihood()?
    );

    println!("{:>5} {:>9} {:>9} {:>8}", "x", "truth", "mean", "sd");
    for i in 0..=10 {
        let x = i as f64 / 10.0;
        let (mean, var) = tuned.posterior(&DVector::from_element(1, x))?;
        println!("{x:>5.2} {:>9.4} {mean:>9.4} {:>8.4}", f(x), var.sqrt());
    }
    Ok(())
}
