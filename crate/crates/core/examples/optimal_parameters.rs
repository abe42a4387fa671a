//! Sample the posterior distribution of the maximizer with random Fourier features.
//!
//! ```bash
//! cargo run --example optimal_parameters
//! ```

use nalgebra::DVector;
use uncaps::gp::{GpHyperparams, ObservationSet};
use uncaps::rff::opt_latent_dist;
use uncaps::rng::derive_rng;

fn main() -> uncaps::Result<()> {
    let f = |x: f64| 1.0 - (x - 0.7).powi(2);
    let h = GpHyperparams::default();
    for n in [4, 8, 20] {
        let data = ObservationSet::from_pairs(
            1,
            (0..n).map(|i| {
                let x = i as f64 / (n - 1) as f64;
                (DVector::from_element(1, x), f(x))
            }),
        )?;
        let set = opt_latent_dist(&data, 50, 2000, &h, &mut derive_rng(0, "example", n as u64))?;
        let mut xs: Vec<f64> = set.samples().iter().map(|s| s[0]).collect();
        xs.sort_by(f64::total_cmp);
        println!(
            "{n:>2} observations: mean optimum {:.4}, sd {:.4}, 10-90% range [{:.3}, {:.3}]",
            set.mean()[0],
            set.isotropic_variance()?.sqrt(),
            xs[5],
            xs[44]
        );
    }
    Ok(())
}
