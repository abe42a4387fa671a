//! Expected improvement against its unscented form on a surrogate with a narrow peak.
//!
//! The objective has a narrow spike at 0.2 and a broad plateau around 0.7. The
//! table lists the posterior mean, its noise-averaged ("robust") value, EI and
//! UEI on a grid; UEI averages EI over the sigma points of the input noise.
//!
//! ```bash
//! cargo run --example acquisition
//! ```

use nalgebra::DVector;
use uncaps::acquisition::{expected_improvement, maximize_acquisition, unscented_ei, AcquisitionContext};
use uncaps::gp::{GpHyperparams, GpModel, ObservationSet};
use uncaps::rng::derive_rng;
use uncaps::unscented::{sigma_points_isotropic, unscented_mean};

fn main() -> uncaps::Result<()> {
    let f = |x: f64| 1.1 * (-((x - 0.2) / 0.04).powi(2)).exp() + (-((x - 0.7) / 0.25).powi(2)).exp();
    let xs = [0.0, 0.1, 0.17, 0.2, 0.23, 0.3, 0.4, 0.5, 0.6, 0.8, 0.9, 1.0];
    let data = ObservationSet::from_pairs(1, xs.map(|x| (DVector::from_element(1, x), f(x))))?;
    let gp = GpModel::fit(&data, GpHyperparams::new(0.08, 1.0, 1e-4)?)?;

    let variance = 0.005;
    let plain = AcquisitionContext::new(&gp, 0.0, 2.0)?;
    let noisy = AcquisitionContext::new(&gp, variance, 2.0)?;
    println!("{:>5} {:>9} {:>9} {:>9} {:>9}", "x", "mean", "robust", "EI", "UEI");
    for i in 0..=20 {
        let x = DVector::from_element(1, i as f64 / 20.0);
        let mean = gp.posterior(&x)?.0;
        let sp = sigma_points_isotropic(&x, variance, 2.0)?.clamp_to_cube();
        let robust = unscented_mean(|p| Ok(gp.posterior(p)?.0), &sp)?;
        println!(
            "{:>5.2} {mean:>9.4} {robust:>9.4} {:>9.5} {:>9.5}",
            x[0],
            expected_improvement(&plain, &x)?,
            unscented_ei(&noisy, &x)?
        );
    }
    let ei_max = maximize_acquisition(
        &|x: &DVector<f64>| expected_improvement(&plain, x),
        1,
        20,
        &mut derive_rng(0, "ei", 0),
    )?;
    let uei_max = maximize_acquisition(
        &|x: &DVector<f64>| unscented_ei(&noisy, x),
        1,
        20,
        &mut derive_rng(0, "uei", 0),
    )?;
    println!("EI suggests {:.3}, UEI suggests {:.3}", ei_max[0], uei_max[0]);
    Ok(())
}
