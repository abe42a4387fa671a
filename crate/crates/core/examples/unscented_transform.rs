//! Propagate an isotropic Gaussian through nonlinear functions with 2d+1 sigma points
//! and compare against Monte Carlo.
//!
//! ```bash
//! cargo run --example unscented_transform
//! ```

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use uncaps::rng::derive_rng;
use uncaps::unscented::{sigma_points_isotropic, unscented_mean};
use uncaps::ParamVector;

fn main() -> uncaps::Result<()> {
    let mean = DVector::from_column_slice(&[0.4, 0.6]);
    let variance = 0.01;
    let sp = sigma_points_isotropic(&mean, variance, 2.0)?;
    for (p, w) in sp.points().iter().zip(sp.weights()) {
        println!("sigma point ({:.4}, {:.4})  weight {w:.4}", p[0], p[1]);
    }

    type Named = (&'static str, fn(&ParamVector) -> f64);
    let functions: [Named; 3] = [
        ("quadratic", |x| x.norm_squared()),
        ("sine", |x| (5.0 * x[0]).sin() * x[1]),
        ("exponential", |x| (2.0 * x.sum()).exp()),
    ];
    let mut rng = derive_rng(0, "example", 0);
    let draws: Vec<ParamVector> = (0..200_000)
        .map(|_| mean.map(|m| m + variance.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng)))
        .collect();
    for (name, f) in functions {
        let ut = unscented_mean(|x| Ok(f(x)), &sp)?;
        let mc = draws.iter().map(f).sum::<f64>() / draws.len() as f64;
        println!(
            "{name:<12} unscented {ut:.5}  monte carlo {mc:.5}  at mean {:.5}",
            f(&mean)
        );
    }
    Ok(())
}
