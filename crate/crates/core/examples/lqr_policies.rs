//! Parameter-conditioned LQR policies and the action rules built on them.
//!
//! ```bash
//! cargo run --example lqr_policies
//! ```

use nalgebra::DVector;
use uncaps::env::{LatentParam, PhysicalParam, PlantSpec};
use uncaps::policy::{LqrPolicyProvider, PolicySpec};
use uncaps::rff::OptimalParamSet;

fn main() -> uncaps::Result<()> {
    let latent = [PhysicalParam::Mass, PhysicalParam::ActuatorGain]
        .map(LatentParam::with_default_range)
        .to_vec();
    let provider = LqrPolicyProvider::new(PlantSpec::mass_spring_damper(latent)?)?;

    for theta in [[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]] {
        let sol = provider.lqr_gain(&DVector::from_column_slice(&theta))?;
        println!(
            "θ = {theta:?}: K = [{:.3}, {:.3}], Riccati residual {:.1e}",
            sol.gain[(0, 0)],
            sol.gain[(0, 1)],
            sol.residual
        );
    }

    let state = DVector::from_column_slice(&[1.0, -0.5]);
    let theta = DVector::from_column_slice(&[0.5, 0.5]);
    let set = OptimalParamSet::new(vec![
        DVector::from_column_slice(&[0.3, 0.6]),
        DVector::from_column_slice(&[0.5, 0.5]),
        DVector::from_column_slice(&[0.7, 0.4]),
    ])?;
    let rules = [
        ("plain", PolicySpec::Plain(theta.clone())),
        (
            "unscented",
            PolicySpec::Unscented {
                theta,
                variance: 0.01,
                k: 2.0,
            },
        ),
        ("averaged", PolicySpec::Averaged(set.clone())),
        ("gaussian fit", PolicySpec::GaussianFit { set, k: 2.0 }),
    ];
    for (name, rule) in &rules {
        println!("{name:<13} u = {:.4}", rule.action(&provider, &state)?[0]);
    }
    println!("gains cached: {}", provider.cache_len());
    Ok(())
}
