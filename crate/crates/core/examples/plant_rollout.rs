//! Roll out policies on the noisy real system and score them by jumpstart.
//!
//! ```bash
//! cargo run --example plant_rollout
//! ```

use nalgebra::DVector;
use uncaps::env::{
    jumpstart_eval, rollout, EpisodeConfig, InitialState, LatentParam, PhysicalParam, PlantSpec, RealWorldSpec,
};
use uncaps::policy::{LqrPolicyProvider, PolicySpec};

fn main() -> uncaps::Result<()> {
    let latent = [PhysicalParam::Mass, PhysicalParam::Spring, PhysicalParam::Damping]
        .map(LatentParam::with_default_range)
        .to_vec();
    let plant = PlantSpec::mass_spring_damper(latent)?;
    let provider = LqrPolicyProvider::new(plant.clone())?;
    let theta_r = DVector::from_column_slice(&[0.3, 0.8, 0.5]);
    let world = RealWorldSpec::new(plant.clone(), theta_r.clone(), 0.1)?;
    let noiseless = RealWorldSpec::new(plant.clone(), theta_r.clone(), 0.0)?;

    let window = EpisodeConfig {
        horizon: 100,
        initial: InitialState::Fixed(plant.initial_state().clone()),
        seed: 7,
    };
    for (name, theta) in [
        ("matched", theta_r.clone()),
        ("mismatched", DVector::from_column_slice(&[0.9, 0.1, 0.0])),
    ] {
        let spec = PolicySpec::Plain(theta);
        let rule = spec.bind(&provider);
        let clean = rollout(&noiseless, &rule, &window)?;
        let noisy = rollout(&world, &rule, &window)?;
        let (mean, se) = jumpstart_eval(&world, &rule, 100, 100, 11)?;
        println!("{name:<11} window {clean:>8.3} (noiseless) {noisy:>8.3} (noisy)  jumpstart {mean:.3} ± {se:.3}");
    }
    Ok(())
}
