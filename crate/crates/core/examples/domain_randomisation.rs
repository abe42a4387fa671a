//! Domain randomisation over the full parameter cube against the matched policy.
//!
//! ```bash
//! cargo run --example domain_randomisation
//! ```

use uncaps::baselines::{dr_policy, DrConfig};
use uncaps::env::{jumpstart_eval, LatentParam, PhysicalParam, PlantSpec, RealWorldSpec};
use uncaps::experiment::real_parameter;
use uncaps::policy::{LqrPolicyProvider, PolicySpec};

fn main() -> uncaps::Result<()> {
    let latent = [PhysicalParam::Mass, PhysicalParam::ActuatorGain, PhysicalParam::Damping]
        .map(LatentParam::with_default_range)
        .to_vec();
    let plant = PlantSpec::mass_spring_damper(latent)?;
    let provider = LqrPolicyProvider::new(plant.clone())?;

    let full = dr_policy(&DrConfig::default(), &provider)?;
    let narrow = dr_policy(
        &DrConfig {
            lower: 0.4,
            upper: 0.6,
            ..DrConfig::default()
        },
        &provider,
    )?;
    println!(
        "full-cube DR gain    K = [{:.3}, {:.3}]",
        full.gain[(0, 0)],
        full.gain[(0, 1)]
    );
    println!(
        "narrow-range DR gain K = [{:.3}, {:.3}]",
        narrow.gain[(0, 0)],
        narrow.gain[(0, 1)]
    );

    println!("{:>6} {:>10} {:>10} {:>10}", "seed", "matched", "DR full", "DR narrow");
    for seed in [50, 100, 150, 500, 1000] {
        let theta_r = real_parameter(seed, plant.dim());
        let world = RealWorldSpec::new(plant.clone(), theta_r.clone(), 0.1)?;
        let matched = PolicySpec::Plain(theta_r);
        let score =
            |rule: &dyn uncaps::policy::ActionRule| jumpstart_eval(&world, rule, 100, 100, seed).map(|(m, _)| m);
        println!(
            "{seed:>6} {:>10.3} {:>10.3} {:>10.3}",
            score(&matched.bind(&provider))?,
            score(&full)?,
            score(&narrow)?
        );
    }
    Ok(())
}
