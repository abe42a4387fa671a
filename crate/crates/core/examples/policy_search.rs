//! One trial of every search variant on the same noisy plant and seed.
//!
//! ```bash
//! cargo run --example policy_search
//! ```

use uncaps::env::{jumpstart_eval, LatentParam, PhysicalParam, PlantSpec, RealWorldSpec};
use uncaps::experiment::{jumpstart_seed, real_parameter};
use uncaps::policy::LqrPolicyProvider;
use uncaps::search::{policy_search, SearchConfig, Variant};

fn main() -> uncaps::Result<()> {
    let seed = 50;
    let latent = [PhysicalParam::Mass, PhysicalParam::Spring, PhysicalParam::Damping]
        .map(LatentParam::with_default_range)
        .to_vec();
    let plant = PlantSpec::mass_spring_damper(latent)?;
    let provider = LqrPolicyProvider::new(plant.clone())?;
    let theta_r = real_parameter(seed, plant.dim());
    let world = RealWorldSpec::new(plant, theta_r.clone(), 0.1)?;
    println!("hidden θ_r = {:.3?}", theta_r.as_slice());

    for variant in Variant::ALL {
        let cfg = SearchConfig {
            variant,
            seed,
            n_samples: 50,
            ..SearchConfig::default()
        };
        let trace = policy_search(&cfg, &provider, &world)?;
        let (mean, se) = jumpstart_eval(
            &world,
            &trace.final_policy.bind(&provider),
            100,
            100,
            jumpstart_seed(seed),
        )?;
        let curve: Vec<String> = trace
            .records
            .iter()
            .step_by(4)
            .map(|r| format!("{:.2}", r.best_y))
            .collect();
        println!(
            "{variant:<10} best θ {:.3?}  best y {:.3}",
            trace.best_theta().as_slice(),
            trace.best_y()
        );
        println!("           best-so-far every 4 evaluations: {}", curve.join(" "));
        if let Some(set) = &trace.optimal_set {
            println!(
                "           Θ* mean {:.3?} over {} samples",
                set.mean().as_slice(),
                set.len()
            );
        }
        println!("           jumpstart {mean:.3} ± {se:.3}");
    }
    Ok(())
}
