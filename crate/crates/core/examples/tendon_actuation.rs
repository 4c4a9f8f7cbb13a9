//! Tendon routings, the wrenches they produce and the static shapes they hold.

use cosserat_observer::actuation::{tendon_unit_wrench, TendonRouting};
use cosserat_observer::harness::config::InitialConfig;
use cosserat_observer::harness::run::initial_truth_state;
use cosserat_observer::harness::ExperimentConfig;
use cosserat_observer::metrics::tip_outputs;
use cosserat_observer::rod::straight_reference_strain;

fn main() -> cosserat_observer::Result<()> {
    let xi0 = straight_reference_strain();
    for (name, routing) in [
        ("parallel", TendonRouting::paper_parallel()),
        ("helical", TendonRouting::paper_helical()),
    ] {
        println!("{name} tendon, wrench per newton of tension:");
        for s in [0.0, 0.125, 0.25, 0.375, 0.5] {
            let w = tendon_unit_wrench(&routing, s, &xi0)?;
            println!("  s = {s:.3}  D = {:?}  [m; n] = {:.4?}", routing.offset(s).as_slice(), w.as_slice());
        }
    }

    // Holding shapes of the three initial configurations, found by dynamic
    // relaxation on the soft preset.
    for id in 1..=3u8 {
        let mut c = ExperimentConfig::soft();
        c.initial_configuration = InitialConfig::Configuration(id);
        let model = c.model()?;
        let dt = c.integrator_config(&model)?.dt;
        let state = initial_truth_state(&c, &model, dt)?;
        let (p, euler) = tip_outputs(&state);
        println!(
            "configuration {id}: tensions {:?} N, tip position {:.4?} m, tip ZYX angles {:.3?} rad",
            InitialConfig::holding_tensions(id)?,
            p.as_slice(),
            euler.as_slice()
        );
    }
    Ok(())
}
