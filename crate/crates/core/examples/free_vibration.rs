//! Free vibration of an unloaded rod with and without tip damping. The
//! semi-discrete energy is nearly constant with a free tip and decreases
//! monotonically once the tip wrench `−Γη(ℓ)` is applied.

use cosserat_observer::actuation::Actuation;
use cosserat_observer::discretize::*;
use cosserat_observer::harness::ExperimentConfig;
use cosserat_observer::se3::{Mat6, Twist6};

fn initial_state(model: &RodModel) -> cosserat_observer::Result<SimulationState> {
    let grid = model.grid();
    let l = grid.length();
    let velocity = (0..grid.nodes())
        .map(|i| {
            let x = std::f64::consts::PI * grid.s(i) / l;
            let tip = 0.01;
            Twist6::new(0.0, -0.5 * tip * std::f64::consts::PI / l * x.sin(), 0.0, 0.0, 0.0, 0.5 * tip * (1.0 - x.cos()))
        })
        .collect();
    let strain = (0..grid.nodes()).map(|i| model.reference_strain(i)).collect();
    SimulationState::new(0.0, strain, velocity, grid, &model.params().base_pose)
}

fn run(model: &RodModel, damping: Option<Mat6>) -> cosserat_observer::Result<()> {
    let icfg = IntegratorConfig::from_cfl(model, IntegratorConfig::DEFAULT_CFL, 0.2)?;
    let mut sim = Simulator::new(model.clone(), icfg)?;
    let tip = move |_t: f64| {
        Ok(TipCondition {
            extra_wrench: Twist6::zeros(),
            damping: damping.map(|gain| TipDamping {
                gain,
                reference_velocity: Twist6::zeros(),
            }),
            rotation: None,
        })
    };
    let mut state = initial_state(model)?;
    let e0 = total_energy(&state, model);
    let report = (icfg.steps() / 10).max(1);
    for k in 1..=icfg.steps() {
        sim.step(&mut state, &tip)?;
        if k % report == 0 {
            println!(
                "  t = {:.3} s  E/E0 = {:.6}  tip z = {:+.3e} m",
                state.time,
                total_energy(&state, model) / e0,
                state.tip_pose().position.z
            );
        }
    }
    Ok(())
}

fn main() -> cosserat_observer::Result<()> {
    let params = ExperimentConfig::soft().rod_parameters().with_gravity(Default::default());
    let params = params.with_tip_load_global(Twist6::zeros());
    let model = RodModel::new(params, Actuation::none(), 41)?;
    println!("free tip");
    run(&model, None)?;
    println!("tip damping 5·I");
    run(&model, Some(Mat6::identity() * 5.0))?;
    Ok(())
}
