//! Plans one horizon for a vehicle that has to pass a parked obstacle.
//!
//! ```bash
//! cargo run --release -p pdmpc --example single_plan
//! ```

use pdmpc::geometry::{ConvexPolygon, Vec2};
use pdmpc::mpa::{build_mpa, MpaConfig, MpaState};
use pdmpc::planner::{plan, verify_plan, ConstraintSet, PlanOutcome, PlannerConfig, ReferenceTrajectory};
use pdmpc::vehicle::Pose;

fn main() -> pdmpc::Result<()> {
    let mpa = build_mpa(MpaConfig::default())?;
    let horizon = mpa.horizon();
    let start = (Pose::ORIGIN, MpaState::new(3, mpa.zero_steering()));
    let reference = ReferenceTrajectory {
        points: (1..=horizon).map(|k| Vec2::new(0.3 * k as f64, 0.0)).collect(),
    };

    let parked = ConvexPolygon::rectangle(Vec2::new(1.2, 0.0), 0.0, 0.22, 0.107)?;
    let mut cons = ConstraintSet::empty(horizon);
    for step in cons.sequential_obstacles.iter_mut() {
        step.push(parked.clone().into());
    }
    cons.drivable_area = Some(ConvexPolygon::rectangle(Vec2::new(1.0, 0.1), 0.0, 4.0, 0.6)?.into());

    for terminal_standstill in [false, true] {
        let config = PlannerConfig {
            terminal_standstill,
            ..PlannerConfig::default()
        };
        match plan(start, &reference, &mpa, &cons, horizon, &config)? {
            PlanOutcome::Feasible(p) => {
                println!(
                    "terminal standstill {terminal_standstill}: cost {:.4}, valid {}",
                    p.cost.unwrap_or(f64::NAN),
                    verify_plan(&p, start, &mpa, &cons)
                );
                for s in &p.steps {
                    println!(
                        "  -> ({:+.3}, {:+.3}) yaw {:+.3} speed level {} steering level {}",
                        s.end.x, s.end.y, s.end.yaw, s.state.speed, s.state.steering
                    );
                }
            }
            PlanOutcome::Infeasible { expansions, .. } => {
                println!("terminal standstill {terminal_standstill}: no plan after {expansions} expansions")
            }
        }
    }
    Ok(())
}
