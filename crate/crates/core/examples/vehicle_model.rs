//! Integrates the kinematic bicycle model for one sample time and shows the
//! swept footprint of a motion primitive.
//!
//! ```bash
//! cargo run -p pdmpc --example vehicle_model
//! ```

use pdmpc::mpa::{build_mpa, MpaConfig, MpaState};
use pdmpc::vehicle::{footprint, integrate_trajectory, VehicleInput, VehicleParams, VehicleState};

fn main() -> pdmpc::Result<()> {
    let params = VehicleParams::default();
    let start = VehicleState::new(0.0, 0.0, 0.0, 0.75);
    let input = VehicleInput {
        steering_angle: 0.4,
        target_speed: 1.5,
    };
    let traj = integrate_trajectory(&start, &input, &params, 0.2, 40, 4)?;
    for (k, s) in traj.iter().enumerate() {
        println!(
            "t = {:.2} s  x {:+.4}  y {:+.4}  yaw {:+.4}  v {:.3}",
            0.05 * k as f64,
            s.x,
            s.y,
            s.yaw,
            s.speed
        );
    }
    let last = footprint(traj.last().expect("non-empty"), &params);
    println!("final footprint corners {:?}", last.vertices());

    let mpa = build_mpa(MpaConfig::default())?;
    let from = MpaState::new(2, mpa.zero_steering());
    let to = MpaState::new(3, mpa.zero_steering() + 1);
    let prim = mpa.find(from, to).expect("neighbouring levels are connected");
    println!(
        "primitive {from:?} -> {to:?}: ends at {:?}, sweep area {:.4} m^2 ({:.4} without margin)",
        prim.end,
        prim.sweep.area(),
        prim.raw_sweep.area()
    );
    Ok(())
}
