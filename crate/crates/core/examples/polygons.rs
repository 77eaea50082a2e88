//! Convex polygons, unions, separating-axis intersection and containment.
//!
//! ```bash
//! cargo run -p pdmpc --example polygons
//! ```

use std::f64::consts::FRAC_PI_4;

use pdmpc::geometry::{
    contains, inflate, intersects, union_intersects, ConvexPolygon, PolyUnion, RigidTransform, Vec2,
};

fn main() -> pdmpc::Result<()> {
    let road = PolyUnion::new(vec![
        ConvexPolygon::rectangle(Vec2::new(0.0, 0.0), 0.0, 4.0, 0.6)?,
        ConvexPolygon::rectangle(Vec2::new(0.0, 0.0), 0.0, 0.6, 4.0)?,
    ]);
    let car = ConvexPolygon::rectangle(Vec2::new(-1.0, 0.0), 0.0, 0.22, 0.107)?;
    let turned = car.transformed(&RigidTransform::new(Vec2::new(1.0, 0.5), FRAC_PI_4));
    println!("car area {:.4} m^2, turned copy at {:?}", car.area(), turned.centroid());
    println!("car inside road: {}", contains(&road, &car));
    println!("turned copy inside road: {}", contains(&road, &turned));

    let other = ConvexPolygon::rectangle(Vec2::new(-0.8, 0.05), 0.3, 0.22, 0.107)?;
    println!("car touches other: {}", intersects(&car, &other));
    let far = ConvexPolygon::rectangle(Vec2::new(-0.6, 0.0), 0.0, 0.22, 0.107)?;
    println!("car touches far: {}", intersects(&car, &far));

    // a 0.2 m safety margin closes the 0.18 m gap
    let padded = inflate(&car.clone().into(), 0.2)?;
    println!("padded car touches far: {}", union_intersects(&padded, &far.into()));

    let hull = ConvexPolygon::hull(&[
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(0.5, 0.2),
        Vec2::new(1.0, 1.0),
        Vec2::new(0.0, 1.0),
    ])?;
    println!("hull of five points keeps {} vertices", hull.vertices().len());
    Ok(())
}
