//! Shipped desk-scale scenes: a 6 m x 6 m walled map with a static block, a
//! dynamic-obstacle-only variant, and their composition. These back the
//! examples, the CLI defaults, and the end-to-end test suites.

use crate::geom::Pose;
use crate::scene::{DynamicObstacle, OccupancyGrid, SceneSpec};

/// Map side length (m).
pub const MAP_SIZE: f64 = 6.0;
/// Grid resolution (m/cell).
pub const RESOLUTION: f64 = 0.05;

/// Fixed goal pose shared by all toy scenes.
pub fn toy_goal() -> Pose {
    Pose::from_xy_yaw(3.0, 4.9, std::f64::consts::FRAC_PI_2).unwrap()
}

fn walled_grid() -> OccupancyGrid {
    let n = (MAP_SIZE / RESOLUTION).round() as usize;
    let mut g = OccupancyGrid::new(n, n, RESOLUTION, (0.0, 0.0)).unwrap();
    let t = 0.1;
    g.fill_rect(0.0, 0.0, MAP_SIZE, t);
    g.fill_rect(0.0, MAP_SIZE - t, MAP_SIZE, MAP_SIZE);
    g.fill_rect(0.0, 0.0, t, MAP_SIZE);
    g.fill_rect(MAP_SIZE - t, 0.0, MAP_SIZE, MAP_SIZE);
    g
}

/// Static scene: walls plus one central block. Demonstration starts lie in
/// the lower half; trajectories pass the block on either side.
pub fn toy_static() -> SceneSpec {
    let mut g = walled_grid();
    g.fill_rect(2.4, 2.4, 3.6, 3.2);
    SceneSpec::new(g, vec![], "toy-static")
}

/// The dynamic obstacle used by the dynamic and composed toy scenes: it
/// crosses the lower corridor from right to left at constant speed.
pub fn toy_obstacle() -> DynamicObstacle {
    DynamicObstacle {
        x: 5.0,
        y: 1.6,
        q_z: 1.0,
        q_w: 0.0,
        speed: 0.4,
        duration: 8.0,
    }
}

/// Dynamic scene: walls only, plus the moving obstacle.
pub fn toy_dynamic() -> SceneSpec {
    SceneSpec::new(walled_grid(), vec![toy_obstacle()], "toy-dynamic")
}

/// Composed scene: the static block and the moving obstacle together.
/// Training never sees this combination.
pub fn toy_composed() -> SceneSpec {
    let mut s = toy_static();
    s.dynamic = vec![toy_obstacle()];
    s.name = "toy-composed".into();
    s
}

/// Look up a shipped scene by name; used by the CLI for `--scene` values
/// that are not file paths.
pub fn builtin(name: &str) -> Option<SceneSpec> {
    match name {
        "toy-static" => Some(toy_static()),
        "toy-dynamic" => Some(toy_dynamic()),
        "toy-composed" => Some(toy_composed()),
        _ => None,
    }
}
