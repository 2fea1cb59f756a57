//! Minimal SVG rendering of scenes, trajectories, and velocity profiles.
//! Output is plain SVG 1.1 text; no drawing dependencies.

use crate::scene::SceneSpec;
use crate::traj::Trajectory;
use crate::Result;
use std::fmt::Write as _;
use std::path::Path;

/// Pixels per meter in scene plots.
const SCALE: f64 = 100.0;

/// Distinct stroke colors cycled across trajectories.
pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// A labeled trajectory to overlay on a scene plot.
pub struct PlotSeries<'a> {
    pub traj: &'a Trajectory,
    pub label: String,
    pub color: &'a str,
}

fn svg_y(y: f64, y0: f64, height: f64) -> f64 {
    // SVG's y axis points down; flip into world coordinates.
    height - (y - y0) * SCALE
}

fn polyline(out: &mut String, points: &[(f64, f64)], x0: f64, y0: f64, h: f64, color: &str) {
    let pts: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", (x - x0) * SCALE, svg_y(y, y0, h)))
        .collect();
    writeln!(
        out,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
        pts.join(" ")
    )
    .expect("string write");
}

/// Render the occupancy grid, dynamic obstacle tracks, and trajectory
/// overlays as an SVG document.
pub fn scene_svg(scene: &SceneSpec, series: &[PlotSeries]) -> String {
    let (x0, y0, x1, y1) = scene.bounds();
    let (w, h) = ((x1 - x0) * SCALE, (y1 - y0) * SCALE);
    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">"
    )
    .expect("string write");
    writeln!(out, "<rect width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\"/>").expect("string write");

    // Occupied cells.
    let res = scene.grid.resolution;
    let cell = res * SCALE;
    for iy in 0..scene.grid.height {
        for ix in 0..scene.grid.width {
            if scene.grid.is_occupied_cell(ix as i64, iy as i64) {
                let (cx, cy) = scene.grid.cell_center(ix, iy);
                writeln!(
                    out,
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"#444\"/>",
                    (cx - res / 2.0 - x0) * SCALE,
                    svg_y(cy + res / 2.0, y0, h)
                )
                .expect("string write");
            }
        }
    }

    // Dynamic obstacle tracks, dashed, with a circle at the initial position.
    for obs in &scene.dynamic {
        let track = obs.sample_track(64, 0.2);
        let pts: Vec<String> = track
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", (x - x0) * SCALE, svg_y(y, y0, h)))
            .collect();
        writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#888\" stroke-width=\"2\" stroke-dasharray=\"6 4\"/>",
            pts.join(" ")
        )
        .expect("string write");
        writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"8\" fill=\"none\" stroke=\"#888\" stroke-width=\"2\"/>",
            (obs.x - x0) * SCALE,
            svg_y(obs.y, y0, h)
        )
        .expect("string write");
    }

    for (i, s) in series.iter().enumerate() {
        polyline(&mut out, &s.traj.positions(), x0, y0, h, s.color);
        let start = s.traj.start();
        writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\"/>",
            (start.x - x0) * SCALE,
            svg_y(start.y, y0, h),
            s.color
        )
        .expect("string write");
        writeln!(
            out,
            "<text x=\"10\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" fill=\"{}\">{}</text>",
            20 + 18 * i,
            s.color,
            xml_escape(&s.label)
        )
        .expect("string write");
    }
    out.push_str("</svg>\n");
    out
}

/// Render the finite-difference speed profiles of several trajectories.
pub fn velocity_svg(series: &[PlotSeries]) -> String {
    let (w, h, pad) = (640.0, 320.0, 30.0);
    let mut profiles: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut v_max: f64 = 0.1;
    let mut t_max: f64 = 0.1;
    for s in series {
        let dt = s.traj.dt;
        let profile: Vec<(f64, f64)> = s
            .traj
            .poses
            .windows(2)
            .enumerate()
            .map(|(i, win)| (i as f64 * dt, win[0].distance_to(&win[1]) / dt))
            .collect();
        for &(t, v) in &profile {
            v_max = v_max.max(v);
            t_max = t_max.max(t);
        }
        profiles.push(profile);
    }
    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">"
    )
    .expect("string write");
    writeln!(out, "<rect width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\"/>").expect("string write");
    // Axes.
    writeln!(
        out,
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>",
        h - pad,
        w - pad,
        h - pad
    )
    .expect("string write");
    writeln!(
        out,
        "<line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"#333\"/>",
        h - pad
    )
    .expect("string write");
    for (s, profile) in series.iter().zip(&profiles) {
        let pts: Vec<String> = profile
            .iter()
            .map(|&(t, v)| {
                format!(
                    "{:.2},{:.2}",
                    pad + t / t_max * (w - 2.0 * pad),
                    h - pad - v / v_max * (h - 2.0 * pad)
                )
            })
            .collect();
        writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
            pts.join(" "),
            s.color
        )
        .expect("string write");
    }
    for (i, s) in series.iter().enumerate() {
        writeln!(
            out,
            "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" fill=\"{}\">{}</text>",
            pad + 120.0 * i as f64,
            s.color,
            xml_escape(&s.label)
        )
        .expect("string write");
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_svg(svg: &str, path: &Path) -> Result<()> {
    std::fs::write(path, svg)?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;
    use crate::scenes;

    fn straight(n: usize) -> Trajectory {
        let poses = (0..n)
            .map(|i| Pose::from_xy_yaw(0.5 + i as f64 * 0.04, 1.0, 0.0).unwrap())
            .collect();
        Trajectory::new(poses, 0.1).unwrap()
    }

    #[test]
    fn scene_svg_is_well_formed_and_scaled() {
        let scene = scenes::toy_dynamic();
        let traj = straight(20);
        let svg = scene_svg(
            &scene,
            &[PlotSeries {
                traj: &traj,
                label: "plan".into(),
                color: PALETTE[0],
            }],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        // 6 m scene at 100 px/m.
        assert!(svg.contains("width=\"600\" height=\"600\""));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains(">plan</text>"));
        // Dynamic obstacle marker present.
        assert!(svg.contains("<circle"));
    }

    #[test]
    fn world_to_svg_flips_the_y_axis() {
        // A point near the top of the scene lands near svg y = 0.
        assert!((svg_y(5.9, 0.0, 600.0) - 10.0).abs() < 1e-9);
        assert!((svg_y(0.0, 0.0, 600.0) - 600.0).abs() < 1e-9);
    }

    #[test]
    fn velocity_svg_contains_one_polyline_per_series() {
        let a = straight(20);
        let b = straight(30);
        let svg = velocity_svg(&[
            PlotSeries {
                traj: &a,
                label: "a".into(),
                color: PALETTE[0],
            },
            PlotSeries {
                traj: &b,
                label: "b".into(),
                color: PALETTE[1],
            },
        ]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("</svg>"));
    }

    #[test]
    fn labels_are_xml_escaped() {
        let traj = straight(5);
        let svg = velocity_svg(&[PlotSeries {
            traj: &traj,
            label: "a<b&c".into(),
            color: PALETTE[0],
        }]);
        assert!(svg.contains("a&lt;b&amp;c"));
    }

    #[test]
    fn write_svg_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.svg");
        let traj = straight(5);
        let svg = velocity_svg(&[PlotSeries {
            traj: &traj,
            label: "v".into(),
            color: PALETTE[0],
        }]);
        write_svg(&svg, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), svg);
    }
}
