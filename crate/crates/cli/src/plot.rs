use std::fmt::Write as _;
use std::io::Read;

use swarmsynth::geometry::Vec2;
use swarmsynth::world::WorldConfig;

const SCALE: f64 = 80.0;
const MARGIN: f64 = 20.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Trajectory {
    pub robots: usize,
    pub positions: Vec<Vec<Vec2>>,
    /// Target cell and formation per sample.
    pub targets: Vec<(String, String)>,
}

pub fn read_trajectory<R: Read>(r: R) -> Result<Trajectory, String> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut records = rd.records();
    let Some(header) = records.next() else {
        return Ok(Trajectory {
            robots: 0,
            positions: Vec::new(),
            targets: Vec::new(),
        });
    };
    let header = header.map_err(|e| e.to_string())?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut robots = 0;
    while col(&format!("x{}", robots + 1)).is_some() {
        robots += 1;
    }
    let xy: Vec<(usize, usize)> = (1..=robots)
        .map(|i| {
            let x = col(&format!("x{i}")).ok_or(format!("missing column x{i}"))?;
            let y = col(&format!("y{i}")).ok_or(format!("missing column y{i}"))?;
            Ok((x, y))
        })
        .collect::<Result<_, String>>()?;
    let target = col("target_cell").ok_or("missing column target_cell")?;
    let formation = col("formation_id").ok_or("missing column formation_id")?;
    let mut positions = Vec::new();
    let mut targets = Vec::new();
    for (line, rec) in records.enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let num = |k: usize| -> Result<f64, String> {
            rec.get(k)
                .ok_or(format!("row {}: too few columns", line + 2))?
                .parse::<f64>()
                .map_err(|e| format!("row {}: {e}", line + 2))
        };
        let p = xy
            .iter()
            .map(|&(x, y)| Ok(Vec2::new(num(x)?, num(y)?)))
            .collect::<Result<Vec<_>, String>>()?;
        positions.push(p);
        targets.push((
            rec.get(target).unwrap_or_default().to_string(),
            rec.get(formation).unwrap_or_default().to_string(),
        ));
    }
    Ok(Trajectory {
        robots,
        positions,
        targets,
    })
}

/// Axis half-lengths and rotation (radians) of `{x : xᵀPx ≤ 1}`.
fn ellipse_axes(p: [[f64; 2]; 2]) -> (f64, f64, f64) {
    let (a, b, c) = (p[0][0], p[0][1], p[1][1]);
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    ((mid + rad).sqrt().recip(), (mid - rad).sqrt().recip(), theta)
}

pub fn render_svg(cfg: &WorldConfig, traj: &Trajectory) -> String {
    let world = &cfg.world;
    let (lo, hi) = world.bounds();
    let px = |p: Vec2| (MARGIN + (p.x - lo.x) * SCALE, MARGIN + (hi.y - p.y) * SCALE);
    let width = 2.0 * MARGIN + (hi.x - lo.x) * SCALE;
    let height = 2.0 * MARGIN + (hi.y - lo.y) * SCALE;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="#ffffff"/>"##);

    let size = world.cell_size();
    for cell in world.cells() {
        let labels = world.label_w(cell).cloned().unwrap_or_default();
        let fill = if world.is_obstacle(cell) {
            "#8c8c8c"
        } else if labels.contains("home") {
            "#a6dba0"
        } else if labels.contains("goal") {
            "#fdd49e"
        } else {
            "#f7f7f7"
        };
        let corner = world.origin() + Vec2::new(cell.x as f64 * size, (cell.y + 1) as f64 * size);
        let (x, y) = px(corner);
        let names: Vec<&str> = labels.iter().map(String::as_str).collect();
        let _ = writeln!(
            s,
            r##"<rect class="cell" data-cell="{cell}" data-labels="{}" x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{w:.2}" fill="{fill}" stroke="#bdbdbd"/>"##,
            names.join(" "),
            w = size * SCALE
        );
    }

    for obs in world.obstacles() {
        let (ra, rb, theta) = ellipse_axes(obs.p().0);
        let (cx, cy) = px(obs.eta());
        let _ = writeln!(
            s,
            r##"<ellipse class="obstacle" cx="{cx:.2}" cy="{cy:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({:.3} {cx:.2} {cy:.2})" fill="#525252" fill-opacity="0.45" stroke="#252525"/>"##,
            ra * SCALE,
            rb * SCALE,
            -theta.to_degrees()
        );
    }

    for i in 0..traj.robots {
        let pts: Vec<String> = traj
            .positions
            .iter()
            .map(|p| {
                let (x, y) = px(p[i]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="robot" data-robot="{}" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            i + 1,
            pts.join(" "),
            COLORS[i % COLORS.len()]
        );
    }

    // formation snapshots where a new symbolic target starts
    for (k, p) in traj.positions.iter().enumerate() {
        if k > 0 && traj.targets[k] == traj.targets[k - 1] {
            continue;
        }
        let corners: Vec<String> = p
            .iter()
            .map(|&q| {
                let (x, y) = px(q);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r##"<polygon class="formation" points="{}" fill="none" stroke="#636363" stroke-dasharray="3,2"/>"##,
            corners.join(" ")
        );
        for (i, &q) in p.iter().enumerate() {
            let (x, y) = px(q);
            let _ = writeln!(
                s,
                r#"<circle class="snapshot" cx="{x:.2}" cy="{y:.2}" r="3" fill="{}"/>"#,
                COLORS[i % COLORS.len()]
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipse_axes_of_rotated_matrix() {
        // the first axis is the short one, along the y direction here
        let (a, b, t) = ellipse_axes([[1.0, 0.0], [0.0, 4.0]]);
        assert!((a - 0.5).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        // 45 degree rotation of diag(1, 4)
        let (a, b, t) = ellipse_axes([[2.5, 1.5], [1.5, 2.5]]);
        assert!((a - 0.5).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        assert!((t - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn empty_input_has_no_robots() {
        let t = read_trajectory("".as_bytes()).unwrap();
        assert_eq!(t.robots, 0);
        let t = read_trajectory("t,x1,y1,x2,y2,u1x,u1y,u2x,u2y,target_cell,formation_id,delta1,delta2,qp_status\n".as_bytes()).unwrap();
        assert_eq!(t.robots, 2);
        assert!(t.positions.is_empty());
        assert!(read_trajectory("t,x1,y1,target_cell,formation_id\n0,abc,1,(0,0),h\n".as_bytes()).is_err());
    }
}
