use std::io::{self, Write};

use swarmsynth::abstraction::Dfts;
use swarmsynth::qp::QpStatus;
use swarmsynth::sim::TrajectoryLog;
use swarmsynth::synthesis::GameStructure;

pub fn csv_header(robots: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 1..=robots {
        h.push(format!("x{i}"));
        h.push(format!("y{i}"));
    }
    for i in 1..=robots {
        h.push(format!("u{i}x"));
        h.push(format!("u{i}y"));
    }
    h.extend(["target_cell", "formation_id", "delta1", "delta2", "qp_status"].map(String::from));
    h
}

fn status_name(s: QpStatus) -> &'static str {
    match s {
        QpStatus::Optimal => "optimal",
        QpStatus::Infeasible => "infeasible",
        QpStatus::IterationLimit => "iteration-limit",
    }
}

pub fn write_csv<W: Write>(w: W, robots: usize, log: &TrajectoryLog) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(csv_header(robots))?;
    for s in &log.samples {
        let mut rec = vec![s.t.to_string()];
        rec.extend(s.positions.iter().flat_map(|p| [p.x.to_string(), p.y.to_string()]));
        rec.extend(s.inputs.iter().flat_map(|u| [u.x.to_string(), u.y.to_string()]));
        rec.push(s.target_cell.map(|c| c.to_string()).unwrap_or_default());
        rec.push(s.formation.clone());
        rec.push(s.delta1.to_string());
        rec.push(s.delta2.to_string());
        rec.push(status_name(s.status).to_string());
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

/// One line per symbolic step: step, cell, formation, env bits, action.
pub fn write_trace<W: Write>(mut w: W, dfts: &Dfts, game: &GameStructure, log: &TrajectoryLog) -> io::Result<()> {
    let vars = game.env_vars();
    writeln!(w, "# step cell formation env({}) action", vars.join(","))?;
    for e in &log.symbolic_trace {
        let s = dfts.states()[e.to];
        let bits: String = (0..vars.len()).map(|k| if e.env >> k & 1 == 1 { '1' } else { '0' }).collect();
        writeln!(
            w,
            "{} {} {} {} {}",
            e.step,
            s.cell,
            dfts.formation_ids()[s.formation],
            bits,
            dfts.action_name(e.action)
        )?;
    }
    Ok(())
}
