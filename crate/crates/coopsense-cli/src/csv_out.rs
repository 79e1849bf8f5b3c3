//! Versioned CSV writers for sweep results and scenario logs. The schema
//! version travels in a leading comment line.

use coopsense::planner::Decision;
use coopsense::sim::{ScenarioLog, SweepResult, VariedParam};
use std::fmt::Write as _;

pub const SWEEP_SCHEMA: &str = "# coopsense-sweep-v1";
pub const SCENARIO_SCHEMA: &str = "# coopsense-scenario-v1";

fn decision_str(d: Decision) -> &'static str {
    match d {
        Decision::Proceed => "Proceed",
        Decision::GiveWay => "GiveWay",
        Decision::Replan => "Replan",
    }
}

/// One row per (mode, value, offset, object) record.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_SCHEMA);
    out.push('\n');
    out.push_str(
        "mode,varied,value,offset_m,object,range_sender_m,range_receiver_m,\
         mean_x,mean_y,mean_theta,cov_xx,cov_xy,cov_xt,cov_yy,cov_yt,cov_tt,\
         major_m,minor_m,orientation_rad,mass,mc_samples,mc_mean_x,mc_mean_y,\
         mc_mean_theta,mc_cov_xx,mc_cov_xy,mc_cov_xt,mc_cov_yy,mc_cov_yt,mc_cov_tt\n",
    );
    for r in &result.records {
        let varied = match r.varied {
            VariedParam::HeadingStd => "heading",
            VariedParam::PositionStd => "position",
        };
        let m = r.transformed.mean();
        let c = r.transformed.cov();
        let mc = &r.mc;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.mode.as_str(),
            varied,
            r.value,
            r.offset,
            r.object_index,
            r.range_from_sender,
            r.range_from_receiver,
            m.x,
            m.y,
            m.theta,
            c[(0, 0)],
            c[(0, 1)],
            c[(0, 2)],
            c[(1, 1)],
            c[(1, 2)],
            c[(2, 2)],
            r.ellipse.semi_major,
            r.ellipse.semi_minor,
            r.ellipse.orientation,
            r.ellipse.probability_mass,
            mc.samples,
            mc.mean.x,
            mc.mean.y,
            mc.mean.theta,
            mc.cov[(0, 0)],
            mc.cov[(0, 1)],
            mc.cov[(0, 2)],
            mc.cov[(1, 1)],
            mc.cov[(1, 2)],
            mc.cov[(2, 2)],
        )
        .unwrap();
    }
    out
}

/// Long-format scenario log: per tick one `tick` row with the decision and
/// message accounting, one `station` row per station, one `truth` row per
/// road user, and one `track` row per confirmed track.
pub fn scenario_csv(log: &ScenarioLog) -> String {
    let mut out = String::new();
    out.push_str(SCENARIO_SCHEMA);
    out.push('\n');
    out.push_str(
        "time_s,row,id,class,x,y,theta,speed,decision,msg_bytes,msgs,\
         path_feasible,path_length_m,visible,track_id\n",
    );
    for tick in &log.ticks {
        writeln!(
            out,
            "{},tick,,,,,,{},{},{},{},{},{},,",
            tick.time,
            tick.receiver_speed,
            tick.decision.map(decision_str).unwrap_or(""),
            tick.delivered_bytes,
            tick.messages_delivered,
            tick.path_feasible.map(|b| b.to_string()).unwrap_or_default(),
            tick.path_length.map(|l| l.to_string()).unwrap_or_default(),
        )
        .unwrap();
        for s in &tick.stations {
            writeln!(
                out,
                "{},station,{},,{},{},{},{},,,,,,,",
                tick.time, s.id, s.x, s.y, s.theta, s.speed
            )
            .unwrap();
        }
        for u in &tick.road_users {
            writeln!(
                out,
                "{},truth,{},{:?},{},{},{},{},,,,,,{},",
                tick.time, u.index, u.class, u.x, u.y, u.theta, u.speed, u.visible_to_receiver
            )
            .unwrap();
        }
        for t in &tick.tracks {
            writeln!(
                out,
                "{},track,,{:?},{},{},{},{},,,,,,,{}",
                tick.time, t.class, t.x, t.y, t.heading, t.speed, t.track_id
            )
            .unwrap();
        }
    }
    out
}

/// Newline-delimited JSON records, one per tick.
pub fn scenario_ndjson(log: &ScenarioLog) -> String {
    let mut out = String::new();
    for tick in &log.ticks {
        out.push_str(&serde_json::to_string(tick).expect("tick log serializes"));
        out.push('\n');
    }
    out
}
