//! CSV output. Floats are written so that reading them back gives the same
//! bits: state fractions in 17-digit scientific notation, rewards in the
//! shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::stats::SummaryStats;
use crate::scenario::{EvaluationResult, Scenario};

pub const TRAJECTORY_HEADER: &str = "day,action,s,e,i,r,icu_demand,beds,reward,dfa_state";
pub const SUMMARY_HEADER: &str = "method,avg,max,min,std,mean_time_sec,runs";

pub(crate) fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn fraction(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_csv(scenario: &Scenario, result: &EvaluationResult) -> Result<String> {
    let n = result.horizon();
    if n == 0 {
        return Err(Error::Empty("evaluation result".into()));
    }
    if result.trajectory.len() != n + 1 || result.actions.len() != n || result.pattern_states.len() != n {
        return Err(Error::ShapeMismatch("evaluation result fields disagree on the horizon".into()));
    }
    let mut out = String::with_capacity(200 * (n + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for day in 1..=n {
        let state = &result.trajectory[day];
        let dfa = if scenario.pattern_enabled {
            result.pattern_states[day - 1].label()
        } else {
            "-"
        };
        let _ = writeln!(
            out,
            "{day},{},{},{},{},{},{},{},{:?},{dfa}",
            result.actions.as_slice()[day - 1],
            fraction(state.s),
            fraction(state.e),
            fraction(state.i),
            fraction(state.r),
            fraction(scenario.icu_demand(state)),
            fraction(scenario.beds_fraction(day)?),
            result.daily_rewards[day - 1],
        );
    }
    Ok(out)
}

/// One row per day: the state after that day's action, ICU demand and bed
/// capacity (fractions of the population), the reward and automaton state
/// (`-` when the ordering constraint is off).
pub fn write_trajectory_csv(scenario: &Scenario, result: &EvaluationResult, path: &Path) -> Result<()> {
    write_file(path, &trajectory_csv(scenario, result)?)
}

/// Parsed rows of a trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub day: usize,
    pub action: u8,
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
    pub icu_demand: f64,
    pub beds: f64,
    pub reward: f64,
    pub dfa_state: String,
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let err = |line: usize, message: String| Error::Parse {
        path: source.clone(),
        line,
        message,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(TRAJECTORY_HEADER) => {}
        other => return Err(err(1, format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(err(lineno, format!("expected 10 fields, found {}", fields.len())));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .parse::<f64>()
                .map_err(|_| err(lineno, format!("field {} is not a number: `{}`", k + 1, fields[k])))
        };
        rows.push(TrajectoryRow {
            day: fields[0].parse().map_err(|_| err(lineno, "bad day".into()))?,
            action: fields[1].parse().map_err(|_| err(lineno, "bad action".into()))?,
            s: num(2)?,
            e: num(3)?,
            i: num(4)?,
            r: num(5)?,
            icu_demand: num(6)?,
            beds: num(7)?,
            reward: num(8)?,
            dfa_state: fields[9].to_string(),
        });
    }
    Ok(rows)
}

/// Sum of the reward column, accumulated in day order.
pub fn total_reward_from_csv(path: &Path) -> Result<f64> {
    Ok(read_trajectory_csv(path)?.iter().map(|r| r.reward).sum())
}

/// `mean_time_sec` is written as `---` unless `with_timing` is set, keeping
/// the file reproducible byte for byte.
pub fn summary_csv(rows: &[(String, SummaryStats)], with_timing: bool) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (method, s) in rows {
        let time = if with_timing {
            format!("{:?}", s.mean_wall_time)
        } else {
            "---".into()
        };
        let _ = writeln!(
            out,
            "{method},{:?},{:?},{:?},{:?},{time},{}",
            s.avg, s.max, s.min, s.std, s.runs
        );
    }
    out
}

/// Parsed summary row: method name plus avg, max, min, std and run count.
pub type SummaryRow = (String, f64, f64, f64, f64, usize);

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let err = |line: usize, message: &str| Error::Parse {
        path: source.clone(),
        line,
        message: message.into(),
    };
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(err(1, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(idx, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(err(idx + 2, "expected 7 fields"));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| err(idx + 2, "bad number"));
            Ok((
                f[0].to_string(),
                num(1)?,
                num(2)?,
                num(3)?,
                num(4)?,
                f[6].parse().map_err(|_| err(idx + 2, "bad run count"))?,
            ))
        })
        .collect()
}
