use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const MASS_CONDITIONS_G: [u32; 3] = [100, 200, 300];
pub const TLX_SUBSCALES: [&str; 6] = ["mental", "physical", "temporal", "performance", "effort", "frustration"];
pub const REFERENCE_AGGREGATES_CSV: &str = include_str!("../../data/reference_study_aggregates.csv");

const TRIAL_HEADER: [&str; 4] = ["participant", "mass_g", "trial", "completion_s"];
const TLX_HEADER: [&str; 8] =
    ["participant", "mass_g", "mental", "physical", "temporal", "performance", "effort", "frustration"];
const AGGREGATE_HEADER: [&str; 6] = ["version", "source", "metric", "mass_g", "mean", "sd"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub participant: String,
    pub mass_g: u32,
    pub trial: u8,
    pub completion_s: f64,
}

/// Scores in the order mental, physical, temporal, performance, effort, frustration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlxRecord {
    pub participant: String,
    pub mass_g: u32,
    pub scores: [u8; 6],
}

/// One row of a published aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAggregate {
    pub version: u32,
    pub source: String,
    pub metric: String,
    pub mass_g: u32,
    pub mean: f64,
    pub sd: Option<f64>,
}

/// Per-condition statistic. `n` is absent for pass-through aggregates, `sd`
/// when fewer than two values exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: String,
    pub mass_g: u32,
    pub n: Option<usize>,
    pub mean: f64,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudyData {
    Trials(Vec<TrialRecord>),
    Tlx(Vec<TlxRecord>),
    Aggregates(Vec<ReferenceAggregate>),
}

fn invalid(line: usize, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::InvalidRecord(format!("line {line}: {msg}"))
}

fn check_mass(line: usize, mass_g: u32) -> Result<(), HarnessError> {
    if MASS_CONDITIONS_G.contains(&mass_g) {
        Ok(())
    } else {
        Err(invalid(line, format!("mass_g {mass_g} is not one of 100, 200, 300")))
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: usize) -> Result<T, HarnessError> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| invalid(line, format!("column {name}: cannot parse {:?}", rec.get(i).unwrap_or(""))))
}

/// Reads trials, TLX ratings or published aggregates, chosen by the header.
pub fn read_study_csv<R: Read>(r: R) -> Result<StudyData, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let records: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>()?;
    let rows = records.iter().enumerate().map(|(i, r)| (i + 2, r));
    if header == TRIAL_HEADER {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (line, rec) in rows {
            let t = TrialRecord {
                participant: field(rec, 0, "participant", line)?,
                mass_g: field(rec, 1, "mass_g", line)?,
                trial: field(rec, 2, "trial", line)?,
                completion_s: field(rec, 3, "completion_s", line)?,
            };
            check_mass(line, t.mass_g)?;
            if !(1..=3).contains(&t.trial) {
                return Err(invalid(line, format!("trial {} outside 1..3", t.trial)));
            }
            if !(t.completion_s > 0.0 && t.completion_s.is_finite()) {
                return Err(invalid(line, "completion_s must be > 0"));
            }
            if !seen.insert((t.participant.clone(), t.mass_g, t.trial)) {
                return Err(invalid(line, "duplicate (participant, mass_g, trial)"));
            }
            out.push(t);
        }
        Ok(StudyData::Trials(out))
    } else if header == TLX_HEADER {
        let mut out = Vec::new();
        for (line, rec) in rows {
            let mut scores = [0u8; 6];
            for (k, s) in scores.iter_mut().enumerate() {
                *s = field(rec, k + 2, TLX_SUBSCALES[k], line)?;
                if !(1..=20).contains(s) {
                    return Err(invalid(line, format!("{} score {} outside 1..20", TLX_SUBSCALES[k], s)));
                }
            }
            let t = TlxRecord {
                participant: field(rec, 0, "participant", line)?,
                mass_g: field(rec, 1, "mass_g", line)?,
                scores,
            };
            check_mass(line, t.mass_g)?;
            out.push(t);
        }
        Ok(StudyData::Tlx(out))
    } else if header == AGGREGATE_HEADER {
        let mut out = Vec::new();
        for (line, rec) in rows {
            let sd = match rec.get(5).unwrap_or("") {
                "" => None,
                _ => Some(field(rec, 5, "sd", line)?),
            };
            let a = ReferenceAggregate {
                version: field(rec, 0, "version", line)?,
                source: field(rec, 1, "source", line)?,
                metric: field(rec, 2, "metric", line)?,
                mass_g: field(rec, 3, "mass_g", line)?,
                mean: field(rec, 4, "mean", line)?,
                sd,
            };
            check_mass(line, a.mass_g)?;
            out.push(a);
        }
        Ok(StudyData::Aggregates(out))
    } else {
        Err(HarnessError::InvalidRecord(format!(
            "unrecognized header {:?}; expected trials ({}), TLX ({}) or aggregates ({})",
            header.join(","),
            TRIAL_HEADER.join(","),
            TLX_HEADER.join(","),
            AGGREGATE_HEADER.join(",")
        )))
    }
}

pub fn reference_aggregates() -> Vec<ReferenceAggregate> {
    match read_study_csv(REFERENCE_AGGREGATES_CSV.as_bytes()).expect("bundled table parses") {
        StudyData::Aggregates(a) => a,
        _ => unreachable!("bundled table has the aggregate header"),
    }
}

/// Completion time of trial 3 minus trial 1 for one participant and mass.
pub fn fatigue_index(trials: &[TrialRecord]) -> Result<f64, HarnessError> {
    let first = trials.first().ok_or(HarnessError::EmptyInput)?;
    let time = |k: u8| {
        trials.iter().find(|t| t.trial == k).map(|t| t.completion_s).ok_or_else(|| HarnessError::MissingTrial {
            participant: first.participant.clone(),
            mass_g: first.mass_g,
            trial: k,
        })
    };
    time(2)?;
    Ok(time(3)? - time(1)?)
}

/// Sample mean and standard deviation (n - 1 denominator).
pub fn mean_sd(values: &[f64]) -> Option<(f64, Option<f64>)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    Some((mean, sd))
}

fn rows_from(groups: BTreeMap<(String, u32), Vec<f64>>) -> Vec<AggregateRow> {
    groups
        .into_iter()
        .map(|((metric, mass_g), v)| {
            let (mean, sd) = mean_sd(&v).expect("groups are nonempty");
            AggregateRow { metric, mass_g, n: Some(v.len()), mean, sd }
        })
        .collect()
}

/// Per-condition completion time (participant means over trials) and fatigue index.
pub fn aggregate_trials(records: &[TrialRecord]) -> Result<Vec<AggregateRow>, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let mut by_cell: BTreeMap<(u32, String), Vec<TrialRecord>> = BTreeMap::new();
    for r in records {
        by_cell.entry((r.mass_g, r.participant.clone())).or_default().push(r.clone());
    }
    let mut groups: BTreeMap<(String, u32), Vec<f64>> = BTreeMap::new();
    for ((mass_g, _), trials) in &by_cell {
        let mean = trials.iter().map(|t| t.completion_s).sum::<f64>() / trials.len() as f64;
        groups.entry(("completion_s".into(), *mass_g)).or_default().push(mean);
        groups.entry(("fatigue_index_s".into(), *mass_g)).or_default().push(fatigue_index(trials)?);
    }
    Ok(rows_from(groups))
}

pub fn aggregate_tlx(records: &[TlxRecord]) -> Result<Vec<AggregateRow>, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let mut groups: BTreeMap<(String, u32), Vec<f64>> = BTreeMap::new();
    for r in records {
        for (k, s) in r.scores.iter().enumerate() {
            groups.entry((format!("tlx_{}", TLX_SUBSCALES[k]), r.mass_g)).or_default().push(*s as f64);
        }
    }
    Ok(rows_from(groups))
}

/// Aggregates raw records, or passes published aggregates through unchanged.
pub fn study_aggregate(data: &StudyData) -> Result<Vec<AggregateRow>, HarnessError> {
    match data {
        StudyData::Trials(t) => aggregate_trials(t),
        StudyData::Tlx(t) => aggregate_tlx(t),
        StudyData::Aggregates(a) if a.is_empty() => Err(HarnessError::EmptyInput),
        StudyData::Aggregates(a) => Ok(a
            .iter()
            .map(|r| AggregateRow { metric: r.metric.clone(), mass_g: r.mass_g, n: None, mean: r.mean, sd: r.sd })
            .collect()),
    }
}

/// `metric,mass_g,n,mean,sd` with empty cells for absent values.
pub fn write_aggregate_csv<W: Write>(w: W, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["metric", "mass_g", "n", "mean", "sd"])?;
    for r in rows {
        out.write_record([
            r.metric.clone(),
            r.mass_g.to_string(),
            r.n.map(|n| n.to_string()).unwrap_or_default(),
            r.mean.to_string(),
            r.sd.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
