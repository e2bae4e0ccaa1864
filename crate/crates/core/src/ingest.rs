//! Shot-chart CSV ingestion.
//!
//! Court coordinates are in tenths of a foot, centered at the rim:
//! `x` in `[-250, 250]` across the court and `y` in `[-50, 420]` from the
//! baseline side. The default study region keeps the 50 ft x 35 ft rectangle
//! `y <= 300` nearest the basket.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PointPattern, StudyRegion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub game_date: Option<String>,
    pub opponent: Option<String>,
    pub period: Option<u8>,
    pub minutes_left: Option<u32>,
    pub seconds_left: Option<u32>,
    pub made: Option<bool>,
    pub action_type: Option<String>,
    pub shot_type: Option<u8>,
    pub shot_distance: Option<f64>,
    pub x: f64,
    pub y: f64,
}

/// Header names of each field. Only `x` and `y` must be present in a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub game_date: String,
    pub opponent: String,
    pub period: String,
    pub minutes_left: String,
    pub seconds_left: String,
    pub made: String,
    pub action_type: String,
    pub shot_type: String,
    pub shot_distance: String,
    pub x: String,
    pub y: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            game_date: "game_date".into(),
            opponent: "opponent".into(),
            period: "period".into(),
            minutes_left: "minutes_left".into(),
            seconds_left: "seconds_left".into(),
            made: "made".into(),
            action_type: "action_type".into(),
            shot_type: "shot_type".into(),
            shot_distance: "shot_distance".into(),
            x: "x".into(),
            y: "y".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Abort on the first malformed row.
    Strict,
    /// Skip malformed rows and report them.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedShots {
    pub records: Vec<ShotRecord>,
    /// `(line, message)` of every skipped row, lines counted from 1 with the
    /// header on line 1.
    pub malformed: Vec<(u64, String)>,
}

struct Columns {
    x: usize,
    y: usize,
    game_date: Option<usize>,
    opponent: Option<usize>,
    period: Option<usize>,
    minutes_left: Option<usize>,
    seconds_left: Option<usize>,
    made: Option<usize>,
    action_type: Option<usize>,
    shot_type: Option<usize>,
    shot_distance: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, map: &ColumnMap) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let need = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
        Ok(Self {
            x: need(&map.x)?,
            y: need(&map.y)?,
            game_date: find(&map.game_date),
            opponent: find(&map.opponent),
            period: find(&map.period),
            minutes_left: find(&map.minutes_left),
            seconds_left: find(&map.seconds_left),
            made: find(&map.made),
            action_type: find(&map.action_type),
            shot_type: find(&map.shot_type),
            shot_distance: find(&map.shot_distance),
        })
    }
}

fn field(row: &csv::StringRecord, col: Option<usize>) -> Option<&str> {
    col.and_then(|c| row.get(c))
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

fn parse_num<T: std::str::FromStr>(
    row: &csv::StringRecord,
    col: Option<usize>,
    name: &str,
) -> std::result::Result<Option<T>, String> {
    match field(row, col) {
        None => Ok(None),
        Some(s) => s.parse().map(Some).map_err(|_| format!("bad {name} `{s}`")),
    }
}

fn parse_made(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "made" => Ok(true),
        "0" | "false" | "missed" => Ok(false),
        _ => Err(format!("bad made flag `{s}`")),
    }
}

/// Accepts `2`, `3`, or labels such as `2PT Field Goal`.
fn parse_shot_type(s: &str) -> std::result::Result<u8, String> {
    match s.chars().next() {
        Some('2') => Ok(2),
        Some('3') => Ok(3),
        _ => Err(format!("bad shot type `{s}`")),
    }
}

fn parse_row(row: &csv::StringRecord, cols: &Columns) -> std::result::Result<ShotRecord, String> {
    let coord = |c: usize, name: &str| -> std::result::Result<f64, String> {
        let s = row.get(c).map(str::trim).unwrap_or("");
        let v: f64 = s.parse().map_err(|_| format!("bad {name} `{s}`"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("bad {name} `{s}`"))
        }
    };
    let period: Option<u8> = parse_num(row, cols.period, "period")?;
    if let Some(p) = period {
        if !(1..=5).contains(&p) {
            return Err(format!("period {p} outside 1..=5"));
        }
    }
    Ok(ShotRecord {
        game_date: field(row, cols.game_date).map(String::from),
        opponent: field(row, cols.opponent).map(String::from),
        period,
        minutes_left: parse_num(row, cols.minutes_left, "minutes_left")?,
        seconds_left: parse_num(row, cols.seconds_left, "seconds_left")?,
        made: field(row, cols.made).map(parse_made).transpose()?,
        action_type: field(row, cols.action_type).map(String::from),
        shot_type: field(row, cols.shot_type)
            .map(parse_shot_type)
            .transpose()?,
        shot_distance: parse_num(row, cols.shot_distance, "shot_distance")?,
        x: coord(cols.x, "x")?,
        y: coord(cols.y, "y")?,
    })
}

/// Parses a shot CSV with a header row.
pub fn parse_shot_csv<R: Read>(input: R, map: &ColumnMap, mode: ParseMode) -> Result<ParsedShots> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let cols = Columns::resolve(&headers, map)?;
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let fallback_line = k as u64 + 2;
        let outcome = match row {
            Ok(row) => {
                let line = row.position().map_or(fallback_line, |p| p.line());
                parse_row(&row, &cols).map_err(|m| (line, m))
            }
            Err(e) => Err((fallback_line, e.to_string())),
        };
        match outcome {
            Ok(r) => records.push(r),
            Err((line, message)) => match mode {
                ParseMode::Strict => return Err(Error::MalformedRow { line, message }),
                ParseMode::Lenient => malformed.push((line, message)),
            },
        }
    }
    Ok(ParsedShots { records, malformed })
}

/// The 50 ft x 35 ft rectangle nearest the basket, in tenths of a foot.
pub fn default_court_region() -> StudyRegion {
    StudyRegion::new(-250.0, 250.0, -50.0, 300.0).expect("valid region")
}

/// Keeps the shots inside `region` (closed), returning the pattern and the
/// number of dropped shots. Coordinates are passed through unchanged.
pub fn to_study_pattern(records: &[ShotRecord], region: &StudyRegion) -> (PointPattern, usize) {
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| region.contains(r.x, r.y))
        .map(|r| (r.x, r.y))
        .collect();
    let dropped = records.len() - points.len();
    (
        PointPattern::new(*region, points).expect("filtered to region"),
        dropped,
    )
}

/// Shot count, share of two-point attempts and the share of attempts per
/// period (four quarters and overtime), percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSummary {
    pub shot_count: usize,
    pub two_point_pct: Option<f64>,
    pub period_pct: Option<[f64; 5]>,
}

pub fn summarize(records: &[ShotRecord]) -> ShotSummary {
    let typed: Vec<u8> = records.iter().filter_map(|r| r.shot_type).collect();
    let two_point_pct = (!typed.is_empty())
        .then(|| 100.0 * typed.iter().filter(|&&t| t == 2).count() as f64 / typed.len() as f64);
    let periods: Vec<u8> = records.iter().filter_map(|r| r.period).collect();
    let period_pct = (!periods.is_empty()).then(|| {
        let mut pct = [0.0; 5];
        for &p in &periods {
            pct[(p - 1) as usize] += 1.0;
        }
        pct.map(|c| 100.0 * c / periods.len() as f64)
    });
    ShotSummary {
        shot_count: records.len(),
        two_point_pct,
        period_pct,
    }
}

impl ShotSummary {
    /// One row in the style `count & 2PT% & (p1, p2, p3, p4, OT)`.
    pub fn table_row(&self, player: &str) -> String {
        let two = self.two_point_pct.map_or("-".into(), |v| format!("{v:.1}"));
        let per = self.period_pct.map_or("-".into(), |p| {
            let parts: Vec<String> = p.iter().map(|v| format!("{v:.1}")).collect();
            format!("({})", parts.join(", "))
        });
        format!("{player} & {} & {two} & {per}", self.shot_count)
    }
}
