//! Loading and validating the three tabular inputs: survey aggregates,
//! surveillance counts and election labels.
//!
//! All CSV readers require the documented header, skip `#` comment lines and
//! report errors with the 1-based line number of the offending row.

mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data_model::{AgeGroup, DemographicCell, EduGroup, FearLevel, SourceCombo};
use crate::epi::DailySeries;
use crate::error::{Error, Result};

pub use synth::{
    generate_synthetic_panel, PlantedCombo, PlantedTruth, Sampling, SynthConfig, Wave,
    SyntheticData,
};

pub const SURVEY_HEADER: [&str; 7] = [
    "date",
    "state",
    "age",
    "edu",
    "combo_mask",
    "fear_level",
    "weighted_count",
];
pub const SURVEILLANCE_HEADER: [&str; 5] = ["date", "geo", "cum_cases", "cum_deaths", "population"];
pub const ELECTIONS_HEADER: [&str; 3] = ["year", "state", "party"];

/// The 50 states plus DC.
pub const US_STATES: [&str; 51] = [
    "AK", "AL", "AR", "AZ", "CA", "CO", "CT", "DC", "DE", "FL", "GA", "HI", "IA", "ID", "IL", "IN",
    "KS", "KY", "LA", "MA", "MD", "ME", "MI", "MN", "MO", "MS", "MT", "NC", "ND", "NE", "NH", "NJ",
    "NM", "NV", "NY", "OH", "OK", "OR", "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VA", "VT", "WA",
    "WI", "WV", "WY",
];

/// Two-letter geography code; `US` denotes the national aggregate.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateCode([u8; 2]);

impl StateCode {
    pub const US: StateCode = StateCode(*b"US");

    pub fn as_str(&self) -> &str {
        // constructed only from ASCII uppercase letters
        std::str::from_utf8(&self.0).expect("ascii state code")
    }

    pub fn is_national(self) -> bool {
        self == StateCode::US
    }

    pub fn us_states() -> Vec<StateCode> {
        US_STATES.iter().map(|s| s.parse().expect("valid code")).collect()
    }
}

impl FromStr for StateCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let b = s.trim().as_bytes();
        if b.len() == 2 && b.iter().all(u8::is_ascii_alphabetic) {
            Ok(StateCode([b[0].to_ascii_uppercase(), b[1].to_ascii_uppercase()]))
        } else {
            Err(Error::domain("state code", s))
        }
    }
}

impl fmt::Display for StateCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for StateCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateCode({})", self.as_str())
    }
}

impl Serialize for StateCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for StateCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurveyCell {
    pub date: NaiveDate,
    pub state: StateCode,
    pub demo: DemographicCell,
    pub combo: SourceCombo,
    pub fear: FearLevel,
    pub weighted_count: f64,
}

type CellKey = (StateCode, NaiveDate, AgeGroup, EduGroup, SourceCombo, FearLevel);

impl SurveyCell {
    fn key(&self) -> CellKey {
        (
            self.state,
            self.date,
            self.demo.age,
            self.demo.education,
            self.combo,
            self.fear,
        )
    }

    fn key_string(&self) -> String {
        format!(
            "({}, {}, age {}, edu {}, combo {}, fear {})",
            self.date,
            self.state,
            self.demo.age.code(),
            self.demo.education.code(),
            self.combo.mask(),
            self.fear.code()
        )
    }
}

/// Validated survey aggregates, sorted by (state, date, age, edu, combo, fear).
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyPanel {
    cells: Vec<SurveyCell>,
    state_ranges: BTreeMap<StateCode, Range<usize>>,
}

impl SurveyPanel {
    /// Builds a panel from unsorted cells, rejecting duplicate keys and
    /// invalid masses.
    pub fn from_cells(mut cells: Vec<SurveyCell>) -> Result<Self> {
        for c in &cells {
            if !(c.weighted_count.is_finite() && c.weighted_count >= 0.0) {
                return Err(Error::Validation(format!(
                    "weighted_count {} at {} must be finite and nonnegative",
                    c.weighted_count,
                    c.key_string()
                )));
            }
        }
        cells.sort_by_key(SurveyCell::key);
        if let Some(w) = cells.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(Error::Validation(format!("duplicate key {}", w[0].key_string())));
        }
        Ok(Self::from_sorted(cells))
    }

    fn from_sorted(cells: Vec<SurveyCell>) -> Self {
        let mut state_ranges = BTreeMap::new();
        let mut start = 0;
        for i in 1..=cells.len() {
            if i == cells.len() || cells[i].state != cells[start].state {
                if i > start {
                    state_ranges.insert(cells[start].state, start..i);
                }
                start = i;
            }
        }
        SurveyPanel {
            cells,
            state_ranges,
        }
    }

    pub fn cells(&self) -> &[SurveyCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = StateCode> + '_ {
        self.state_ranges.keys().copied()
    }

    /// States other than the national `US` aggregate.
    pub fn subnational_states(&self) -> Vec<StateCode> {
        self.states().filter(|s| !s.is_national()).collect()
    }

    pub fn cells_for_state(&self, state: StateCode) -> &[SurveyCell] {
        match self.state_ranges.get(&state) {
            Some(r) => &self.cells[r.clone()],
            None => &[],
        }
    }

    pub fn has_national_rows(&self) -> bool {
        self.state_ranges.contains_key(&StateCode::US)
    }

    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let first = self.cells.iter().map(|c| c.date).min()?;
        let last = self.cells.iter().map(|c| c.date).max()?;
        Some((first, last))
    }

    /// All calendar days from the first to the last date in the panel.
    pub fn days(&self) -> Vec<NaiveDate> {
        match self.date_range() {
            Some((first, last)) => first.iter_days().take_while(|d| *d <= last).collect(),
            None => Vec::new(),
        }
    }

    pub fn rows_per_state(&self) -> BTreeMap<StateCode, usize> {
        self.state_ranges
            .iter()
            .map(|(s, r)| (*s, r.len()))
            .collect()
    }

    /// Missing days inside each state's own date span, as (state, first missing, last missing).
    pub fn date_gaps(&self) -> Vec<(StateCode, NaiveDate, NaiveDate)> {
        let mut gaps = Vec::new();
        for (&state, range) in &self.state_ranges {
            let dates: BTreeSet<NaiveDate> = self.cells[range.clone()].iter().map(|c| c.date).collect();
            let mut prev: Option<NaiveDate> = None;
            for d in dates {
                if let Some(p) = prev {
                    let expected = p.succ_opt().expect("date overflow");
                    if d > expected {
                        gaps.push((state, expected, d.pred_opt().expect("date underflow")));
                    }
                }
                prev = Some(d);
            }
        }
        gaps
    }

    pub fn validate(&self) -> PanelValidation {
        PanelValidation {
            rows: self.len(),
            rows_per_state: self.rows_per_state(),
            date_range: self.date_range(),
            gaps: self.date_gaps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelValidation {
    pub rows: usize,
    pub rows_per_state: BTreeMap<StateCode, usize>,
    pub date_range: Option<(NaiveDate, NaiveDate)>,
    pub gaps: Vec<(StateCode, NaiveDate, NaiveDate)>,
}

fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(rdr)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, path: &Path, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        let line = header.position().map(|p| p.line()).unwrap_or(1);
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

struct RowParser<'a> {
    path: &'a Path,
    line: u64,
}

impl RowParser<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn field<T: FromStr>(&self, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
        let raw = rec
            .get(idx)
            .ok_or_else(|| self.err(format!("missing column `{name}`")))?;
        raw.parse()
            .map_err(|_| self.err(format!("invalid {name} `{raw}`")))
    }

    fn date(&self, rec: &csv::StringRecord, idx: usize) -> Result<NaiveDate> {
        let raw = rec.get(idx).unwrap_or("");
        NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| self.err(format!("invalid date `{raw}`")))
    }

    fn check<T>(&self, r: Result<T>) -> Result<T> {
        r.map_err(|e| self.err(e.to_string()))
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn load_survey_panel(path: impl AsRef<Path>) -> Result<SurveyPanel> {
    let path = path.as_ref();
    read_survey_panel(open(path)?, path)
}

/// Parses a survey CSV from any reader; `path` is used only for error messages.
pub fn read_survey_panel<R: Read>(source: R, path: &Path) -> Result<SurveyPanel> {
    let mut rdr = csv_reader(source);
    check_header(&mut rdr, path, &SURVEY_HEADER)?;
    let mut cells = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let p = RowParser {
            path,
            line: rec.position().map(|p| p.line()).unwrap_or(0),
        };
        if rec.len() != SURVEY_HEADER.len() {
            return Err(p.err(format!("expected {} fields, found {}", SURVEY_HEADER.len(), rec.len())));
        }
        let date = p.date(&rec, 0)?;
        let state: StateCode = p.check(rec[1].parse())?;
        let age = p.check(AgeGroup::new(p.field(&rec, 2, "age")?))?;
        let education = p.check(EduGroup::new(p.field(&rec, 3, "edu")?))?;
        let combo = SourceCombo::from_mask(p.field(&rec, 4, "combo_mask")?);
        let fear = p.check(FearLevel::from_code(p.field(&rec, 5, "fear_level")?))?;
        let weighted_count: f64 = p.field(&rec, 6, "weighted_count")?;
        if !(weighted_count.is_finite() && weighted_count >= 0.0) {
            return Err(p.err(format!("weighted_count `{}` must be finite and nonnegative", &rec[6])));
        }
        cells.push(SurveyCell {
            date,
            state,
            demo: DemographicCell { age, education },
            combo,
            fear,
            weighted_count,
        });
        lines.push(p.line);
    }

    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by_key(|&i| (cells[i].key(), lines[i]));
    for w in order.windows(2) {
        if cells[w[0]].key() == cells[w[1]].key() {
            return Err(Error::DuplicateKey {
                path: path.to_path_buf(),
                line: lines[w[1]],
                key: cells[w[1]].key_string(),
            });
        }
    }
    let sorted = order.into_iter().map(|i| cells[i]).collect();
    let panel = SurveyPanel::from_sorted(sorted);
    for (state, n) in panel.rows_per_state() {
        log::debug!("{}: {state} has {n} rows", path.display());
    }
    Ok(panel)
}

/// Writes a panel in the survey CSV schema, sorted by key.
pub fn write_panel<W: Write>(panel: &SurveyPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SURVEY_HEADER)?;
    for c in panel.cells() {
        w.write_record([
            c.date.to_string(),
            c.state.to_string(),
            c.demo.age.code().to_string(),
            c.demo.education.code().to_string(),
            c.combo.mask().to_string(),
            c.fear.code().to_string(),
            c.weighted_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurveillanceRecord {
    pub date: NaiveDate,
    pub geography: StateCode,
    pub cumulative_cases: u64,
    pub cumulative_deaths: u64,
    pub population: u64,
}

/// A day on which a cumulative count fell below the previous day's value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MonotonicityFlag {
    pub geography: StateCode,
    pub date: NaiveDate,
    pub field: &'static str,
    pub reported: u64,
    pub clamped_to: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Surveillance {
    /// Date-sorted records per geography, with decreases already clamped.
    pub records: BTreeMap<StateCode, Vec<SurveillanceRecord>>,
    pub flags: Vec<MonotonicityFlag>,
    pub warnings: Vec<String>,
}

impl Surveillance {
    pub fn from_records(raw: Vec<SurveillanceRecord>) -> Result<Self> {
        let mut out = Surveillance::default();
        for r in raw {
            if r.population == 0 {
                return Err(Error::Validation(format!(
                    "{} {}: population must be positive",
                    r.geography, r.date
                )));
            }
            out.records.entry(r.geography).or_default().push(r);
        }
        for (geo, recs) in out.records.iter_mut() {
            recs.sort_by_key(|r| r.date);
            if let Some(w) = recs.windows(2).find(|w| w[0].date == w[1].date) {
                return Err(Error::Validation(format!("{geo}: duplicate date {}", w[0].date)));
            }
            for i in 1..recs.len() {
                let prev = recs[i - 1];
                let cur = &mut recs[i];
                if cur.cumulative_cases < prev.cumulative_cases {
                    out.flags.push(MonotonicityFlag {
                        geography: *geo,
                        date: cur.date,
                        field: "cum_cases",
                        reported: cur.cumulative_cases,
                        clamped_to: prev.cumulative_cases,
                    });
                    cur.cumulative_cases = prev.cumulative_cases;
                }
                if cur.cumulative_deaths < prev.cumulative_deaths {
                    out.flags.push(MonotonicityFlag {
                        geography: *geo,
                        date: cur.date,
                        field: "cum_deaths",
                        reported: cur.cumulative_deaths,
                        clamped_to: prev.cumulative_deaths,
                    });
                    cur.cumulative_deaths = prev.cumulative_deaths;
                }
            }
        }
        if out.records.is_empty() {
            out.warnings.push("surveillance input has no records".to_string());
        }
        for f in &out.flags {
            log::warn!(
                "{} {}: {} decreased to {}, clamped to {}",
                f.geography,
                f.date,
                f.field,
                f.reported,
                f.clamped_to
            );
        }
        Ok(out)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn geographies(&self) -> impl Iterator<Item = StateCode> + '_ {
        self.records.keys().copied()
    }

    fn series(&self, geo: StateCode, f: impl Fn(&SurveillanceRecord) -> u64) -> Option<DailySeries> {
        let recs = self.records.get(&geo)?;
        let dates = recs.iter().map(|r| r.date).collect();
        let values = recs.iter().map(|r| f(r) as f64).collect();
        Some(DailySeries::new(geo.to_string(), dates, values).expect("sorted unique dates"))
    }

    pub fn cumulative_cases(&self, geo: StateCode) -> Option<DailySeries> {
        self.series(geo, |r| r.cumulative_cases)
    }

    pub fn cumulative_deaths(&self, geo: StateCode) -> Option<DailySeries> {
        self.series(geo, |r| r.cumulative_deaths)
    }
}

pub fn load_surveillance(path: impl AsRef<Path>) -> Result<Surveillance> {
    let path = path.as_ref();
    read_surveillance(open(path)?, path)
}

pub fn read_surveillance<R: Read>(source: R, path: &Path) -> Result<Surveillance> {
    let mut rdr = csv_reader(source);
    if rdr.headers()?.is_empty() {
        log::warn!("{}: empty surveillance file", path.display());
        return Surveillance::from_records(Vec::new());
    }
    check_header(&mut rdr, path, &SURVEILLANCE_HEADER)?;
    let mut raw = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let p = RowParser {
            path,
            line: rec.position().map(|p| p.line()).unwrap_or(0),
        };
        let date = p.date(&rec, 0)?;
        let geography = p.check(rec.get(1).unwrap_or("").parse())?;
        let mut counts = [0u64; 3];
        for (slot, (idx, name)) in counts
            .iter_mut()
            .zip([(2, "cum_cases"), (3, "cum_deaths"), (4, "population")])
        {
            let v: i64 = p.field(&rec, idx, name)?;
            if v < 0 {
                return Err(Error::Validation(format!(
                    "{}:{}: negative {name} {v}",
                    path.display(),
                    p.line
                )));
            }
            *slot = v as u64;
        }
        raw.push(SurveillanceRecord {
            date,
            geography,
            cumulative_cases: counts[0],
            cumulative_deaths: counts[1],
            population: counts[2],
        });
    }
    Surveillance::from_records(raw)
}

pub fn write_surveillance<W: Write>(data: &Surveillance, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SURVEILLANCE_HEADER)?;
    for r in data.records.values().flatten() {
        w.write_record([
            r.date.to_string(),
            r.geography.to_string(),
            r.cumulative_cases.to_string(),
            r.cumulative_deaths.to_string(),
            r.population.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    #[serde(rename = "D")]
    Democratic,
    #[serde(rename = "R")]
    Republican,
}

impl Party {
    pub fn code(self) -> &'static str {
        match self {
            Party::Democratic => "D",
            Party::Republican => "R",
        }
    }

    pub fn other(self) -> Party {
        match self {
            Party::Democratic => Party::Republican,
            Party::Republican => Party::Democratic,
        }
    }
}

impl FromStr for Party {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D" => Ok(Party::Democratic),
            "R" => Ok(Party::Republican),
            other => Err(Error::domain("party", other)),
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

pub const ELECTION_YEARS: [u16; 2] = [2020, 2024];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectionLabels {
    pub year: u16,
    pub labels: BTreeMap<StateCode, Party>,
}

impl ElectionLabels {
    /// Expected states (50 + DC) with no label in this year.
    pub fn missing_states(&self) -> Vec<StateCode> {
        StateCode::us_states()
            .into_iter()
            .filter(|s| !self.labels.contains_key(s))
            .collect()
    }
}

/// Loads an elections file, returning one label set per year present.
pub fn load_elections(path: impl AsRef<Path>) -> Result<BTreeMap<u16, ElectionLabels>> {
    let path = path.as_ref();
    read_elections(open(path)?, path)
}

pub fn read_elections<R: Read>(source: R, path: &Path) -> Result<BTreeMap<u16, ElectionLabels>> {
    let mut rdr = csv_reader(source);
    check_header(&mut rdr, path, &ELECTIONS_HEADER)?;
    let mut out: BTreeMap<u16, ElectionLabels> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let p = RowParser {
            path,
            line: rec.position().map(|p| p.line()).unwrap_or(0),
        };
        let year: u16 = p.field(&rec, 0, "year")?;
        if !ELECTION_YEARS.contains(&year) {
            return Err(p.err(format!("unsupported election year {year}")));
        }
        let state: StateCode = p.check(rec.get(1).unwrap_or("").parse())?;
        let party: Party = p.check(rec.get(2).unwrap_or("").parse())?;
        let entry = out.entry(year).or_insert_with(|| ElectionLabels {
            year,
            labels: BTreeMap::new(),
        });
        if entry.labels.insert(state, party).is_some() {
            return Err(Error::DuplicateKey {
                path: path.to_path_buf(),
                line: p.line,
                key: format!("({year}, {state})"),
            });
        }
    }
    for labels in out.values() {
        let missing = labels.missing_states();
        if !missing.is_empty() {
            log::warn!(
                "{} election labels missing {} states: {}",
                labels.year,
                missing.len(),
                missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",")
            );
        }
    }
    Ok(out)
}

pub fn write_elections<'a, W: Write>(
    labels: impl IntoIterator<Item = &'a ElectionLabels>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ELECTIONS_HEADER)?;
    for l in labels {
        for (state, party) in &l.labels {
            w.write_record([l.year.to_string(), state.to_string(), party.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Path used only in error messages when parsing in-memory data.
pub fn memory_path() -> PathBuf {
    PathBuf::from("<memory>")
}
