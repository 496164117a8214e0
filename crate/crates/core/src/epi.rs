//! Daily series utilities and reconstruction of the active-infection curve
//! from cumulative case and death counts.
//!
//! Every confirmed case is treated as infectious for a fixed number of days
//! (14 by default) unless it died; the active count on day `t` is the sum of
//! new cases minus new deaths over the trailing window ending at `t`.

use std::io::Write;

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub const DEFAULT_RECOVERY_DAYS: u32 = 14;
/// Centered two-month smoothing window.
pub const DEFAULT_SMOOTHING_WINDOW: u32 = 61;

/// Values on strictly increasing calendar days.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    name: String,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl DailySeries {
    pub fn new(name: impl Into<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Alignment(format!(
                "{} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "dates must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(DailySeries {
            name: name.into(),
            dates,
            values,
        })
    }

    /// A gap-free series starting at `start`.
    pub fn contiguous(name: impl Into<String>, start: NaiveDate, values: Vec<f64>) -> Self {
        let dates = start.iter_days().take(values.len()).collect();
        DailySeries {
            name: name.into(),
            dates,
            values,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.dates.binary_search(&date).ok().map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.dates.iter().copied().zip(self.values.iter().copied())
    }

    fn with_values(&self, values: Vec<f64>) -> DailySeries {
        DailySeries {
            name: self.name.clone(),
            dates: self.dates.clone(),
            values,
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// First differences; the first value is kept as-is.
pub fn daily_increments(cumulative: &DailySeries) -> DailySeries {
    let v = cumulative.values();
    let out = (0..v.len())
        .map(|i| if i == 0 { v[0] } else { v[i] - v[i - 1] })
        .collect();
    cumulative.with_values(out)
}

pub fn reconstruct_active_infections(
    new_cases: &DailySeries,
    new_deaths: &DailySeries,
    recovery_days: u32,
) -> Result<DailySeries> {
    if recovery_days == 0 {
        return Err(Error::config("recovery_days", "must be at least 1"));
    }
    if new_cases.dates() != new_deaths.dates() {
        return Err(Error::Alignment(format!(
            "cases `{}` and deaths `{}` cover different days",
            new_cases.name(),
            new_deaths.name()
        )));
    }
    let dates = new_cases.dates();
    let span = i64::from(recovery_days);
    let mut out = Vec::with_capacity(dates.len());
    let mut lo = 0;
    for (t, &day) in dates.iter().enumerate() {
        while (day - dates[lo]).num_days() >= span {
            lo += 1;
        }
        let cases: f64 = new_cases.values()[lo..=t].iter().sum();
        let deaths: f64 = new_deaths.values()[lo..=t].iter().sum();
        out.push((cases - deaths).max(0.0));
    }
    Ok(new_cases.with_values(out))
}

/// Centered moving average over `window_days` calendar days. Near the ends the
/// window is clipped to the available data.
pub fn rolling_mean(series: &DailySeries, window_days: u32) -> Result<DailySeries> {
    if window_days == 0 || window_days % 2 == 0 {
        return Err(Error::config(
            "window",
            format!("smoothing window must be odd and positive, got {window_days}"),
        ));
    }
    let half = i64::from(window_days / 2);
    let dates = series.dates();
    let values = series.values();
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut out = Vec::with_capacity(values.len());
    for &day in dates {
        while (day - dates[lo]).num_days() > half {
            lo += 1;
        }
        while hi < dates.len() && (dates[hi] - day).num_days() <= half {
            hi += 1;
        }
        let window = &values[lo..hi];
        out.push(window.iter().sum::<f64>() / window.len() as f64);
    }
    Ok(series.with_values(out))
}

/// Writes `date,geo,active_infections` rows for each series in order.
pub fn write_active_infections<W: Write>(series: &[DailySeries], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "geo", "active_infections"])?;
    for s in series {
        for (d, v) in s.iter() {
            w.write_record([d.to_string(), s.name().to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
