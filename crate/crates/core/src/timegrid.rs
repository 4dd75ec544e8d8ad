//! Sampling grids, tick ingestion and previous-tick resampling.
//!
//! Time is measured in trading days on a session-concatenated clock: the
//! close of one session coincides with the open of the next, so overnight
//! gaps and non-trading days do not exist on the grid.

use std::io::{Read, Write};

use chrono::{DateTime, Datelike, NaiveDateTime};
pub use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Seconds of trading per day (6.5 hours).
pub const SESSION_SECONDS: f64 = 23_400.0;
/// Trading days per year.
pub const DAYS_PER_YEAR: f64 = 252.0;

const GRID_REL_TOL: f64 = 1e-12;
const SECONDS_PER_CALENDAR_DAY: f64 = 86_400.0;

/// A fixed daily trading session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Session {
    pub seconds_per_day: f64,
    /// Session open as seconds after midnight.
    pub open_seconds: f64,
    pub days_per_year: f64,
}

impl Default for Session {
    fn default() -> Self {
        Self {
            seconds_per_day: SESSION_SECONDS,
            open_seconds: 9.5 * 3600.0,
            days_per_year: DAYS_PER_YEAR,
        }
    }
}

impl Session {
    pub fn with_seconds_per_day(seconds_per_day: f64) -> Self {
        Self {
            seconds_per_day,
            ..Self::default()
        }
    }

    /// Converts a duration in session seconds to days.
    pub fn seconds_to_days(&self, seconds: f64) -> f64 {
        seconds / self.seconds_per_day
    }

    fn close_seconds(&self) -> f64 {
        self.open_seconds + self.seconds_per_day
    }
}

/// A regular grid `t_i = i * delta`, `i = 0..=n`, covering `[0, horizon]` days.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingGrid {
    horizon: f64,
    n: usize,
    delta: f64,
    session: Session,
}

impl SamplingGrid {
    pub fn new(horizon: f64, n: usize, session: Session) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Argument(format!("horizon must be positive, got {horizon}")));
        }
        if n < 2 {
            return Err(Error::Argument(format!("grid needs n >= 2 increments, got {n}")));
        }
        Ok(Self {
            horizon,
            n,
            delta: horizon / n as f64,
            session,
        })
    }

    /// Grid over `days` trading days sampled every `interval_seconds` of session time.
    pub fn from_interval(days: f64, interval_seconds: f64, session: Session) -> Result<Self> {
        if !(interval_seconds > 0.0) {
            return Err(Error::Argument("sampling interval must be positive".into()));
        }
        let n_real = days * session.seconds_per_day / interval_seconds;
        let n = n_real.round();
        if (n_real - n).abs() > 1e-9 * n_real.max(1.0) {
            return Err(Error::Argument(format!(
                "{interval_seconds} s does not divide {days} days of {} s sessions",
                session.seconds_per_day
            )));
        }
        Self::new(days, n as usize, session)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn session(&self) -> Session {
        self.session
    }

    /// Sampling interval in session seconds.
    pub fn interval_seconds(&self) -> f64 {
        self.delta * self.session.seconds_per_day
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.delta
    }

    /// Same `n` and `delta`/`horizon` equal within `1e-12` relative.
    pub fn matches(&self, other: &SamplingGrid) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= GRID_REL_TOL * a.abs().max(b.abs());
        self.n == other.n && close(self.delta, other.delta) && close(self.horizon, other.horizon)
    }
}

/// Positive prices at strictly increasing timestamps (seconds since epoch).
#[derive(Debug, Clone, PartialEq)]
pub struct TickSeries {
    timestamps: Vec<f64>,
    prices: Vec<f64>,
}

impl TickSeries {
    pub fn new(timestamps: Vec<f64>, prices: Vec<f64>) -> Result<Self> {
        if timestamps.len() != prices.len() {
            return Err(Error::Data("timestamps and prices differ in length".into()));
        }
        if timestamps.is_empty() {
            return Err(Error::EmptyInput("tick series has no observations".into()));
        }
        if let Some(w) = timestamps.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Data(format!(
                "timestamps not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Data(format!("non-positive price {p}")));
        }
        Ok(Self { timestamps, prices })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Log-price values on a sampling grid, one per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: SamplingGrid,
    values: Vec<f64>,
}

impl SampledPath {
    pub fn new(grid: SamplingGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() + 1 {
            return Err(Error::Data(format!(
                "path has {} values, grid expects {}",
                values.len(),
                grid.n() + 1
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite path value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Increments `ΔU_1..ΔU_n`; entry `j - 1` holds `ΔU_j`.
    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Multiplies every value by `scale` and adds `shift`.
    pub fn affine(&self, scale: f64, shift: f64) -> SampledPath {
        SampledPath {
            grid: self.grid,
            values: self.values.iter().map(|v| scale * v + shift).collect(),
        }
    }
}

/// Two log-price paths on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSeries {
    x: SampledPath,
    y: SampledPath,
}

impl PairSeries {
    pub fn x(&self) -> &SampledPath {
        &self.x
    }

    pub fn y(&self) -> &SampledPath {
        &self.y
    }

    pub fn grid(&self) -> &SamplingGrid {
        self.x.grid()
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    pub fn swapped(&self) -> PairSeries {
        PairSeries {
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }
}

pub fn pair_align(x: SampledPath, y: SampledPath) -> Result<PairSeries> {
    if !x.grid().matches(y.grid()) {
        return Err(Error::Alignment(format!(
            "x grid (n={}, T={}) differs from y grid (n={}, T={})",
            x.n(),
            x.grid().horizon(),
            y.n(),
            y.grid().horizon()
        )));
    }
    let grid = *x.grid();
    // share one grid value so downstream code never sees two.
    let y = SampledPath {
        grid,
        values: y.values,
    };
    Ok(PairSeries { x, y })
}

/// Keeps every `m`-th value; `m` must divide `n`.
pub fn subsample(path: &SampledPath, m: usize) -> Result<SampledPath> {
    let n = path.n();
    if m == 0 || n % m != 0 {
        return Err(Error::Argument(format!("subsampling factor {m} does not divide n = {n}")));
    }
    let grid = SamplingGrid::new(path.grid.horizon(), n / m, path.grid.session())?;
    let values = path.values.iter().step_by(m).copied().collect();
    SampledPath::new(grid, values)
}

/// Like [`subsample`] but drops trailing observations so that `m` divides
/// the retained count. The horizon shrinks accordingly.
pub fn subsample_truncating(path: &SampledPath, m: usize) -> Result<SampledPath> {
    if m == 0 {
        return Err(Error::Argument("subsampling factor must be positive".into()));
    }
    let keep = (path.n() / m) * m;
    if keep / m < 2 {
        return Err(Error::Argument(format!(
            "factor {m} leaves fewer than two increments out of {}",
            path.n()
        )));
    }
    let grid = SamplingGrid::new(path.grid.delta() * keep as f64, keep, path.grid.session())?;
    let head = SampledPath::new(grid, path.values[..=keep].to_vec())?;
    subsample(&head, m)
}

/// Parses a timestamp given either as epoch seconds or as ISO-8601.
fn parse_timestamp(field: &str) -> Option<f64> {
    let field = field.trim();
    if let Ok(v) = field.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
        // wall-clock time of the exchange, offset ignored
        let naive = dt.naive_local();
        return Some(naive_to_epoch(&naive));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(field, fmt) {
            return Some(naive_to_epoch(&naive));
        }
    }
    None
}

fn naive_to_epoch(naive: &NaiveDateTime) -> f64 {
    let utc = naive.and_utc();
    utc.timestamp() as f64 + f64::from(utc.timestamp_subsec_nanos()) * 1e-9
}

fn second_of_day(epoch: f64) -> f64 {
    epoch.rem_euclid(SECONDS_PER_CALENDAR_DAY)
}

fn day_number(epoch: f64) -> i64 {
    (epoch / SECONDS_PER_CALENDAR_DAY).floor() as i64
}

/// Reads a `timestamp,price` CSV, keeps ticks inside the session, sorts them
/// and collapses duplicate timestamps to the last price seen in file order.
pub fn ingest_csv<R: Read>(source: R, session: &Session) -> Result<TickSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.len() < 2
        || !headers[0].eq_ignore_ascii_case("timestamp")
        || !headers[1].eq_ignore_ascii_case("price")
    {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `timestamp,price`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() < 2 {
            return Err(Error::Parse {
                line,
                message: "expected two fields".into(),
            });
        }
        let ts = parse_timestamp(&record[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("unrecognised timestamp `{}`", &record[0]),
        })?;
        let price: f64 = record[1].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("unrecognised price `{}`", &record[1]),
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::Data(format!("line {line}: non-positive price {price}")));
        }
        let sod = second_of_day(ts);
        if sod >= session.open_seconds && sod <= session.close_seconds() {
            rows.push((ts, price));
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("no ticks inside the trading session".into()));
    }

    // stable: equal timestamps keep file order, so the last one wins below
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut timestamps: Vec<f64> = Vec::with_capacity(rows.len());
    let mut prices: Vec<f64> = Vec::with_capacity(rows.len());
    for (ts, p) in rows {
        if timestamps.last() == Some(&ts) {
            *prices.last_mut().expect("non-empty") = p;
        } else {
            timestamps.push(ts);
            prices.push(p);
        }
    }
    TickSeries::new(timestamps, prices)
}

/// Trading calendar mapping wall-clock ticks onto the session-concatenated clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionClock {
    session: Session,
    /// Sorted distinct calendar day numbers (days since epoch).
    days: Vec<i64>,
}

impl SessionClock {
    /// Calendar made of every day on which at least one of `series` traded,
    /// optionally restricted to `[start, end]`.
    pub fn from_ticks(
        series: &[&TickSeries],
        session: Session,
        start: Option<NaiveDate>,
        end: Option<NaiveDate>,
    ) -> Result<Self> {
        let to_num = |d: NaiveDate| {
            d.and_hms_opt(0, 0, 0)
                .map(|dt| day_number(naive_to_epoch(&dt)))
                .unwrap_or(i64::MIN)
        };
        let lo = start.map(to_num).unwrap_or(i64::MIN);
        let hi = end.map(to_num).unwrap_or(i64::MAX);
        let mut days: Vec<i64> = series
            .iter()
            .flat_map(|s| s.timestamps().iter().map(|&t| day_number(t)))
            .filter(|d| *d >= lo && *d <= hi)
            .collect();
        days.sort_unstable();
        days.dedup();
        if days.is_empty() {
            return Err(Error::EmptyInput("no trading days in the requested range".into()));
        }
        Ok(Self { session, days })
    }

    pub fn trading_days(&self) -> usize {
        self.days.len()
    }

    pub fn session(&self) -> Session {
        self.session
    }

    /// Session time in days, or `None` when the tick falls outside the calendar.
    pub fn session_time(&self, epoch: f64) -> Option<f64> {
        let ordinal = self.days.binary_search(&day_number(epoch)).ok()?;
        let intraday = (second_of_day(epoch) - self.session.open_seconds) / self.session.seconds_per_day;
        Some(ordinal as f64 + intraday)
    }

    /// Grid over all calendar days sampled every `interval_seconds`.
    pub fn grid(&self, interval_seconds: f64) -> Result<SamplingGrid> {
        SamplingGrid::from_interval(self.days.len() as f64, interval_seconds, self.session)
    }

    /// Epoch seconds of session time `t` (days); inverse of [`session_time`](Self::session_time)
    /// for times strictly inside a session.
    pub fn epoch_of(&self, t: f64) -> f64 {
        let ordinal = (t.floor() as usize).min(self.days.len() - 1);
        let intraday = t - ordinal as f64;
        self.days[ordinal] as f64 * SECONDS_PER_CALENDAR_DAY
            + self.session.open_seconds
            + intraday * self.session.seconds_per_day
    }
}

/// Value at `t_i` is the log of the last tick price with session time `<= t_i`.
pub fn resample_previous_tick(
    ticks: &TickSeries,
    grid: &SamplingGrid,
    clock: &SessionClock,
) -> Result<SampledPath> {
    let times: Vec<(f64, f64)> = ticks
        .timestamps()
        .iter()
        .zip(ticks.prices())
        .filter_map(|(&ts, &p)| clock.session_time(ts).map(|t| (t, p)))
        .collect();
    let first = times
        .first()
        .ok_or_else(|| Error::Coverage("no ticks fall on the trading calendar".into()))?;
    // tolerance of a microsecond of session time
    let eps = 1e-6 / grid.session().seconds_per_day;
    if first.0 > eps {
        return Err(Error::Coverage(format!(
            "first tick at session time {} days is after the grid start",
            first.0
        )));
    }

    let mut values = Vec::with_capacity(grid.n() + 1);
    let mut cursor = 0usize;
    for i in 0..=grid.n() {
        let t = grid.time(i) + eps;
        while cursor + 1 < times.len() && times[cursor + 1].0 <= t {
            cursor += 1;
        }
        values.push(times[cursor].1.ln());
    }
    SampledPath::new(*grid, values)
}

/// Writes `t,value` rows using shortest round-trip float formatting.
pub fn write_path_csv<W: Write>(path: &SampledPath, mut out: W) -> Result<()> {
    writeln!(out, "t,value")?;
    for (i, v) in path.values().iter().enumerate() {
        writeln!(out, "{:?},{:?}", path.grid().time(i), v)?;
    }
    Ok(())
}

/// Reads a `t,value` CSV produced by [`write_path_csv`]. Times must be regular.
pub fn read_path_csv<R: Read>(source: R, session: Session) -> Result<SampledPath> {
    let columns = read_numeric_columns(source, 2)?;
    path_from_columns(&columns[0], columns[1].clone(), session)
}

/// Builds a path from a time column and a value column.
pub fn path_from_columns(times: &[f64], values: Vec<f64>, session: Session) -> Result<SampledPath> {
    if times.len() < 3 {
        return Err(Error::EmptyInput("path needs at least three rows".into()));
    }
    let n = times.len() - 1;
    let horizon = times[n] - times[0];
    let grid = SamplingGrid::new(horizon, n, session)?;
    for (i, t) in times.iter().enumerate() {
        let expected = times[0] + grid.time(i);
        if (t - expected).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::Data(format!("row {} time {t} is off the regular grid", i + 2)));
        }
    }
    SampledPath::new(grid, values)
}

/// Parses a `YYYY-MM-DD` calendar date.
pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| Error::Config(format!("expected a YYYY-MM-DD date, got {s:?}")))
}

/// `count` consecutive weekdays starting at the first weekday on or after `start`.
pub fn weekday_calendar(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| d.weekday().number_from_monday() <= 5)
        .take(count)
        .collect()
}

/// Writes a session-time path as `timestamp,price` ticks (price `exp(value)`)
/// on the given trading days, one tick per grid point.
pub fn write_tick_csv<W: Write>(path: &SampledPath, days: &[NaiveDate], mut out: W) -> Result<()> {
    let session = path.grid().session();
    let needed = path.grid().horizon().ceil() as usize;
    if days.len() < needed {
        return Err(Error::Argument(format!("{needed} trading days needed, {} given", days.len())));
    }
    writeln!(out, "timestamp,price")?;
    for (i, v) in path.values().iter().enumerate() {
        let t = path.grid().time(i);
        let ordinal = (t.floor() as usize).min(needed - 1);
        let seconds = session.open_seconds + (t - ordinal as f64) * session.seconds_per_day;
        let millis = (seconds * 1_000.0).round() as i64;
        let stamp = days[ordinal].and_hms_opt(0, 0, 0).expect("midnight") + chrono::Duration::milliseconds(millis);
        writeln!(out, "{},{:?}", stamp.format("%Y-%m-%dT%H:%M:%S%.3f"), v.exp())?;
    }
    Ok(())
}

/// Reads the first `min_cols` numeric columns (header skipped); returns them column-major.
pub fn read_numeric_columns<R: Read>(source: R, min_cols: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let width = reader.headers()?.len();
    if width < min_cols {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected at least {min_cols} columns, found {width}"),
        });
    }
    let mut cols = vec![Vec::new(); width];
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        for (c, field) in record.iter().enumerate().take(width) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric field `{field}`"),
            })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}
