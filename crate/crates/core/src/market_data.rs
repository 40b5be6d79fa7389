//! OHLCV ingestion, calendar alignment, window normalization, price
//! relatives, and a geometric-Brownian-motion generator for synthetic panels.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PORTFOLIO_SIZE: usize = 5;
pub const DEFAULT_MIN_DAYS: usize = 1200;
pub const DEFAULT_MAX_DRAWS: usize = 10_000;
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ohlcv {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Ohlcv {
    /// The row written for a day the asset did not trade.
    pub fn closed_market(prev_close: f64) -> Self {
        Self {
            open: prev_close,
            high: prev_close,
            low: prev_close,
            close: prev_close,
            volume: 0.0,
        }
    }

    pub fn get(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Open => self.open,
            Feature::High => self.high,
            Feature::Low => self.low,
            Feature::Close => self.close,
            Feature::Volume => self.volume,
        }
    }

    fn prices_mut(&mut self) -> [&mut f64; 4] {
        [&mut self.open, &mut self.high, &mut self.low, &mut self.close]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bar {
    pub date: NaiveDate,
    pub values: Ohlcv,
}

/// One asset's history, dates strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct AssetSeries {
    pub asset_id: String,
    pub rows: Vec<Bar>,
}

impl AssetSeries {
    pub fn first_date(&self) -> Option<NaiveDate> {
        self.rows.first().map(|b| b.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.rows.last().map(|b| b.date)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Close,
    Open,
    High,
    Low,
    Volume,
}

impl Feature {
    pub fn is_price(self) -> bool {
        self != Feature::Volume
    }

    fn name(self) -> &'static str {
        match self {
            Feature::Close => "close",
            Feature::Open => "open",
            Feature::High => "high",
            Feature::Low => "low",
            Feature::Volume => "volume",
        }
    }
}

/// Ordered feature subset; always starts with `close`.
///
/// Parsed from and displayed as `+`-joined names such as `close+high+volume`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FeatureSet(Vec<Feature>);

impl FeatureSet {
    pub fn new(features: &[Feature]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for f in features {
            if !seen.insert(*f) {
                return Err(Error::InvalidArgument(format!("feature `{}` listed twice", f.name())));
            }
        }
        if !seen.contains(&Feature::Close) {
            return Err(Error::InvalidArgument("feature set must include `close`".into()));
        }
        // close first, the rest in canonical order
        Ok(Self(seen.into_iter().collect()))
    }

    pub fn close_only() -> Self {
        Self(vec![Feature::Close])
    }

    pub fn features(&self) -> &[Feature] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for FeatureSet {
    fn default() -> Self {
        Self::close_only()
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let features = s
            .split('+')
            .map(|part| match part.trim() {
                "close" => Ok(Feature::Close),
                "open" => Ok(Feature::Open),
                "high" => Ok(Feature::High),
                "low" => Ok(Feature::Low),
                "volume" => Ok(Feature::Volume),
                other => Err(Error::InvalidArgument(format!("unknown feature `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&features)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|x| x.name()).collect();
        f.write_str(&names.join("+"))
    }
}

impl Serialize for FeatureSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FeatureSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Multi-asset history aligned to one calendar with no missing cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    asset_ids: Vec<String>,
    calendar: Vec<NaiveDate>,
    /// `rows[asset][t]`
    rows: Vec<Vec<Ohlcv>>,
}

impl Panel {
    pub fn new(asset_ids: Vec<String>, calendar: Vec<NaiveDate>, rows: Vec<Vec<Ohlcv>>) -> Result<Self> {
        if asset_ids.is_empty() || asset_ids.len() != rows.len() {
            return Err(Error::Data(format!(
                "panel needs at least one asset and one row set per asset ({} ids, {} row sets)",
                asset_ids.len(),
                rows.len()
            )));
        }
        if calendar.is_empty() {
            return Err(Error::Data("panel calendar is empty".into()));
        }
        if calendar.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("panel calendar must be strictly increasing".into()));
        }
        for (id, r) in asset_ids.iter().zip(&rows) {
            if r.len() != calendar.len() {
                return Err(Error::Data(format!(
                    "asset {id} has {} rows for a {}-day calendar",
                    r.len(),
                    calendar.len()
                )));
            }
        }
        Ok(Self {
            asset_ids,
            calendar,
            rows,
        })
    }

    /// Number of risky assets `m`.
    pub fn num_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn len(&self) -> usize {
        self.calendar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calendar.is_empty()
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn row(&self, asset: usize, t: usize) -> &Ohlcv {
        &self.rows[asset][t]
    }

    pub fn close(&self, asset: usize, t: usize) -> f64 {
        self.rows[asset][t].close
    }

    /// Index of `date` in the calendar, if present.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.calendar.binary_search(&date).ok()
    }

    /// Sub-panel covering calendar dates in `[start, end]`.
    pub fn restrict(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Result<Panel> {
        let lo = start.map_or(0, |d| self.calendar.partition_point(|&c| c < d));
        let hi = end.map_or(self.len(), |d| self.calendar.partition_point(|&c| c <= d));
        if lo >= hi {
            return Err(Error::Data(format!(
                "no trading days between {start:?} and {end:?}"
            )));
        }
        Ok(self.slice(lo, hi))
    }

    /// Sub-panel of calendar indices `lo..hi`.
    pub fn slice(&self, lo: usize, hi: usize) -> Panel {
        Panel {
            asset_ids: self.asset_ids.clone(),
            calendar: self.calendar[lo..hi].to_vec(),
            rows: self.rows.iter().map(|r| r[lo..hi].to_vec()).collect(),
        }
    }

    /// Copy with every open/high/low/close cell replaced by `f(cell)`.
    pub(crate) fn map_prices(&self, mut f: impl FnMut(f64) -> f64) -> Panel {
        let mut out = self.clone();
        for series in &mut out.rows {
            for row in series.iter_mut() {
                for p in row.prices_mut() {
                    *p = f(*p);
                }
            }
        }
        out
    }

    /// Per-asset series view, e.g. for writing CSVs.
    pub fn to_series(&self) -> Vec<AssetSeries> {
        self.asset_ids
            .iter()
            .zip(&self.rows)
            .map(|(id, rows)| AssetSeries {
                asset_id: id.clone(),
                rows: self
                    .calendar
                    .iter()
                    .zip(rows)
                    .map(|(&date, &values)| Bar { date, values })
                    .collect(),
            })
            .collect()
    }
}

/// Normalized feature window: `values[asset][feature][lag]`, lag `W-1` = day `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTensor {
    num_assets: usize,
    features: FeatureSet,
    window: usize,
    values: Vec<f64>,
}

impl StateTensor {
    pub fn new(num_assets: usize, features: FeatureSet, window: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_assets * features.len() * window {
            return Err(Error::InvalidArgument(format!(
                "state of {num_assets} assets x {} features x {window} lags needs {} values, got {}",
                features.len(),
                num_assets * features.len() * window,
                values.len()
            )));
        }
        Ok(Self {
            num_assets,
            features,
            window,
            values,
        })
    }

    pub fn num_assets(&self) -> usize {
        self.num_assets
    }

    pub fn features(&self) -> &FeatureSet {
        &self.features
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn get(&self, asset: usize, feature: usize, lag: usize) -> f64 {
        self.values[(asset * self.features.len() + feature) * self.window + lag]
    }

    /// The `[features, window]` block of one asset.
    pub fn asset_block(&self, asset: usize) -> &[f64] {
        let n = self.features.len() * self.window;
        &self.values[asset * n..(asset + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copy with risky assets `i` and `j` (0-based) exchanged.
    pub fn swap_assets(&self, i: usize, j: usize) -> StateTensor {
        let n = self.features.len() * self.window;
        let mut out = self.clone();
        for k in 0..n {
            out.values.swap(i * n + k, j * n + k);
        }
        out
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads one asset's CSV (`date,open,high,low,close,volume`), sorted by date.
pub fn load_ohlcv(path: &Path) -> Result<AssetSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let expected = ["date", "open", "high", "low", "close", "volume"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(path, 1, format!("expected header {}", expected.join(","))));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(path, line, format!("bad date `{}`: {e}", &record[0])))?;
        let mut nums = [0.0; 5];
        for (k, slot) in nums.iter_mut().enumerate() {
            let field = &record[k + 1];
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line, format!("bad {} `{field}`", expected[k + 1])))?;
        }
        if nums[..4].iter().any(|&p| p <= 0.0) {
            return Err(parse_err(path, line, "prices must be positive"));
        }
        if nums[4] < 0.0 {
            return Err(parse_err(path, line, "volume must be nonnegative"));
        }
        rows.push(Bar {
            date,
            values: Ohlcv {
                open: nums[0],
                high: nums[1],
                low: nums[2],
                close: nums[3],
                volume: nums[4],
            },
        });
    }

    rows.sort_by_key(|b| b.date);
    if let Some(w) = rows.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::DuplicateDate {
            path: path.to_path_buf(),
            date: w[0].date,
        });
    }
    let asset_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(AssetSeries { asset_id, rows })
}

pub fn write_ohlcv(series: &AssetSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "open", "high", "low", "close", "volume"])?;
    for bar in &series.rows {
        let v = &bar.values;
        w.write_record(&[
            bar.date.format("%Y-%m-%d").to_string(),
            v.open.to_string(),
            v.high.to_string(),
            v.low.to_string(),
            v.close.to_string(),
            v.volume.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// The common trading span `[latest first date, earliest last date]`.
fn common_span(series: &[&AssetSeries]) -> Option<(NaiveDate, NaiveDate)> {
    let start = series.iter().map(|s| s.first_date()).collect::<Option<Vec<_>>>()?.into_iter().max()?;
    let end = series.iter().map(|s| s.last_date()).collect::<Option<Vec<_>>>()?.into_iter().min()?;
    (start <= end).then_some((start, end))
}

fn span_calendar(series: &[&AssetSeries], start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let mut dates = BTreeSet::new();
    for s in series {
        let lo = s.rows.partition_point(|b| b.date < start);
        let hi = s.rows.partition_point(|b| b.date <= end);
        dates.extend(s.rows[lo..hi].iter().map(|b| b.date));
    }
    dates.into_iter().collect()
}

/// Aligns series onto the union of their dates within the common span.
///
/// A date on which an asset has no row is filled with its previous close
/// for open/high/low/close and zero volume.
pub fn align_and_fill(series: &[AssetSeries]) -> Result<Panel> {
    let refs: Vec<&AssetSeries> = series.iter().collect();
    align_refs(&refs)
}

fn align_refs(series: &[&AssetSeries]) -> Result<Panel> {
    if series.is_empty() {
        return Err(Error::Data("no series to align".into()));
    }
    let (start, end) = common_span(series).ok_or_else(|| {
        Error::Data(format!(
            "assets {} have no overlapping trading history",
            series.iter().map(|s| s.asset_id.as_str()).collect::<Vec<_>>().join(", ")
        ))
    })?;
    let calendar = span_calendar(series, start, end);

    let mut rows = Vec::with_capacity(series.len());
    for s in series {
        // last row on or before `start` seeds the fill
        let mut k = s.rows.partition_point(|b| b.date <= start) - 1;
        let mut aligned = Vec::with_capacity(calendar.len());
        for &d in &calendar {
            while k + 1 < s.rows.len() && s.rows[k + 1].date <= d {
                k += 1;
            }
            let bar = &s.rows[k];
            aligned.push(if bar.date == d {
                bar.values
            } else {
                Ohlcv::closed_market(bar.values.close)
            });
        }
        rows.push(aligned);
    }
    Panel::new(series.iter().map(|s| s.asset_id.clone()).collect(), calendar, rows)
}

/// Draws random `m`-subsets of `pool` until one has at least `min_days`
/// aligned trading days.
pub fn select_portfolio<R: Rng + ?Sized>(
    pool: &[AssetSeries],
    m: usize,
    min_days: usize,
    max_draws: usize,
    rng: &mut R,
) -> Result<Panel> {
    if m == 0 || pool.len() < m {
        return Err(Error::InvalidArgument(format!(
            "cannot choose {m} assets from a pool of {}",
            pool.len()
        )));
    }
    for _ in 0..max_draws {
        let mut picks = index::sample(rng, pool.len(), m).into_vec();
        picks.sort_unstable();
        let chosen: Vec<&AssetSeries> = picks.iter().map(|&i| &pool[i]).collect();
        if let Some((start, end)) = common_span(&chosen) {
            if span_calendar(&chosen, start, end).len() >= min_days {
                return align_refs(&chosen);
            }
        }
    }
    Err(Error::Data(format!(
        "no {m}-asset subset with >= {min_days} common days found in {max_draws} draws"
    )))
}

/// Feature window ending at day `t`, prices divided by that asset's close at `t`.
///
/// Volume is divided by its maximum inside the window (left at 0 when the
/// window has no volume).
pub fn normalize_window(panel: &Panel, t: usize, window: usize, features: &FeatureSet) -> Result<StateTensor> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    if t + 1 < window || t >= panel.len() {
        return Err(Error::InvalidArgument(format!(
            "window of {window} days ending at index {t} does not fit a {}-day panel",
            panel.len()
        )));
    }
    let first = t + 1 - window;
    let mut values = Vec::with_capacity(panel.num_assets() * features.len() * window);
    for asset in 0..panel.num_assets() {
        let rows = &panel.rows[asset][first..=t];
        let last_close = panel.rows[asset][t].close;
        for &f in features.features() {
            if f.is_price() {
                values.extend(rows.iter().map(|r| r.get(f) / last_close));
            } else {
                let max = rows.iter().map(|r| r.volume).fold(0.0, f64::max);
                values.extend(rows.iter().map(|r| if max > 0.0 { r.volume / max } else { 0.0 }));
            }
        }
    }
    StateTensor::new(panel.num_assets(), features.clone(), window, values)
}

/// `y_t = (1, close_{1,t}/close_{1,t-1}, …)`.
pub fn price_relatives(panel: &Panel, t: usize) -> Result<Vec<f64>> {
    if t == 0 || t >= panel.len() {
        return Err(Error::InvalidArgument(format!(
            "price relatives need 1 <= t < {}, got {t}",
            panel.len()
        )));
    }
    let mut y = Vec::with_capacity(panel.num_assets() + 1);
    y.push(1.0);
    y.extend((0..panel.num_assets()).map(|i| panel.close(i, t) / panel.close(i, t - 1)));
    Ok(y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAsset {
    pub id: String,
    /// Expected log-growth plus half the variance, per day.
    pub drift: f64,
    /// Daily volatility.
    pub volatility: f64,
    #[serde(default = "default_start_price")]
    pub start_price: f64,
}

fn default_start_price() -> f64 {
    100.0
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub assets: Vec<SyntheticAsset>,
    pub days: usize,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
}

/// `days` consecutive weekdays starting at `start` (rolled forward off a weekend).
pub fn weekday_calendar(start: NaiveDate, days: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(days);
    let mut d = start;
    while out.len() < days {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Geometric-Brownian-motion panel.
///
/// `close_t = close_{t-1} · exp(drift − vol²/2 + vol·ξ)`, so the expected
/// close after `t` days is `start · exp(drift · t)`. Each day opens at the
/// previous close; high/low stretch the open-close range by an intraday
/// factor proportional to the volatility.
pub fn gen_synthetic<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<Panel> {
    if spec.days < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 days, got {}", spec.days)));
    }
    if spec.assets.is_empty() {
        return Err(Error::InvalidArgument("no assets in synthetic spec".into()));
    }
    let mut ids = HashSet::new();
    for a in &spec.assets {
        if !(a.volatility >= 0.0 && a.volatility.is_finite()) || !a.drift.is_finite() {
            return Err(Error::InvalidArgument(format!("asset {}: bad drift/volatility", a.id)));
        }
        if !(a.start_price > 0.0) {
            return Err(Error::InvalidArgument(format!("asset {}: start price must be positive", a.id)));
        }
        if !ids.insert(a.id.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate asset id {}", a.id)));
        }
    }

    let calendar = weekday_calendar(spec.start_date, spec.days);
    let mut rows = Vec::with_capacity(spec.assets.len());
    for a in &spec.assets {
        let mut series = Vec::with_capacity(spec.days);
        let mut close = a.start_price;
        for day in 0..spec.days {
            let open = close;
            if day > 0 {
                let xi: f64 = StandardNormal.sample(rng);
                close *= (a.drift - 0.5 * a.volatility * a.volatility + a.volatility * xi).exp();
            }
            let up: f64 = rng.random();
            let down: f64 = rng.random();
            let vol_noise: f64 = StandardNormal.sample(rng);
            let intraday = 0.5 * a.volatility;
            series.push(Ohlcv {
                open,
                high: open.max(close) * (1.0 + intraday * up),
                low: open.min(close) * (1.0 - intraday * down).max(0.5),
                close,
                volume: (1e6 * (0.25 * vol_noise).exp()).round().max(1.0),
            });
        }
        rows.push(series);
    }
    Panel::new(spec.assets.iter().map(|a| a.id.clone()).collect(), calendar, rows)
}

/// Asset file list plus the data options a run is built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub assets: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<NaiveDate>,
    #[serde(default)]
    pub features: FeatureSet,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Loads every listed asset (paths relative to `base`) and aligns them
    /// within the optional date range.
    pub fn load_panel(&self, base: &Path) -> Result<Panel> {
        let series = self
            .assets
            .iter()
            .map(|p| load_ohlcv(&resolve(base, p)))
            .collect::<Result<Vec<_>>>()?;
        align_and_fill(&series)?.restrict(self.start, self.end)
    }
}

pub(crate) fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn flat(close: f64) -> Ohlcv {
        Ohlcv {
            open: close,
            high: close,
            low: close,
            close,
            volume: 100.0,
        }
    }

    fn series(id: &str, dates: &[&str], closes: &[f64]) -> AssetSeries {
        AssetSeries {
            asset_id: id.into(),
            rows: dates
                .iter()
                .zip(closes)
                .map(|(s, &c)| Bar {
                    date: d(s),
                    values: flat(c),
                })
                .collect(),
        }
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    const HEADER: &str = "date,open,high,low,close,volume\n";

    #[test]
    fn loads_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "AAA.csv",
            &format!("{HEADER}2020-01-02,1,2,0.5,1.5,10\n2020-01-03,1.5,2,1,1.8,0\n2020-01-06,1.8,1.9,1.7,1.75,5\n"),
        );
        let s = load_ohlcv(&p).unwrap();
        assert_eq!(s.asset_id, "AAA");
        assert_eq!(s.rows.len(), 3);
        assert_eq!(s.rows[1].values.close, 1.8);
    }

    #[test]
    fn duplicate_date_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "dup.csv",
            &format!("{HEADER}2020-01-02,1,1,1,1,1\n2020-01-02,1,1,1,1,1\n"),
        );
        let err = load_ohlcv(&p).unwrap_err().to_string();
        assert!(err.contains("2020-01-02"), "{err}");
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "u.csv",
            &format!("{HEADER}2020-01-06,3,3,3,3,1\n2020-01-02,1,1,1,1,1\n2020-01-03,2,2,2,2,1\n"),
        );
        let s = load_ohlcv(&p).unwrap();
        let dates: Vec<_> = s.rows.iter().map(|b| b.date).collect();
        let mut sorted = dates.clone();
        sorted.sort();
        assert_eq!(dates, sorted);
        assert_eq!(s.rows.iter().map(|b| b.values.close).collect::<Vec<_>>(), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "bad.csv",
            &format!("{HEADER}2020-01-02,1,1,1,1,1\n2020-01-03,1,x,1,1,1\n"),
        );
        let err = load_ohlcv(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn nonpositive_price_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "z.csv", &format!("{HEADER}2020-01-02,1,1,1,0,1\n"));
        assert!(load_ohlcv(&p).is_err());
    }

    #[test]
    fn missing_day_is_forward_filled() {
        let a = series("A", &["2020-01-01", "2020-01-02", "2020-01-03"], &[9.0, 11.0, 12.0]);
        let b = series("B", &["2020-01-01", "2020-01-03"], &[10.0, 13.0]);
        let panel = align_and_fill(&[a, b]).unwrap();
        assert_eq!(panel.len(), 3);
        assert_eq!(*panel.row(1, 1), Ohlcv::closed_market(10.0));
        assert_eq!(panel.row(1, 1).volume, 0.0);
        let y = price_relatives(&panel, 1).unwrap();
        assert_eq!(y[2], 1.0);
    }

    #[test]
    fn identical_calendars_are_kept() {
        let dates = ["2020-01-01", "2020-01-02", "2020-01-03"];
        let a = series("A", &dates, &[1.0, 2.0, 3.0]);
        let b = series("B", &dates, &[3.0, 2.0, 1.0]);
        let panel = align_and_fill(&[a, b]).unwrap();
        assert_eq!(panel.calendar(), dates.map(d));
    }

    #[test]
    fn staggered_starts_trim_to_latest_first_date() {
        let a = series("A", &["2020-01-01", "2020-01-02", "2020-01-03", "2020-01-04"], &[1.0; 4]);
        let b = series("B", &["2020-01-02", "2020-01-04"], &[1.0; 2]);
        let c = series("C", &["2020-01-03", "2020-01-04"], &[1.0; 2]);
        let panel = align_and_fill(&[a, b, c]).unwrap();
        assert_eq!(panel.calendar()[0], d("2020-01-03"));
        assert_eq!(panel.len(), 2);
    }

    #[test]
    fn disjoint_histories_fail() {
        let a = series("A", &["2020-01-01", "2020-01-02"], &[1.0; 2]);
        let b = series("B", &["2021-01-01", "2021-01-02"], &[1.0; 2]);
        assert!(align_and_fill(&[a, b]).is_err());
    }

    fn long_series(id: &str, start: NaiveDate, days: usize) -> AssetSeries {
        AssetSeries {
            asset_id: id.into(),
            rows: weekday_calendar(start, days)
                .into_iter()
                .map(|date| Bar { date, values: flat(5.0) })
                .collect(),
        }
    }

    #[test]
    fn only_candidate_portfolio_is_selected() {
        let pool: Vec<_> = (0..5).map(|i| long_series(&format!("S{i}"), d("2010-01-04"), 1500)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let panel = select_portfolio(&pool, 5, 1200, DEFAULT_MAX_DRAWS, &mut rng).unwrap();
        assert_eq!(panel.num_assets(), 5);
        assert_eq!(panel.len(), 1500);
    }

    #[test]
    fn short_overlaps_fail_selection() {
        // consecutive series overlap by 100 weekdays, others not at all
        let mut pool = Vec::new();
        let mut start = d("2010-01-04");
        for i in 0..4 {
            let s = long_series(&format!("S{i}"), start, 600);
            start = s.rows[500].date;
            pool.push(s);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(select_portfolio(&pool, 2, 1200, 200, &mut rng).is_err());
    }

    #[test]
    fn selection_is_reproducible() {
        let pool: Vec<_> = (0..12)
            .map(|i| long_series(&format!("S{i}"), d("2010-01-04") + Days::new(i * 40), 1400))
            .collect();
        let pick = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            select_portfolio(&pool, 5, 1200, DEFAULT_MAX_DRAWS, &mut rng).unwrap()
        };
        assert_eq!(pick(9), pick(9));
    }

    fn panel_from_closes(closes: &[f64]) -> Panel {
        let cal = weekday_calendar(d("2020-01-06"), closes.len());
        Panel::new(vec!["A".into()], cal, vec![closes.iter().map(|&c| flat(c)).collect()]).unwrap()
    }

    #[test]
    fn flat_window_normalizes_to_one() {
        let p = panel_from_closes(&[10.0, 10.0, 10.0]);
        let s = normalize_window(&p, 2, 3, &FeatureSet::close_only()).unwrap();
        assert_eq!(s.values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn window_divides_by_last_close() {
        let p = panel_from_closes(&[8.0, 9.0, 10.0]);
        let s = normalize_window(&p, 2, 3, &FeatureSet::close_only()).unwrap();
        assert_eq!(s.values(), &[0.8, 0.9, 1.0]);
    }

    #[test]
    fn high_is_divided_by_close_at_t() {
        let mut p = panel_from_closes(&[8.0, 9.0, 10.0]);
        p.rows[0][1].high = 11.0;
        let s = normalize_window(&p, 2, 3, &"close+high".parse().unwrap()).unwrap();
        assert!((s.get(0, 1, 1) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn volume_scaled_by_window_max() {
        let mut p = panel_from_closes(&[8.0, 9.0, 10.0]);
        p.rows[0][0].volume = 50.0;
        p.rows[0][2].volume = 0.0;
        let s = normalize_window(&p, 2, 3, &"close+volume".parse().unwrap()).unwrap();
        assert_eq!(&s.asset_block(0)[3..], &[0.5, 1.0, 0.0]);
    }

    #[test]
    fn window_too_early_fails() {
        let p = panel_from_closes(&[8.0, 9.0, 10.0]);
        assert!(normalize_window(&p, 1, 3, &FeatureSet::close_only()).is_err());
    }

    #[test]
    fn relatives() {
        let p = panel_from_closes(&[100.0, 110.0, 110.0]);
        assert_eq!(price_relatives(&p, 1).unwrap(), [1.0, 1.1]);
        assert_eq!(price_relatives(&p, 2).unwrap(), [1.0, 1.0]);
        assert!(price_relatives(&p, 0).is_err());
    }

    #[test]
    fn feature_set_parsing() {
        let f: FeatureSet = "close+low+volume".parse().unwrap();
        assert_eq!(f.to_string(), "close+low+volume");
        assert!("high".parse::<FeatureSet>().is_err());
        assert!("close+close".parse::<FeatureSet>().is_err());
        assert!("close+vwap".parse::<FeatureSet>().is_err());
    }

    fn spec(drift: f64, vol: f64, days: usize) -> SyntheticSpec {
        SyntheticSpec {
            assets: vec![SyntheticAsset {
                id: "G".into(),
                drift,
                volatility: vol,
                start_price: 100.0,
            }],
            days,
            start_date: default_start_date(),
        }
    }

    #[test]
    fn zero_vol_zero_drift_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = gen_synthetic(&spec(0.0, 0.0, 50), &mut rng).unwrap();
        for t in 0..50 {
            assert_eq!(*p.row(0, t), Ohlcv { volume: p.row(0, t).volume, ..flat(100.0) });
            assert!(p.row(0, t).volume > 0.0);
        }
    }

    #[test]
    fn synthetic_is_reproducible() {
        let s = spec(0.001, 0.02, 300);
        let a = gen_synthetic(&s, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = gen_synthetic(&s, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_rejects_single_day() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(gen_synthetic(&spec(0.0, 0.1, 1), &mut rng).is_err());
    }

    #[test]
    fn terminal_mean_matches_gbm_expectation() {
        let (drift, vol, days) = (0.001, 0.01, 1000);
        let s = spec(drift, vol, days + 1);
        let finals: Vec<f64> = (0..200)
            .map(|seed| {
                let p = gen_synthetic(&s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                p.close(0, days)
            })
            .collect();
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = 100.0 * (drift * days as f64).exp();
        let se = (var / n).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} expected {expected} se {se}");
    }

    proptest::proptest! {
        #[test]
        fn aligned_panels_have_no_gaps(
            gaps_a in proptest::collection::vec(proptest::bool::ANY, 30),
            gaps_b in proptest::collection::vec(proptest::bool::ANY, 30),
        ) {
            let cal = weekday_calendar(d("2020-01-06"), 30);
            let mk = |id: &str, gaps: &[bool]| AssetSeries {
                asset_id: id.into(),
                rows: cal
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i == 0 || !gaps[*i])
                    .map(|(i, &date)| Bar { date, values: flat(1.0 + i as f64) })
                    .collect(),
            };
            let a = mk("A", &gaps_a);
            let b = mk("B", &gaps_b);
            let panel = align_and_fill(&[a.clone(), b.clone()]).unwrap();
            for (k, s) in [a, b].iter().enumerate() {
                for t in 0..panel.len() {
                    let date = panel.calendar()[t];
                    let present = s.rows.iter().any(|r| r.date == date);
                    if !present {
                        let row = panel.row(k, t);
                        proptest::prop_assert_eq!(row.volume, 0.0);
                        proptest::prop_assert_eq!(row.close, panel.close(k, t - 1));
                    }
                }
            }
        }

        #[test]
        fn last_close_lag_is_exactly_one(closes in proptest::collection::vec(0.01f64..1e4, 5..40), w in 1usize..5) {
            let p = panel_from_closes(&closes);
            for t in (w - 1)..p.len() {
                let s = normalize_window(&p, t, w, &"close+open".parse().unwrap()).unwrap();
                proptest::prop_assert_eq!(s.get(0, 0, w - 1), 1.0);
            }
        }
    }
}
