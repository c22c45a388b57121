//! Benchmark price data: CSV ingestion, price relatives and the
//! descriptive statistics used to characterize asset pairs.

use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// How the numeric cells of a CSV file are to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataFormat {
    /// Price levels; the first row becomes the normalization base.
    Prices,
    /// Price relatives `S_t / S_{t-1}`, one row per trading period.
    #[default]
    Relatives,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "prices" => Ok(DataFormat::Prices),
            "relatives" => Ok(DataFormat::Relatives),
            other => Err(Error::invalid(format!("unknown data format `{other}` (expected prices or relatives)"))),
        }
    }
}

/// Price levels normalized so that the first row is all ones.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    names: Vec<String>,
    prices: Vec<Vec<f64>>,
    dates: Option<Vec<String>>,
}

impl PriceSeries {
    /// Normalizes each column by its first entry.
    pub fn new(names: Vec<String>, prices: Vec<Vec<f64>>, dates: Option<Vec<String>>) -> Result<Self> {
        let k = names.len();
        if k == 0 {
            return Err(Error::invalid("price series needs at least one asset"));
        }
        if prices.is_empty() {
            return Err(Error::invalid("price series has no rows"));
        }
        if let Some(d) = &dates {
            if d.len() != prices.len() {
                return Err(Error::LengthMismatch { expected: prices.len(), got: d.len() });
            }
        }
        for (t, row) in prices.iter().enumerate() {
            Error::check_dim(k, row.len())?;
            for (j, &p) in row.iter().enumerate() {
                if p <= 0.0 || !p.is_finite() {
                    return Err(Error::NonPositiveValue { row: t, column: names[j].clone(), value: p });
                }
            }
        }
        let base = prices[0].clone();
        let prices = prices.into_iter().map(|row| row.iter().zip(&base).map(|(p, b)| p / b).collect()).collect();
        Ok(PriceSeries { names, prices, dates })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn prices(&self) -> &[Vec<f64>] {
        &self.prices
    }

    pub fn dates(&self) -> Option<&[String]> {
        self.dates.as_deref()
    }

    /// Number of rows, `T + 1`.
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Matrix of price relatives, `T` rows by `K` assets.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceRelativeSeries {
    names: Vec<String>,
    relatives: Vec<Vec<f64>>,
}

impl PriceRelativeSeries {
    pub fn new(names: Vec<String>, relatives: Vec<Vec<f64>>) -> Result<Self> {
        let k = names.len();
        if k == 0 {
            return Err(Error::invalid("relative series needs at least one asset"));
        }
        for (t, row) in relatives.iter().enumerate() {
            Error::check_dim(k, row.len())?;
            for (j, &f) in row.iter().enumerate() {
                if f <= 0.0 || !f.is_finite() {
                    return Err(Error::NonPositiveValue { row: t, column: names[j].clone(), value: f });
                }
            }
        }
        Ok(PriceRelativeSeries { names, relatives })
    }

    /// Convenience constructor with generated names `asset1..assetK`.
    pub fn from_rows(relatives: Vec<Vec<f64>>) -> Result<Self> {
        let k = relatives.first().map_or(0, Vec::len);
        let names = (1..=k).map(|i| format!("asset{i}")).collect();
        Self::new(names, relatives)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.relatives
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.relatives[t]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.relatives.iter().map(|r| r[k]).collect()
    }

    /// Number of trading periods `T`.
    pub fn len(&self) -> usize {
        self.relatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relatives.is_empty()
    }

    pub fn num_assets(&self) -> usize {
        self.names.len()
    }

    /// The first `t` periods.
    pub fn truncated(&self, t: usize) -> Self {
        PriceRelativeSeries { names: self.names.clone(), relatives: self.relatives[..t.min(self.len())].to_vec() }
    }

    /// Cumulative products, i.e. prices normalized to one at time zero.
    pub fn to_prices(&self) -> PriceSeries {
        let k = self.num_assets();
        let mut prices = Vec::with_capacity(self.len() + 1);
        prices.push(vec![1.0; k]);
        for row in &self.relatives {
            let last = prices.last().unwrap();
            let next = last.iter().zip(row).map(|(p, f)| p * f).collect();
            prices.push(next);
        }
        PriceSeries { names: self.names.clone(), prices, dates: None }
    }

    /// Column subset in the requested order (case-insensitive exact names).
    pub fn select<S: AsRef<str>>(&self, selected: &[S]) -> Result<Self> {
        let idx = resolve_columns(&self.names, selected)?;
        Ok(PriceRelativeSeries {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            relatives: self.relatives.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
        })
    }
}

pub fn to_price_relatives(series: &PriceSeries) -> Result<PriceRelativeSeries> {
    if series.len() < 2 {
        return Err(Error::invalid("need at least two price rows to form relatives"));
    }
    let relatives = series.prices.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b / a).collect()).collect();
    PriceRelativeSeries::new(series.names.clone(), relatives)
}

fn resolve_columns<S: AsRef<str>>(names: &[String], selected: &[S]) -> Result<Vec<usize>> {
    selected
        .iter()
        .map(|s| {
            let s = s.as_ref();
            names.iter().position(|n| n.eq_ignore_ascii_case(s)).ok_or_else(|| Error::UnknownAsset(s.to_string()))
        })
        .collect()
}

struct RawTable {
    names: Vec<String>,
    dates: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
}

/// Reads a header row of asset names followed by positive decimals. A
/// leading column named `date` is kept as row labels. Row numbers in
/// errors are 1-based file lines.
fn read_table<R: Read, S: AsRef<str>>(reader: R, selected: Option<&[S]>) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::MalformedRow { row: 1, column: "header".into(), message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let has_dates = header.first().is_some_and(|h| h.eq_ignore_ascii_case("date"));
    let offset = usize::from(has_dates);
    let all_names: Vec<String> = header[offset..].to_vec();
    if all_names.is_empty() {
        return Err(Error::MalformedRow { row: 1, column: "header".into(), message: "no asset columns".into() });
    }
    let columns = match selected {
        Some(sel) => resolve_columns(&all_names, sel)?,
        None => (0..all_names.len()).collect(),
    };

    let mut rows = Vec::new();
    let mut dates = has_dates.then(Vec::new);
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record =
            record.map_err(|e| Error::MalformedRow { row: line, column: "*".into(), message: e.to_string() })?;
        if record.len() != header.len() {
            return Err(Error::MalformedRow {
                row: line,
                column: "*".into(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        if let Some(d) = dates.as_mut() {
            d.push(record[0].to_string());
        }
        let mut row = Vec::with_capacity(columns.len());
        for &c in &columns {
            let cell = &record[c + offset];
            let value: f64 = cell.parse().map_err(|_| Error::MalformedRow {
                row: line,
                column: all_names[c].clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            if value <= 0.0 || !value.is_finite() {
                return Err(Error::NonPositiveValue { row: line, column: all_names[c].clone(), value });
            }
            row.push(value);
        }
        rows.push(row);
    }
    Ok(RawTable { names: columns.iter().map(|&c| all_names[c].clone()).collect(), dates, rows })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_price_csv<R: Read, S: AsRef<str>>(reader: R, selected: Option<&[S]>) -> Result<PriceSeries> {
    let raw = read_table(reader, selected)?;
    PriceSeries::new(raw.names, raw.rows, raw.dates)
}

pub fn read_relatives_csv<R: Read, S: AsRef<str>>(reader: R, selected: Option<&[S]>) -> Result<PriceRelativeSeries> {
    let raw = read_table(reader, selected)?;
    PriceRelativeSeries::new(raw.names, raw.rows)
}

/// Loads a price-level file, restricted to `selected` columns in that order.
pub fn load_price_csv<S: AsRef<str>>(path: impl AsRef<Path>, selected: Option<&[S]>) -> Result<PriceSeries> {
    read_price_csv(open(path.as_ref())?, selected)
}

/// Loads relatives from either file layout.
pub fn load_relatives<S: AsRef<str>>(
    path: impl AsRef<Path>,
    selected: Option<&[S]>,
    format: DataFormat,
) -> Result<PriceRelativeSeries> {
    let file = open(path.as_ref())?;
    match format {
        DataFormat::Relatives => read_relatives_csv(file, selected),
        DataFormat::Prices => to_price_relatives(&read_price_csv(file, selected)?),
    }
}

/// Pearson correlation between the two columns of a two-asset series.
pub fn relative_correlation(rel: &PriceRelativeSeries) -> Result<f64> {
    if rel.num_assets() != 2 {
        return Err(Error::invalid(format!("correlation needs exactly two assets, got {}", rel.num_assets())));
    }
    if rel.len() < 2 {
        return Err(Error::DegenerateData("correlation needs at least two periods".into()));
    }
    let n = rel.len() as f64;
    let (x, y) = (rel.column(0), rel.column(1));
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateData("a column of relatives has zero variance".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Final wealth of holding one asset from time zero: the product of its
/// relatives.
pub fn buy_and_hold_wealth(rel: &PriceRelativeSeries, asset_index: usize) -> Result<f64> {
    if asset_index >= rel.num_assets() {
        return Err(Error::IndexOutOfRange { index: asset_index, len: rel.num_assets() });
    }
    Ok(rel.rows().iter().map(|r| r[asset_index]).product())
}

/// The four two-asset Old NYSE pairs, numbered as in the usual benchmark
/// table. Names are the column headers of the bundled `nyse_o.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairPreset {
    pub number: u8,
    pub assets: [&'static str; 2],
    pub label: [&'static str; 2],
    pub description: &'static str,
}

pub const PAIR_PRESETS: [PairPreset; 4] = [
    PairPreset {
        number: 1,
        assets: ["comme", "kinar"],
        label: ["Commercial Metals", "Kin Ark"],
        description: "volatile, stagnant, uncorrelated",
    },
    PairPreset {
        number: 2,
        assets: ["iroqu", "kinar"],
        label: ["Iroquois", "Kin Ark"],
        description: "volatile, uncorrelated",
    },
    PairPreset {
        number: 3,
        assets: ["coke", "ibm"],
        label: ["Coca Cola", "IBM"],
        description: "non-volatile, highly correlated",
    },
    PairPreset {
        number: 4,
        assets: ["comme", "meico"],
        label: ["Commercial Metals", "Meicco"],
        description: "volatile",
    },
];

pub fn pair_preset(number: u8) -> Result<PairPreset> {
    PAIR_PRESETS
        .iter()
        .copied()
        .find(|p| p.number == number)
        .ok_or_else(|| Error::invalid(format!("no pair preset {number} (expected 1-4)")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairStats {
    pub assets: Vec<String>,
    pub periods: usize,
    pub correlation: f64,
    pub performances: Vec<f64>,
}

pub fn pair_stats(rel: &PriceRelativeSeries) -> Result<PairStats> {
    let correlation = relative_correlation(rel)?;
    let performances = (0..rel.num_assets()).map(|k| buy_and_hold_wealth(rel, k)).collect::<Result<_>>()?;
    Ok(PairStats { assets: rel.names().to_vec(), periods: rel.len(), correlation, performances })
}
