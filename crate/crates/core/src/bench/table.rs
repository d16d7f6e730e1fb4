use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Convergence,
    PowerSweep,
    ElementSweep,
    Single,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Convergence => "convergence",
            Experiment::PowerSweep => "power-sweep",
            Experiment::ElementSweep => "element-sweep",
            Experiment::Single => "single",
        }
    }
}

/// Ordered as the schemes appear in output tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Proposed,
    Miso,
    EqualPower,
    RandomPhase,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::Miso, Scheme::EqualPower, Scheme::RandomPhase];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Miso => "miso",
            Scheme::EqualPower => "equal-power",
            Scheme::RandomPhase => "random-phase",
        }
    }
}

macro_rules! str_enum {
    ($t:ty, $what:literal, [$($v:expr),+]) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                [$($v),+]
                    .into_iter()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| Error::Parse(format!("unknown {} {s:?}", $what)))
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

str_enum!(Experiment, "experiment", [Experiment::Convergence, Experiment::PowerSweep, Experiment::ElementSweep, Experiment::Single]);
str_enum!(Scheme, "scheme", [Scheme::Proposed, Scheme::Miso, Scheme::EqualPower, Scheme::RandomPhase]);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(Error::Parse(format!("unknown format {s:?}"))),
        }
    }
}

/// Run outcome: an algorithm status, or `failed` when the run errored.
pub const STATUS_FAILED: &str = "failed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: Experiment,
    pub sweep_value: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub sum_rate: f64,
    pub rates: Vec<f64>,
    pub iters: usize,
    pub wall_ms: f64,
    pub status: String,
}

impl Row {
    pub fn failed(&self) -> bool {
        self.status == STATUS_FAILED
    }

    fn sort_key(&self) -> (Experiment, f64, u64, Scheme) {
        (self.experiment, self.sweep_value, self.seed, self.scheme)
    }
}

/// Rows of one experiment, all with `users` per-user rate columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub users: usize,
    pub rows: Vec<Row>,
}

impl ResultTable {
    pub fn new(users: usize) -> Self {
        Self { users, rows: Vec::new() }
    }

    /// Sorts by `(experiment, sweep_value, seed, scheme)`.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            let (ka, kb) = (a.sort_key(), b.sort_key());
            ka.0.cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.cmp(&kb.2))
                .then(ka.3.cmp(&kb.3))
        });
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["experiment", "sweep_value", "seed", "scheme", "sum_rate"].map(String::from).to_vec();
        h.extend((1..=self.users).map(|k| format!("rate_{k}")));
        h.extend(["iters", "wall_ms", "status"].map(String::from));
        h
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(self.header()).map_err(csv_err)?;
        for row in &self.rows {
            if row.rates.len() != self.users {
                return Err(Error::DimensionMismatch(format!("row has {} rates, table {}", row.rates.len(), self.users)));
            }
            let mut rec = vec![
                row.experiment.as_str().to_string(),
                fmt_num(row.sweep_value),
                row.seed.to_string(),
                row.scheme.as_str().to_string(),
                fmt_num(row.sum_rate),
            ];
            rec.extend(row.rates.iter().map(|&r| fmt_num(r)));
            rec.extend([row.iters.to_string(), fmt_num(row.wall_ms), row.status.clone()]);
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        let header = r.headers().map_err(csv_err)?.clone();
        let users = header.len().checked_sub(8).ok_or_else(|| Error::Parse("short header".into()))?;
        let table = Self::new(users);
        if header.iter().ne(table.header().iter().map(String::as_str)) {
            return Err(Error::Parse(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
        }
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let bad = |what: &str| Error::Parse(format!("row {}: bad {what}", line + 1));
            let num = |i: usize, what: &str| field(i).parse::<f64>().map_err(|_| bad(what));
            rows.push(Row {
                experiment: field(0).parse()?,
                sweep_value: num(1, "sweep_value")?,
                seed: field(2).parse().map_err(|_| bad("seed"))?,
                scheme: field(3).parse()?,
                sum_rate: num(4, "sum_rate")?,
                rates: (0..users).map(|k| num(5 + k, "rate")).collect::<Result<_>>()?,
                iters: field(5 + users).parse().map_err(|_| bad("iters"))?,
                wall_ms: num(6 + users, "wall_ms")?,
                status: field(7 + users).to_string(),
            });
        }
        Ok(Self { users, rows })
    }

    /// One JSON object per row; non-finite numbers become `null`.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row).map_err(|e| Error::Parse(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Jsonl => self.to_jsonl(),
        }
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        let text = self.render(format)?;
        write_text(path, &text)
    }

    /// Rows of one scheme at one sweep value.
    pub fn select(&self, scheme: Scheme, sweep_value: f64) -> impl Iterator<Item = &Row> {
        self.rows
            .iter()
            .filter(move |r| r.scheme == scheme && r.sweep_value == sweep_value)
    }

    /// Mean sum rate over non-failed rows, `None` when there are none.
    pub fn mean_sum_rate(&self, scheme: Scheme, sweep_value: f64) -> Option<f64> {
        let (sum, n) = self
            .select(scheme, sweep_value)
            .filter(|r| !r.failed())
            .fold((0.0, 0usize), |(s, n), r| (s + r.sum_rate, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Distinct sweep values in ascending order.
    pub fn sweep_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.sweep_value).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Nine significant digits, `%.9g` style: fixed notation for exponents in
/// `[-5, 9)`, scientific otherwise, trailing zeros dropped.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
