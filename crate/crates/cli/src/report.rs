//! Report serialization. CSV uses `,` separators, `.` decimals, LF line
//! endings, 17 significant digits and `# key=value` metadata lines; JSON
//! writes non-finite numbers as `null`. Both formats read back exactly.

use serde::{Deserialize, Deserializer, Serialize};
use twostage::asymptotics::MseRatioRow;
use twostage::simharness::{MethodSummary, ReportMetadata, SimulationReport};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Scientific notation with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn parse_f64(s: &str, what: &str) -> CliResult<f64> {
    s.trim().parse::<f64>().map_err(|_| CliError::config(format!("{what}: `{s}` is not a number")))
}

fn parse_int<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<T> {
    s.trim().parse::<T>().map_err(|_| CliError::config(format!("{what}: `{s}` is not an integer")))
}

/// A parsed CSV report: metadata pairs, header and data rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut table = CsvTable::default();
        let mut have_header = false;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta
                    .trim_start()
                    .split_once('=')
                    .ok_or_else(|| CliError::config(format!("line {}: metadata without `=`", i + 1)))?;
                table.metadata.push((k.to_string(), v.to_string()));
                continue;
            }
            let cells: Vec<String> = line.split(',').map(str::to_string).collect();
            if !have_header {
                table.header = cells;
                have_header = true;
            } else if cells.len() != table.header.len() {
                return Err(CliError::config(format!(
                    "line {}: expected {} fields, found {}",
                    i + 1,
                    table.header.len(),
                    cells.len()
                )));
            } else {
                table.rows.push(cells);
            }
        }
        if !have_header {
            return Err(CliError::config("report has no header line"));
        }
        Ok(table)
    }

    fn meta(&self, key: &str) -> CliResult<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CliError::config(format!("metadata `{key}` missing")))
    }

    fn expect_header(&self, want: &[&str]) -> CliResult<()> {
        if self.header != want {
            return Err(CliError::config(format!("unexpected header `{}`", self.header.join(","))));
        }
        Ok(())
    }
}

const SIM_HEADER: [&str; 6] = ["method", "empirical_fwer", "fwer_se", "power", "power_se", "mean_F"];

pub fn simulation_csv(r: &SimulationReport) -> String {
    let m = &r.metadata;
    CsvTable {
        metadata: vec![
            ("scenario".into(), m.scenario.clone()),
            ("seed".into(), m.seed.to_string()),
            ("m".into(), m.m.to_string()),
            ("reps".into(), m.reps.to_string()),
            ("n".into(), m.n.to_string()),
            ("sigma".into(), fmt_f64(m.sigma)),
            ("alpha".into(), fmt_f64(m.alpha)),
            ("renormalized".into(), m.renormalized.to_string()),
            ("raw_proportion_sum".into(), fmt_f64(m.raw_proportion_sum)),
            ("methods".into(), m.methods.join(";")),
        ],
        header: SIM_HEADER.iter().map(|s| s.to_string()).collect(),
        rows: r
            .methods
            .iter()
            .map(|s| {
                vec![
                    s.method.clone(),
                    fmt_f64(s.empirical_fwer),
                    fmt_f64(s.fwer_se),
                    fmt_f64(s.power),
                    fmt_f64(s.power_se),
                    fmt_f64(s.mean_f),
                ]
            })
            .collect(),
    }
    .render()
}

pub fn read_simulation_csv(text: &str) -> CliResult<SimulationReport> {
    let t = CsvTable::parse(text)?;
    t.expect_header(&SIM_HEADER)?;
    let methods_meta = t.meta("methods")?;
    let metadata = ReportMetadata {
        seed: parse_int(t.meta("seed")?, "seed")?,
        m: parse_int(t.meta("m")?, "m")?,
        reps: parse_int(t.meta("reps")?, "reps")?,
        n: parse_int(t.meta("n")?, "n")?,
        sigma: parse_f64(t.meta("sigma")?, "sigma")?,
        alpha: parse_f64(t.meta("alpha")?, "alpha")?,
        scenario: t.meta("scenario")?.to_string(),
        renormalized: parse_int(t.meta("renormalized")?, "renormalized")?,
        raw_proportion_sum: parse_f64(t.meta("raw_proportion_sum")?, "raw_proportion_sum")?,
        methods: if methods_meta.is_empty() { Vec::new() } else { methods_meta.split(';').map(str::to_string).collect() },
    };
    let methods = t
        .rows
        .iter()
        .map(|r| {
            Ok(MethodSummary {
                method: r[0].clone(),
                empirical_fwer: parse_f64(&r[1], "empirical_fwer")?,
                fwer_se: parse_f64(&r[2], "fwer_se")?,
                power: parse_f64(&r[3], "power")?,
                power_se: parse_f64(&r[4], "power_se")?,
                mean_f: parse_f64(&r[5], "mean_F")?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(SimulationReport { metadata, methods })
}

fn nan_if_null<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Serialize, Deserialize)]
struct MethodJson {
    method: String,
    #[serde(deserialize_with = "nan_if_null")]
    empirical_fwer: f64,
    #[serde(deserialize_with = "nan_if_null")]
    fwer_se: f64,
    #[serde(deserialize_with = "nan_if_null")]
    power: f64,
    #[serde(deserialize_with = "nan_if_null")]
    power_se: f64,
    #[serde(rename = "mean_F", deserialize_with = "nan_if_null")]
    mean_f: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationJson {
    metadata: ReportMetadata,
    methods: Vec<MethodJson>,
}

pub fn simulation_json(r: &SimulationReport) -> String {
    let doc = SimulationJson {
        metadata: r.metadata.clone(),
        methods: r
            .methods
            .iter()
            .map(|s| MethodJson {
                method: s.method.clone(),
                empirical_fwer: s.empirical_fwer,
                fwer_se: s.fwer_se,
                power: s.power,
                power_se: s.power_se,
                mean_f: s.mean_f,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    text
}

pub fn read_simulation_json(text: &str) -> CliResult<SimulationReport> {
    let doc: SimulationJson = serde_json::from_str(text).map_err(|e| CliError::config(format!("report: {e}")))?;
    Ok(SimulationReport {
        metadata: doc.metadata,
        methods: doc
            .methods
            .into_iter()
            .map(|m| MethodSummary {
                method: m.method,
                empirical_fwer: m.empirical_fwer,
                fwer_se: m.fwer_se,
                power: m.power,
                power_se: m.power_se,
                mean_f: m.mean_f,
            })
            .collect(),
    })
}

/// Parameters of an MSE-ratio run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseRatioMetadata {
    pub seed: u64,
    pub preset: Option<String>,
    pub gamma: String,
    pub beta: String,
    pub c: f64,
    pub delta: f64,
    pub reps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MseRatioReport {
    pub metadata: MseRatioMetadata,
    pub rows: Vec<MseRatioRow>,
}

const MSE_HEADER: [&str; 5] = ["n", "ratio", "mc_se", "K_at_n", "filter_freq"];

pub fn mse_ratio_csv(r: &MseRatioReport) -> String {
    let m = &r.metadata;
    CsvTable {
        metadata: vec![
            ("preset".into(), m.preset.clone().unwrap_or_default()),
            ("gamma".into(), m.gamma.clone()),
            ("beta".into(), m.beta.clone()),
            ("c".into(), fmt_f64(m.c)),
            ("delta".into(), fmt_f64(m.delta)),
            ("reps".into(), m.reps.to_string()),
            ("seed".into(), m.seed.to_string()),
        ],
        header: MSE_HEADER.iter().map(|s| s.to_string()).collect(),
        rows: r
            .rows
            .iter()
            .map(|x| vec![x.n.to_string(), fmt_f64(x.ratio), fmt_f64(x.mc_se), fmt_f64(x.k_at_n), fmt_f64(x.filter_freq)])
            .collect(),
    }
    .render()
}

pub fn read_mse_ratio_csv(text: &str) -> CliResult<MseRatioReport> {
    let t = CsvTable::parse(text)?;
    t.expect_header(&MSE_HEADER)?;
    let preset = t.meta("preset")?;
    let metadata = MseRatioMetadata {
        seed: parse_int(t.meta("seed")?, "seed")?,
        preset: (!preset.is_empty()).then(|| preset.to_string()),
        gamma: t.meta("gamma")?.to_string(),
        beta: t.meta("beta")?.to_string(),
        c: parse_f64(t.meta("c")?, "c")?,
        delta: parse_f64(t.meta("delta")?, "delta")?,
        reps: parse_int(t.meta("reps")?, "reps")?,
    };
    let rows = t
        .rows
        .iter()
        .map(|r| {
            Ok(MseRatioRow {
                n: parse_int(&r[0], "n")?,
                ratio: parse_f64(&r[1], "ratio")?,
                mc_se: parse_f64(&r[2], "mc_se")?,
                k_at_n: parse_f64(&r[3], "K_at_n")?,
                filter_freq: parse_f64(&r[4], "filter_freq")?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(MseRatioReport { metadata, rows })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MseRowJson {
    n: u64,
    #[serde(deserialize_with = "nan_if_null")]
    ratio: f64,
    #[serde(deserialize_with = "nan_if_null")]
    mc_se: f64,
    #[serde(rename = "K_at_n", deserialize_with = "nan_if_null")]
    k_at_n: f64,
    #[serde(deserialize_with = "nan_if_null")]
    filter_freq: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MseRatioJson {
    metadata: MseRatioMetadata,
    rows: Vec<MseRowJson>,
}

pub fn mse_ratio_json(r: &MseRatioReport) -> String {
    let doc = MseRatioJson {
        metadata: r.metadata.clone(),
        rows: r
            .rows
            .iter()
            .map(|x| MseRowJson { n: x.n, ratio: x.ratio, mc_se: x.mc_se, k_at_n: x.k_at_n, filter_freq: x.filter_freq })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    text
}

pub fn read_mse_ratio_json(text: &str) -> CliResult<MseRatioReport> {
    let doc: MseRatioJson = serde_json::from_str(text).map_err(|e| CliError::config(format!("report: {e}")))?;
    Ok(MseRatioReport {
        metadata: doc.metadata,
        rows: doc
            .rows
            .into_iter()
            .map(|x| MseRatioRow { n: x.n, ratio: x.ratio, mc_se: x.mc_se, k_at_n: x.k_at_n, filter_freq: x.filter_freq })
            .collect(),
    })
}
