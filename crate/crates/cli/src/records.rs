//! Self-describing result records and their CSV encoding. Every record can be
//! re-run from its own fields: instance descriptor, method, config echo, seed.
//! Files start with comment-prefixed preamble lines echoing the run config;
//! parsers skip them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context};

pub const RESULT_COLUMNS: [&str; 21] = [
    "experiment",
    "instance",
    "method",
    "status",
    "n",
    "sweeps",
    "lr",
    "seed",
    "iterations",
    "stop_reason",
    "wall_seconds",
    "mre",
    "kl",
    "delta_lambda",
    "neff",
    "neff_ratio",
    "entropy",
    "unique_profiles",
    "gini",
    "heldout_tables",
    "log10_space",
];

/// One solver run. Optional metrics stay `None` when not applicable
/// (e.g. KL above the enumeration budget).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultRecord {
    pub experiment: String,
    pub instance: String,
    pub method: String,
    pub status: String,
    pub n: Option<usize>,
    pub sweeps: Option<usize>,
    pub lr: Option<f64>,
    pub seed: u64,
    pub iterations: Option<usize>,
    pub stop_reason: String,
    pub wall_seconds: Option<f64>,
    pub mre: Option<f64>,
    pub kl: Option<f64>,
    pub delta_lambda: Option<f64>,
    pub neff: Option<f64>,
    pub neff_ratio: Option<f64>,
    pub entropy: Option<f64>,
    pub unique_profiles: Option<usize>,
    pub gini: Option<f64>,
    /// `label:value` pairs joined by ';'.
    pub heldout_tables: BTreeMap<String, f64>,
    pub log10_space: Option<f64>,
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultRecord {
    pub fn csv_row(&self) -> String {
        let heldout = self
            .heldout_tables
            .iter()
            .map(|(k, v)| format!("{k}:{v:.17e}"))
            .collect::<Vec<_>>()
            .join(";");
        [
            self.experiment.clone(),
            self.instance.clone(),
            self.method.clone(),
            self.status.clone(),
            fmt_opt_usize(self.n),
            fmt_opt_usize(self.sweeps),
            fmt_opt_f64(self.lr),
            self.seed.to_string(),
            fmt_opt_usize(self.iterations),
            self.stop_reason.clone(),
            fmt_opt_f64(self.wall_seconds),
            fmt_opt_f64(self.mre),
            fmt_opt_f64(self.kl),
            fmt_opt_f64(self.delta_lambda),
            fmt_opt_f64(self.neff),
            fmt_opt_f64(self.neff_ratio),
            fmt_opt_f64(self.entropy),
            fmt_opt_usize(self.unique_profiles),
            fmt_opt_f64(self.gini),
            heldout,
            fmt_opt_f64(self.log10_space),
        ]
        .join(",")
    }

    pub fn parse_row(line: &str) -> anyhow::Result<ResultRecord> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != RESULT_COLUMNS.len() {
            bail!(
                "record has {} fields, expected {}",
                fields.len(),
                RESULT_COLUMNS.len()
            );
        }
        let opt_f64 = |s: &str| -> anyhow::Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse().context("bad float field")?))
            }
        };
        let opt_usize = |s: &str| -> anyhow::Result<Option<usize>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse().context("bad integer field")?))
            }
        };
        let mut heldout = BTreeMap::new();
        if !fields[19].is_empty() {
            for pair in fields[19].split(';') {
                let (k, v) = pair
                    .split_once(':')
                    .context("bad heldout pair")?;
                heldout.insert(k.to_string(), v.parse()?);
            }
        }
        Ok(ResultRecord {
            experiment: fields[0].to_string(),
            instance: fields[1].to_string(),
            method: fields[2].to_string(),
            status: fields[3].to_string(),
            n: opt_usize(fields[4])?,
            sweeps: opt_usize(fields[5])?,
            lr: opt_f64(fields[6])?,
            seed: fields[7].parse().context("bad seed")?,
            iterations: opt_usize(fields[8])?,
            stop_reason: fields[9].to_string(),
            wall_seconds: opt_f64(fields[10])?,
            mre: opt_f64(fields[11])?,
            kl: opt_f64(fields[12])?,
            delta_lambda: opt_f64(fields[13])?,
            neff: opt_f64(fields[14])?,
            neff_ratio: opt_f64(fields[15])?,
            entropy: opt_f64(fields[16])?,
            unique_profiles: opt_usize(fields[17])?,
            gini: opt_f64(fields[18])?,
            heldout_tables: heldout,
            log10_space: opt_f64(fields[20])?,
        })
    }
}

/// Render records as CSV with a config-echo preamble.
pub fn write_result_csv(preamble: &[(String, String)], records: &[ResultRecord]) -> String {
    let mut out = String::new();
    for (k, v) in preamble {
        writeln!(out, "# {k}={v}").unwrap();
    }
    writeln!(out, "{}", RESULT_COLUMNS.join(",")).unwrap();
    for r in records {
        writeln!(out, "{}", r.csv_row()).unwrap();
    }
    out
}

/// Parse a result CSV, skipping preamble comments.
pub fn parse_result_csv(text: &str) -> anyhow::Result<Vec<ResultRecord>> {
    let mut records = Vec::new();
    let mut saw_header = false;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != RESULT_COLUMNS.join(",") {
                bail!("unexpected header: {line}");
            }
            saw_header = true;
            continue;
        }
        records.push(ResultRecord::parse_row(line)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trips_through_csv() {
        let mut r = ResultRecord {
            experiment: "a0".into(),
            instance: "wu-a0-s1".into(),
            method: "pcd".into(),
            status: "ok".into(),
            n: Some(10_000),
            sweeps: Some(3),
            lr: Some(0.05),
            seed: 11,
            iterations: Some(159),
            stop_reason: "stopping-rule".into(),
            wall_seconds: Some(3.25),
            mre: Some(0.030123456789),
            kl: Some(4.04e-4),
            delta_lambda: None,
            neff: Some(10_000.0),
            neff_ratio: Some(1.0),
            entropy: Some(4.871),
            unique_profiles: Some(213),
            gini: Some(0.0),
            heldout_tables: BTreeMap::new(),
            log10_space: Some(2.334),
        };
        r.heldout_tables.insert("T1".into(), 0.349);
        r.heldout_tables.insert("T2".into(), 0.169);
        let text = write_result_csv(&[("seed".into(), "11".into())], &[r.clone()]);
        let back = parse_result_csv(&text).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], r);
    }

    #[test]
    fn empty_fields_stay_none() {
        let r = ResultRecord {
            experiment: "x".into(),
            instance: "i".into(),
            method: "exact".into(),
            status: "ok".into(),
            seed: 0,
            stop_reason: "converged".into(),
            ..Default::default()
        };
        let text = write_result_csv(&[], &[r.clone()]);
        let back = parse_result_csv(&text).unwrap();
        assert_eq!(back[0], r);
        assert_eq!(back[0].mre, None);
    }
}
