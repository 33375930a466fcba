//! Report files. Everything under `data` and every CSV row depends only on
//! the resolved config; wall time and version live in `provenance`.
//!
//! Files are written into a staging directory and moved into place only once
//! all of them succeeded, so a failed run leaves no partial outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use kljn_core::circuits::Bit;
use kljn_core::noisegen::DEFAULT_OVERSAMPLE;
use kljn_core::protocol::Classification;
use serde::Serialize;

use crate::campaign::{BerFit, Campaign, PointSummary, ScalingReport, SecurityRow};
use crate::config::ExperimentConfig;
use crate::error::CliResult;

/// Column order of `records.csv`.
pub const RECORD_COLUMNS: [&str; 16] = [
    "point",
    "value",
    "bep_index",
    "alice_bit",
    "bob_bit",
    "classification",
    "kept",
    "scored",
    "defense_discard",
    "alice_inferred_bob",
    "bob_inferred_alice",
    "error",
    "leak_raw",
    "leak_statistic",
    "ms_u",
    "ms_i",
];

/// Column order of `verdicts.csv`.
pub const VERDICT_COLUMNS: [&str; 9] =
    ["point", "bep_index", "attack", "guess", "truth", "correct", "confidence", "statistic", "forced"];

#[derive(Debug, Serialize)]
pub struct ReportData<'a> {
    pub scenario: &'a str,
    pub parameter: Option<&'a str>,
    pub points: Vec<&'a PointSummary>,
    pub scaling: Option<&'a ScalingReport>,
    pub ber_fit: Option<&'a BerFit>,
    pub security: &'a [SecurityRow],
}

#[derive(Debug, Serialize)]
pub struct Provenance<'a> {
    pub config: &'a ExperimentConfig,
    pub config_toml: String,
    pub seed: u64,
    pub code_version: &'static str,
    pub wall_time_s: f64,
    pub sample_rate_note: String,
}

#[derive(Debug, Serialize)]
pub struct Report<'a, D: Serialize> {
    pub data: D,
    pub provenance: Provenance<'a>,
}

pub fn provenance(cfg: &ExperimentConfig, wall: Duration) -> Provenance<'_> {
    Provenance {
        config: cfg,
        config_toml: cfg.to_toml(),
        seed: cfg.seed,
        code_version: env!("CARGO_PKG_VERSION"),
        wall_time_s: wall.as_secs_f64(),
        sample_rate_note: header_line(cfg),
    }
}

/// Parameter line repeated at the top of every CSV file.
pub fn header_line(cfg: &ExperimentConfig) -> String {
    let k = &cfg.kljn;
    format!(
        "# scenario={} seed={} r_l={} r_h={} bandwidth={} sample_rate={} tau={}",
        cfg.scenario.name(),
        cfg.seed,
        k.r_l,
        k.r_h,
        k.bandwidth,
        2.0 * DEFAULT_OVERSAMPLE * k.bandwidth,
        k.tau
    )
}

fn bit(b: Bit) -> &'static str {
    match b {
        Bit::L => "L",
        Bit::H => "H",
    }
}

fn class(c: Classification) -> &'static str {
    match c {
        Classification::LlLevel => "LL",
        Classification::MidLevel => "MID",
        Classification::HhLevel => "HH",
        Classification::Abort => "ABORT",
    }
}

fn side(s: kljn_core::Side) -> &'static str {
    match s {
        kljn_core::Side::Alice => "alice",
        kljn_core::Side::Bob => "bob",
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header_comment: &str, columns: &[&str], rows: impl Iterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut buf = format!("{header_comment}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(columns)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

pub fn records_csv(c: &Campaign) -> CliResult<Vec<u8>> {
    let rows = c.points.iter().enumerate().flat_map(|(p, point)| {
        point.outcomes.iter().map(move |o| {
            let r = &o.record;
            vec![
                p.to_string(),
                opt(point.value),
                r.index.to_string(),
                bit(r.alice_bit).into(),
                bit(r.bob_bit).into(),
                class(r.classification).into(),
                r.kept.to_string(),
                o.scored.to_string(),
                r.defense_discard.to_string(),
                opt(r.alice_inferred_bob.map(bit)),
                opt(r.bob_inferred_alice.map(bit)),
                r.error.to_string(),
                r.leak_raw.to_string(),
                r.leak_statistic.to_string(),
                r.ms_u.to_string(),
                r.ms_i.to_string(),
            ]
        })
    });
    csv_bytes(&header_line(&c.config), &RECORD_COLUMNS, rows)
}

pub fn verdicts_csv(c: &Campaign) -> CliResult<Vec<u8>> {
    let rows = c.points.iter().enumerate().flat_map(|(p, point)| {
        point.outcomes.iter().filter(|o| o.scored).flat_map(move |o| {
            o.verdicts.iter().map(move |v| {
                vec![
                    p.to_string(),
                    v.bep_index.to_string(),
                    v.kind.name().into(),
                    side(v.guess).into(),
                    side(o.truth).into(),
                    (v.guess == o.truth).to_string(),
                    v.confidence.to_string(),
                    v.statistic.to_string(),
                    v.forced.to_string(),
                ]
            })
        })
    });
    csv_bytes(&header_line(&c.config), &VERDICT_COLUMNS, rows)
}

/// Plot-ready `value,q_hat` series of the swept primary attack.
pub fn series_csv(c: &Campaign) -> CliResult<Option<Vec<u8>>> {
    let (Some(param), Some(scaling)) = (c.parameter, &c.scaling) else {
        return Ok(None);
    };
    let rows = c.points.iter().filter_map(|p| {
        let q = p.summary.attacks.get(&scaling.attack)?;
        Some(vec![opt(p.value), q.estimate.q_hat.to_string()])
    });
    csv_bytes(&header_line(&c.config), &[param.name(), "q_hat"], rows).map(Some)
}

pub fn report_data(c: &Campaign) -> ReportData<'_> {
    ReportData {
        scenario: c.config.scenario.name(),
        parameter: c.parameter.map(|p| p.name()),
        points: c.points.iter().map(|p| &p.summary).collect(),
        scaling: c.scaling.as_ref(),
        ber_fit: c.ber_fit.as_ref(),
        security: &c.security,
    }
}

pub fn report_json<D: Serialize>(data: D, prov: Provenance<'_>) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(&Report { data, provenance: prov })
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

/// Files staged for one output directory.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Self {
        OutputSet { dir: dir.to_path_buf(), files: Vec::new() }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Write everything to a staging directory, then rename into place.
    pub fn commit(self) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let staging = self.dir.join(format!(".staging-{}", std::process::id()));
        let result = (|| -> CliResult<Vec<PathBuf>> {
            fs::create_dir_all(&staging)?;
            for (name, bytes) in &self.files {
                fs::write(staging.join(name), bytes)?;
            }
            let mut written = Vec::new();
            for (name, _) in &self.files {
                let dst = self.dir.join(name);
                fs::rename(staging.join(name), &dst)?;
                written.push(dst);
            }
            Ok(written)
        })();
        let _ = fs::remove_dir_all(&staging);
        result
    }
}

/// All files of a campaign.
pub fn campaign_outputs(c: &Campaign, dir: &Path, wall: Duration) -> CliResult<OutputSet> {
    let mut set = OutputSet::new(dir);
    set.add("records.csv", records_csv(c)?);
    set.add("verdicts.csv", verdicts_csv(c)?);
    if let Some(s) = series_csv(c)? {
        set.add("series.csv", s);
    }
    set.add("config.toml", c.config.to_toml().into_bytes());
    set.add("report.json", report_json(report_data(c), provenance(&c.config, wall))?);
    Ok(set)
}

/// `data` section alone, serialized; the determinism contract covers these bytes.
pub fn data_section(c: &Campaign) -> CliResult<String> {
    serde_json::to_string_pretty(&report_data(c)).map_err(|e| std::io::Error::other(e.to_string()).into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::run_campaign;
    use crate::config::Scenario;

    fn small() -> Campaign {
        let mut cfg = ExperimentConfig::for_scenario(Scenario::KljnWire);
        cfg.beps = 30;
        cfg.kljn.r_wire = 100.0;
        run_campaign(&cfg).unwrap()
    }

    #[test]
    fn record_csv_has_fixed_columns_and_header() {
        let c = small();
        let text = String::from_utf8(records_csv(&c).unwrap()).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# scenario=kljn_wire seed=1 r_l=1000 r_h=9000"));
        assert_eq!(lines.next().unwrap(), RECORD_COLUMNS.join(","));
        assert_eq!(lines.count(), 30);
    }

    #[test]
    fn verdict_rows_match_scored_beps() {
        let c = small();
        let text = String::from_utf8(verdicts_csv(&c).unwrap()).unwrap();
        let scored: usize = c.points[0].outcomes.iter().filter(|o| o.scored).map(|o| o.verdicts.len()).sum();
        assert_eq!(text.lines().count(), scored + 2);
    }

    #[test]
    fn commit_writes_all_and_leaves_no_staging() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = OutputSet::new(dir.path());
        set.add("a.txt", b"x".to_vec());
        set.add("b.txt", b"y".to_vec());
        let written = set.commit().unwrap();
        assert_eq!(written.len(), 2);
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 2);
    }

    #[test]
    fn report_separates_data_and_provenance() {
        let c = small();
        let bytes = report_json(report_data(&c), provenance(&c.config, Duration::from_millis(5))).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert!(v["data"]["points"].is_array());
        assert_eq!(v["provenance"]["seed"], 1);
        let echoed = ExperimentConfig::from_toml(v["provenance"]["config_toml"].as_str().unwrap()).unwrap();
        assert_eq!(echoed, c.config);
    }
}
