//! Metrics table: one row per scenario and direction, metrics at three
//! decimals, `NA` where a metric is undefined.

use std::io::{Read, Write};
use std::path::Path;

use aerotraffic_core::eval::Milli;
use aerotraffic_core::{Band, MetricsRecord, ScenarioId};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const NA: &str = "NA";

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    height: f64,
    azimuth: f64,
    band: Band,
    direction: String,
    #[serde(rename = "TP")]
    tp: u64,
    #[serde(rename = "FP")]
    fp: u64,
    #[serde(rename = "FN")]
    fn_: u64,
    precision: String,
    recall: String,
    #[serde(rename = "F1")]
    f1: String,
}

fn cell(m: Option<Milli>) -> String {
    m.map_or_else(|| NA.to_string(), |m| m.to_string())
}

fn row(r: &MetricsRecord) -> Row {
    Row {
        height: r.id.height_ft,
        azimuth: r.id.azimuth_deg,
        band: r.id.band,
        direction: r.id.direction.clone(),
        tp: r.tp,
        fp: r.fp,
        fn_: r.fn_,
        precision: cell(r.precision_milli()),
        recall: cell(r.recall_milli()),
        f1: cell(r.f1_milli()),
    }
}

pub fn write_metrics(out: impl Write, records: &[MetricsRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_file(path: &Path, records: &[MetricsRecord]) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_metrics(file, records).map_err(|e| CliError::format(path, 0, e.to_string()))
}

/// Parse a metrics table. Counts are authoritative; every printed metric
/// must equal the value recomputed from them.
pub fn read_metrics(input: impl Read, path: &Path) -> CliResult<Vec<MetricsRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in rd.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| CliError::format(path, line, e.to_string()))?;
        let rec = MetricsRecord::from_counts(
            ScenarioId {
                height_ft: row.height,
                azimuth_deg: row.azimuth,
                band: row.band,
                direction: row.direction.clone(),
            },
            row.tp,
            row.fp,
            row.fn_,
        );
        let expected = [
            ("precision", cell(rec.precision_milli()), &row.precision),
            ("recall", cell(rec.recall_milli()), &row.recall),
            ("F1", cell(rec.f1_milli()), &row.f1),
        ];
        for (name, want, got) in expected {
            if want != *got {
                return Err(CliError::format(
                    path,
                    line,
                    format!("{name} is {got} but the counts give {want}"),
                ));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_metrics_file(path: &Path) -> CliResult<Vec<MetricsRecord>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_metrics(file, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use aerotraffic_core::eval::{bundled_fixture, fixture_check};
    use proptest::prelude::*;

    fn rec(tp: u64, fp: u64, fn_: u64) -> MetricsRecord {
        MetricsRecord::from_counts(
            ScenarioId {
                height_ft: 100.0,
                azimuth_deg: 45.0,
                band: Band::Ir,
                direction: "north".into(),
            },
            tp,
            fp,
            fn_,
        )
    }

    fn emit(records: &[MetricsRecord]) -> String {
        let mut buf = Vec::new();
        write_metrics(&mut buf, records).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn layout_and_na() {
        let text = emit(&[rec(20, 5, 1), rec(0, 0, 3)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "height,azimuth,band,direction,TP,FP,FN,precision,recall,F1");
        assert_eq!(lines[1], "100.0,45.0,IR,north,20,5,1,0.800,0.952,0.870");
        assert_eq!(lines[2], "100.0,45.0,IR,north,0,0,3,NA,0.000,NA");
    }

    #[test]
    fn fixture_table_round_trips() {
        let report = fixture_check(&bundled_fixture());
        let records = report.records();
        let text = emit(&records);
        assert_eq!(text.lines().count(), 61);
        let back = read_metrics(text.as_bytes(), Path::new("t.csv")).unwrap();
        assert_eq!(back, records);
        for (o, r) in report.outcomes.iter().zip(&back) {
            assert_eq!(o.computed, [r.precision_milli(), r.recall_milli(), r.f1_milli()]);
        }
    }

    #[test]
    fn tampered_metric_rejected() {
        let text = emit(&[rec(20, 5, 1)]).replace("0.870", "0.871");
        let err = read_metrics(text.as_bytes(), Path::new("m.csv")).unwrap_err();
        assert!(matches!(err, CliError::Format { line: 2, .. }), "{err}");
    }

    proptest! {
        #[test]
        fn round_trip(counts in proptest::collection::vec((0u64..300, 0u64..300, 0u64..300), 1..20)) {
            let records: Vec<_> = counts.iter().map(|&(a, b, c)| rec(a, b, c)).collect();
            let back = read_metrics(emit(&records).as_bytes(), Path::new("p.csv")).unwrap();
            prop_assert_eq!(back, records);
        }
    }
}
