use std::fs::OpenOptions;
use std::path::Path;

use super::DataError;
use crate::metrics::EvalReport;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `report` as pretty JSON to `json_path` (overwriting) and, if
/// given, appends it as a row to `csv_path`, writing the header only when
/// the file is new or empty.
pub fn persist_report(report: &EvalReport, json_path: &Path, csv_path: Option<&Path>) -> Result<(), DataError> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    std::fs::write(json_path, text).map_err(io_err(json_path))?;
    if let Some(csv_path) = csv_path {
        let fresh = std::fs::metadata(csv_path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(csv_path)
            .map_err(io_err(csv_path))?;
        let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        w.serialize(report)?;
        w.flush().map_err(io_err(csv_path))?;
    }
    Ok(())
}

/// Writes all `reports` to a fresh CSV with one header line.
pub fn write_reports_csv(reports: &[EvalReport], path: &Path) -> Result<(), DataError> {
    write_rows_csv(reports, path)
}

/// Any flat serializable rows to a fresh CSV.
pub fn write_rows_csv<T: serde::Serialize>(rows: &[T], path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), DataError> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Sign, TripletGroup};
    use crate::metrics::{F1Variant, ReportMeta};

    fn report(k: f64) -> EvalReport {
        use Sign::*;
        use TripletGroup::*;
        let meta = ReportMeta {
            dataset: "toy".into(),
            seed: 3,
            k_policy: format!("fixed:{k}"),
            k_value: Some(k),
            model: "dd-sgcn".into(),
            epochs: 10,
            mu: 0.01,
            eta: 0.001,
            f1_variant: F1Variant::Binary,
        };
        EvalReport::build(
            meta,
            &[Positive, Negative, Positive],
            &[Positive, Negative, Negative],
            &[HH, HT, HH],
            Some((&[0.7, 0.2, 0.6], &[0.6, 0.1, 0.5])),
        )
        .unwrap()
    }

    #[test]
    fn json_is_byte_identical_and_keeps_null_tt() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        persist_report(&report(6.0), &a, None).unwrap();
        persist_report(&report(6.0), &b, None).unwrap();
        let ta = std::fs::read(&a).unwrap();
        assert_eq!(ta, std::fs::read(&b).unwrap());
        let v: serde_json::Value = serde_json::from_slice(&ta).unwrap();
        assert!(v["acc_tt"].is_null());
        assert_eq!(v["count_tt"], 0);
        for key in ["dataset", "seed", "K_policy", "auc", "f1", "acc_hh", "acc_ht", "acc_tt", "acc_dot_t", "delta_dsp", "epochs", "mu", "eta"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn csv_header_written_once() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("sweep.csv");
        for k in [6.0, 15.0, 30.0, 50.0] {
            persist_report(&report(k), &dir.path().join(format!("k{k}.json")), Some(&csv_path)).unwrap();
        }
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("dataset,seed,K_policy,auc,f1"));
        assert_eq!(text.matches("K_policy").count(), 1);

        let fresh = dir.path().join("all.csv");
        let reports: Vec<_> = [6.0, 15.0].iter().map(|&k| report(k)).collect();
        write_reports_csv(&reports, &fresh).unwrap();
        let mut r = csv::Reader::from_path(&fresh).unwrap();
        let rows: Vec<EvalReport> = r.deserialize().collect::<Result<_, _>>().unwrap();
        assert_eq!(rows, reports);
    }
}
