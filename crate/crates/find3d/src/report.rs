//! Serialized outputs: evaluation reports, loss history, query results.

use std::path::Path;

use find3d_core::bench::EvalReport;
use find3d_core::query::QueryResult;
use find3d_core::train::EpochRecord;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wire form of a query result, shared by `segment` output and the HTTP
/// service so both produce the same bytes for the same inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryJson {
    pub queries: Vec<String>,
    /// One row per point, one column per query.
    pub scores: Vec<Vec<f32>>,
    pub assignment: Vec<i32>,
    pub max_score: Vec<f32>,
}

impl From<&QueryResult> for QueryJson {
    fn from(r: &QueryResult) -> Self {
        Self {
            queries: r.queries.clone(),
            scores: (0..r.scores.rows()).map(|i| r.scores.row(i).to_vec()).collect(),
            assignment: r.assignment.clone(),
            max_score: r.max_scores(),
        }
    }
}

impl QueryJson {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("query result serializes")
    }
}

fn to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>, header: &[&str]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// One `category,object,part,iou` row per scored part.
pub fn report_csv(report: &EvalReport) -> String {
    let rows = report
        .objects
        .iter()
        .flat_map(|o| o.parts.iter().map(move |p| (&o.category, &o.object_id, &p.part, p.iou)));
    to_csv(rows, &["category", "object", "part", "iou"])
}

pub fn report_json(report: &EvalReport) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(report).expect("report serializes");
    v.push(b'\n');
    v
}

/// Writes `<stem>.json` and `<stem>.csv`.
pub fn write_report(stem: &Path, report: &EvalReport) -> Result<()> {
    let json = stem.with_extension("json");
    std::fs::write(&json, report_json(report)).map_err(Error::io(&json))?;
    let csv = stem.with_extension("csv");
    std::fs::write(&csv, report_csv(report)).map_err(Error::io(&csv))
}

/// `epoch,lr,train_loss,val_loss,skipped_labels`; a missing validation loss
/// is an empty field.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let rows = history.iter().map(|r| (r.epoch, r.lr, r.train_loss, r.val_loss, r.skipped_labels));
    to_csv(rows, &["epoch", "lr", "train_loss", "val_loss", "skipped_labels"])
}

#[cfg(test)]
mod tests {
    use super::*;
    use find3d_core::bench::{ObjectScore, PartScore, RotationMode};
    use find3d_core::Mat;

    #[test]
    fn csv_rows_and_quoting() {
        let report = EvalReport {
            template: "{part}".into(),
            rotation: RotationMode::Canonical,
            seed: 0,
            objects: vec![ObjectScore {
                object_id: "o1".into(),
                category: "mug".into(),
                parts: vec![PartScore { part: "rim, top".into(), iou: 0.5 }, PartScore { part: "body".into(), iou: 1.0 }],
                miou: 0.75,
            }],
            categories: vec![],
            overall: 0.75,
        };
        assert_eq!(report_csv(&report), "category,object,part,iou\nmug,o1,\"rim, top\",0.5\nmug,o1,body,1.0\n");
        let v: serde_json::Value = serde_json::from_slice(&report_json(&report)).unwrap();
        assert_eq!(v["rotation"], "canonical");
        assert_eq!(v["template"], "{part}");
    }

    #[test]
    fn history_leaves_missing_val_empty() {
        let h = vec![
            EpochRecord { epoch: 0, lr: 0.5, train_loss: 1.25, val_loss: Some(2.0), skipped_labels: 3 },
            EpochRecord { epoch: 1, lr: 0.25, train_loss: 1.0, val_loss: None, skipped_labels: 0 },
        ];
        assert_eq!(history_csv(&h), "epoch,lr,train_loss,val_loss,skipped_labels\n0,0.5,1.25,2.0,3\n1,0.25,1.0,,0\n");
    }

    #[test]
    fn query_json_fields() {
        let r = QueryResult {
            queries: vec!["a".into(), "b".into()],
            scores: Mat::from_vec(2, 2, vec![0.5, -0.25, -1.0, -0.5]).unwrap(),
            assignment: vec![0, -1],
        };
        let q = QueryJson::from(&r);
        assert_eq!(q.max_score, vec![0.5, -0.5]);
        let text = String::from_utf8(q.to_bytes()).unwrap();
        assert_eq!(text, r#"{"queries":["a","b"],"scores":[[0.5,-0.25],[-1.0,-0.5]],"assignment":[0,-1],"max_score":[0.5,-0.5]}"#);
    }
}
