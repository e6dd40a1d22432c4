//! Efficiency metrics and run reports.
//!
//! A run directory holds three files:
//!
//! * `generations.csv`: `generation,accuracy,total_synapses,architectural_efficiency`
//!   followed by one `synapses_<layer>` column per parametric layer.
//! * `clusters.csv`: `generation,layer,ancestor_clusters,live_clusters,cluster_efficiency`
//!   with one row per layer plus an `overall` row, for the first and the last
//!   generation. The efficiency cell is empty when a layer has no live cluster.
//! * `summary.json`: run metadata and every generation record in full.
//!
//! Reals are written in Rust's shortest round-trip form, so the CSV files are
//! byte-stable for fixed inputs and parse back exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::synthesis::{GenerationRecord, StopReason};

pub const GENERATIONS_CSV: &str = "generations.csv";
pub const CLUSTERS_CSV: &str = "clusters.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Ancestor synapse count over current synapse count.
pub fn architectural_efficiency(ancestor_count: usize, current_count: usize) -> Result<f64> {
    if current_count == 0 {
        return Err(Error::DegenerateNetwork("current network has no synapses".into()));
    }
    if ancestor_count == 0 {
        return Err(Error::DegenerateNetwork("ancestor network has no synapses".into()));
    }
    Ok(ancestor_count as f64 / current_count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEfficiency {
    pub per_layer: Vec<f64>,
    /// Total ancestor clusters over total live clusters.
    pub overall: f64,
}

pub fn cluster_efficiency(ancestor_clusters: &[usize], live_clusters: &[usize]) -> Result<ClusterEfficiency> {
    if ancestor_clusters.len() != live_clusters.len() {
        return Err(Error::shape("cluster_efficiency", "layer count", ancestor_clusters.len(), live_clusters.len()));
    }
    if let Some(l) = live_clusters.iter().position(|&n| n == 0) {
        return Err(Error::DegenerateNetwork(format!("layer {l} has no live cluster")));
    }
    let (per_layer, overall) = layer_cluster_efficiency(ancestor_clusters, live_clusters);
    Ok(ClusterEfficiency {
        per_layer: per_layer.into_iter().map(|e| e.expect("live count checked")).collect(),
        overall: overall.expect("live count checked"),
    })
}

/// Like [`cluster_efficiency`] but tolerates dead layers: their ratio is
/// `None`, and the overall ratio is `None` only if nothing is alive.
pub fn layer_cluster_efficiency(ancestor_clusters: &[usize], live_clusters: &[usize]) -> (Vec<Option<f64>>, Option<f64>) {
    let per_layer = ancestor_clusters
        .iter()
        .zip(live_clusters)
        .map(|(&a, &l)| (l > 0).then(|| a as f64 / l as f64))
        .collect();
    let total_a: usize = ancestor_clusters.iter().sum();
    let total_l: usize = live_clusters.iter().sum();
    (per_layer, (total_l > 0).then(|| total_a as f64 / total_l as f64))
}

/// Hex SHA-256 of the JSON form of a configuration.
pub fn config_digest<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_vec(config).map_err(|e| Error::Report(format!("config serialization: {e}")))?;
    Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config_digest: String,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
    pub stop_reason: Option<StopReason>,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: RunMetadata,
    pub layer_names: Vec<String>,
    pub ancestor_clusters: Vec<usize>,
    pub records: Vec<GenerationRecord>,
}

impl Report {
    fn validate(&self) -> Result<()> {
        let Some(first) = self.records.first() else {
            return Err(Error::Report("report has no generation records; generation 1 is required".into()));
        };
        if first.generation != 1 {
            return Err(Error::Report(format!("first record is generation {}, expected 1", first.generation)));
        }
        if self.records.windows(2).any(|w| w[1].generation <= w[0].generation) {
            return Err(Error::Report("records are not ordered by generation".into()));
        }
        let n = self.layer_names.len();
        if self.ancestor_clusters.len() != n {
            return Err(Error::Report("ancestor cluster counts do not match the layer list".into()));
        }
        for r in &self.records {
            if r.layer_synapses.len() != n || r.live_clusters.len() != n || r.cluster_efficiency.len() != n {
                return Err(Error::Report(format!("generation {} has the wrong number of layers", r.generation)));
            }
        }
        Ok(())
    }

    pub fn generations_csv(&self) -> Result<String> {
        self.validate()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["generation", "accuracy", "total_synapses", "architectural_efficiency"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.layer_names.iter().map(|n| format!("synapses_{n}")));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![
                r.generation.to_string(),
                r.test_accuracy.to_string(),
                r.total_synapses.to_string(),
                r.architectural_efficiency.to_string(),
            ];
            row.extend(r.layer_synapses.iter().map(|n| n.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn clusters_csv(&self) -> Result<String> {
        self.validate()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["generation", "layer", "ancestor_clusters", "live_clusters", "cluster_efficiency"])
            .map_err(csv_err)?;
        let first = &self.records[0];
        let last = &self.records[self.records.len() - 1];
        let picks: &[&GenerationRecord] = if self.records.len() == 1 { &[first] } else { &[first, last] };
        let cell = |e: Option<f64>| e.map(|v| v.to_string()).unwrap_or_default();
        for r in picks {
            for (l, name) in self.layer_names.iter().enumerate() {
                w.write_record([
                    r.generation.to_string(),
                    name.clone(),
                    self.ancestor_clusters[l].to_string(),
                    r.live_clusters[l].to_string(),
                    cell(r.cluster_efficiency[l]),
                ])
                .map_err(csv_err)?;
            }
            w.write_record([
                r.generation.to_string(),
                "overall".to_string(),
                self.ancestor_clusters.iter().sum::<usize>().to_string(),
                r.live_clusters.iter().sum::<usize>().to_string(),
                cell(r.overall_cluster_efficiency),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn summary_json(&self) -> Result<String> {
        self.validate()?;
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Report(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Report(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `generations.csv`, `clusters.csv` and `summary.json` into `out_dir`,
/// creating it if needed.
pub fn write_report(report: &Report, out_dir: &Path) -> Result<()> {
    let generations = report.generations_csv()?;
    let clusters = report.clusters_csv()?;
    let summary = report.summary_json()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join(GENERATIONS_CSV), &generations)?;
    write_file(&out_dir.join(CLUSTERS_CSV), &clusters)?;
    write_file(&out_dir.join(SUMMARY_JSON), &summary)
}

/// Loads the report stored in a run directory's `summary.json`.
pub fn read_report(dir: &Path) -> Result<Report> {
    let path = dir.join(SUMMARY_JSON);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let report: Report =
        serde_json::from_str(&text).map_err(|e| Error::Report(format!("{}: {e}", path.display())))?;
    report.validate()?;
    Ok(report)
}

/// One parsed row of `generations.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRow {
    pub generation: u32,
    pub accuracy: f64,
    pub total_synapses: usize,
    pub architectural_efficiency: f64,
    pub layer_synapses: Vec<usize>,
}

/// Parses `generations.csv` text; returns the layer names and the rows.
pub fn parse_generations_csv(text: &str) -> Result<(Vec<String>, Vec<GenerationRow>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    if header.len() < 4 {
        return Err(Error::Report("generations.csv: header too short".into()));
    }
    let layers: Vec<String> = header
        .iter()
        .skip(4)
        .map(|h| {
            h.strip_prefix("synapses_")
                .map(str::to_string)
                .ok_or_else(|| Error::Report(format!("generations.csv: unexpected column {h:?}")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| Error::Report(format!("generations.csv row {}: bad value {:?}", line + 1, field(i)));
        rows.push(GenerationRow {
            generation: field(0).parse().map_err(|_| bad(0))?,
            accuracy: field(1).parse().map_err(|_| bad(1))?,
            total_synapses: field(2).parse().map_err(|_| bad(2))?,
            architectural_efficiency: field(3).parse().map_err(|_| bad(3))?,
            layer_synapses: (4..rec.len()).map(|i| field(i).parse().map_err(|_| bad(i))).collect::<Result<_>>()?,
        });
    }
    Ok((layers, rows))
}

/// One parsed row of `clusters.csv`; `layer` is `"overall"` for the aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRow {
    pub generation: u32,
    pub layer: String,
    pub ancestor_clusters: usize,
    pub live_clusters: usize,
    pub cluster_efficiency: Option<f64>,
}

pub fn parse_clusters_csv(text: &str) -> Result<Vec<ClusterRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| Error::Report(format!("clusters.csv row {}: bad value {:?}", line + 1, field(i)));
        rows.push(ClusterRow {
            generation: field(0).parse().map_err(|_| bad(0))?,
            layer: field(1).to_string(),
            ancestor_clusters: field(2).parse().map_err(|_| bad(2))?,
            live_clusters: field(3).parse().map_err(|_| bad(3))?,
            cluster_efficiency: match field(4) {
                "" => None,
                s => Some(s.parse().map_err(|_| bad(4))?),
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Report {
        let ancestor = vec![8, 128, 10];
        let rec = |generation: u32, acc: f64, layers: Vec<usize>, live: Vec<usize>| {
            let total = layers.iter().sum();
            let (ce, overall) = layer_cluster_efficiency(&ancestor, &live);
            GenerationRecord {
                generation,
                test_accuracy: acc,
                architectural_efficiency: architectural_efficiency(4200, total).unwrap(),
                total_synapses: total,
                layer_synapses: layers,
                live_clusters: live,
                cluster_efficiency: ce,
                overall_cluster_efficiency: overall,
                seed: 7,
                train_loss: Some(0.25),
                synthesis: None,
            }
        };
        Report {
            metadata: RunMetadata {
                seed: 42,
                config_digest: "ab".into(),
                started: 1,
                finished: 2,
                stop_reason: Some(StopReason::MaxGenerations),
                config: serde_json::json!({"budget": 0.8}),
            },
            layer_names: vec!["conv1".into(), "conv2".into(), "fc1".into()],
            ancestor_clusters: ancestor.clone(),
            records: vec![
                rec(1, 0.9812, vec![200, 3200, 800], vec![8, 128, 10]),
                rec(2, 0.9790, vec![150, 2500, 700], vec![8, 100, 10]),
                rec(3, 0.1 + 0.2, vec![90, 1500, 0], vec![6, 77, 0]),
            ],
        }
    }

    #[test]
    fn architectural_efficiency_values() {
        assert_eq!(architectural_efficiency(1000, 1000).unwrap(), 1.0);
        assert_eq!(architectural_efficiency(1000, 80).unwrap(), 12.5);
        assert!(matches!(architectural_efficiency(1000, 0), Err(Error::DegenerateNetwork(_))));
    }

    #[test]
    fn cluster_efficiency_by_hand() {
        assert_eq!(cluster_efficiency(&[20], &[5]).unwrap().per_layer, vec![4.0]);
        let same = cluster_efficiency(&[8, 128, 10], &[8, 128, 10]).unwrap();
        assert_eq!(same.per_layer, vec![1.0; 3]);
        assert_eq!(same.overall, 1.0);
        // ratios 2 and 10 average to 6; totals give 110/15
        let e = cluster_efficiency(&[10, 100], &[5, 10]).unwrap();
        assert_eq!(e.per_layer, vec![2.0, 10.0]);
        assert_eq!(e.overall, 110.0 / 15.0);
        assert_ne!(e.overall, 6.0);
        assert!(cluster_efficiency(&[10, 100], &[5, 0]).is_err());
        assert!(cluster_efficiency(&[10], &[5, 1]).is_err());
    }

    #[test]
    fn partial_efficiency_marks_dead_layers() {
        let (per, overall) = layer_cluster_efficiency(&[10, 4], &[5, 0]);
        assert_eq!(per, vec![Some(2.0), None]);
        assert_eq!(overall, Some(14.0 / 5.0));
        assert_eq!(layer_cluster_efficiency(&[3], &[0]).1, None);
    }

    #[test]
    fn golden_csv_files() {
        let r = fixture();
        assert_eq!(
            r.generations_csv().unwrap(),
            "generation,accuracy,total_synapses,architectural_efficiency,synapses_conv1,synapses_conv2,synapses_fc1\n\
             1,0.9812,4200,1,200,3200,800\n\
             2,0.979,3350,1.2537313432835822,150,2500,700\n\
             3,0.30000000000000004,1590,2.641509433962264,90,1500,0\n"
        );
        assert_eq!(
            r.clusters_csv().unwrap(),
            "generation,layer,ancestor_clusters,live_clusters,cluster_efficiency\n\
             1,conv1,8,8,1\n\
             1,conv2,128,128,1\n\
             1,fc1,10,10,1\n\
             1,overall,146,146,1\n\
             3,conv1,8,6,1.3333333333333333\n\
             3,conv2,128,77,1.6623376623376624\n\
             3,fc1,10,0,\n\
             3,overall,146,83,1.7590361445783131\n"
        );
    }

    #[test]
    fn csv_round_trip() {
        let r = fixture();
        let (layers, rows) = parse_generations_csv(&r.generations_csv().unwrap()).unwrap();
        assert_eq!(layers, r.layer_names);
        assert_eq!(rows.len(), r.records.len());
        for (row, rec) in rows.iter().zip(&r.records) {
            assert_eq!(row.generation, rec.generation);
            assert!((row.accuracy - rec.test_accuracy).abs() <= 1e-12);
            assert!((row.architectural_efficiency - rec.architectural_efficiency).abs() <= 1e-12);
            assert_eq!(row.total_synapses, rec.total_synapses);
            assert_eq!(row.layer_synapses, rec.layer_synapses);
        }
        let clusters = parse_clusters_csv(&r.clusters_csv().unwrap()).unwrap();
        let last = r.records.last().unwrap();
        let tail = &clusters[4..];
        for (l, row) in tail.iter().take(3).enumerate() {
            assert_eq!(row.live_clusters, last.live_clusters[l]);
            assert_eq!(row.cluster_efficiency, last.cluster_efficiency[l]);
        }
        assert_eq!(tail[3].cluster_efficiency, last.overall_cluster_efficiency);
    }

    #[test]
    fn write_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let r = fixture();
        write_report(&r, dir.path()).unwrap();
        let back = read_report(dir.path()).unwrap();
        assert_eq!(back, r);
        let first = fs::read(dir.path().join(GENERATIONS_CSV)).unwrap();
        write_report(&back, dir.path()).unwrap();
        assert_eq!(fs::read(dir.path().join(GENERATIONS_CSV)).unwrap(), first);
    }

    #[test]
    fn single_generation_report() {
        let mut r = fixture();
        r.records.truncate(1);
        assert_eq!(r.clusters_csv().unwrap().lines().count(), 5);
        assert_eq!(r.records[0].architectural_efficiency, 1.0);
    }

    #[test]
    fn empty_report_is_rejected() {
        let mut r = fixture();
        r.records.clear();
        assert!(matches!(r.generations_csv(), Err(Error::Report(_))));
        let dir = tempfile::tempdir().unwrap();
        assert!(write_report(&r, dir.path()).is_err());
        assert!(!dir.path().join(GENERATIONS_CSV).exists());
    }

    #[test]
    fn digest_is_stable_hex() {
        let d = config_digest(&serde_json::json!({"a": 1})).unwrap();
        assert_eq!(d.len(), 64);
        assert_eq!(d, config_digest(&serde_json::json!({"a": 1})).unwrap());
        assert_ne!(d, config_digest(&serde_json::json!({"a": 2})).unwrap());
    }
}
