use serde::{Deserialize, Serialize};

use super::{EdgeFormat, IngestStats};

/// Expected shape of a public dataset. `edges` counts signed rows of the
/// published file; `pct_positive` is the positive share of undirected edges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetManifest {
    pub name: &'static str,
    pub nodes: usize,
    pub edges: usize,
    pub pct_positive: f64,
    pub format: EdgeFormat,
    pub file_name: &'static str,
    pub source: &'static str,
    /// Allowed relative deviation of every count.
    pub tolerance: f64,
}

const MANIFESTS: [DatasetManifest; 4] = [
    DatasetManifest {
        name: "bitcoin-alpha",
        nodes: 3_783,
        edges: 24_186,
        pct_positive: 93.7,
        format: EdgeFormat::BitcoinCsv,
        file_name: "soc-sign-bitcoinalpha.csv.gz",
        source: "https://snap.stanford.edu/data/soc-sign-bitcoin-alpha.html",
        tolerance: 0.01,
    },
    DatasetManifest {
        name: "bitcoin-otc",
        nodes: 5_881,
        edges: 35_592,
        pct_positive: 90.9,
        format: EdgeFormat::BitcoinCsv,
        file_name: "soc-sign-bitcoinotc.csv.gz",
        source: "https://snap.stanford.edu/data/soc-sign-bitcoin-otc.html",
        tolerance: 0.01,
    },
    DatasetManifest {
        name: "wikirfa",
        nodes: 11_259,
        edges: 178_096,
        pct_positive: 77.9,
        format: EdgeFormat::Wikirfa,
        file_name: "wiki-RfA.txt.gz",
        source: "https://snap.stanford.edu/data/wiki-RfA.html",
        tolerance: 0.01,
    },
    DatasetManifest {
        name: "slashdot",
        nodes: 82_144,
        edges: 549_202,
        pct_positive: 77.4,
        format: EdgeFormat::Slashdot,
        file_name: "soc-sign-Slashdot090221.txt.gz",
        source: "https://snap.stanford.edu/data/soc-sign-Slashdot090221.html",
        tolerance: 0.01,
    },
];

pub fn builtin_manifests() -> &'static [DatasetManifest] {
    &MANIFESTS
}

pub fn find_manifest(name: &str) -> Option<&'static DatasetManifest> {
    let key = name.to_ascii_lowercase().replace('_', "-");
    MANIFESTS.iter().find(|m| m.name == key)
}

/// Relative deviation of each ingest count from the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCheck {
    pub dataset: String,
    pub tolerance: f64,
    pub nodes: (usize, usize, f64),
    pub edges: (usize, usize, f64),
    pub pct_positive: (f64, f64, f64),
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want
}

impl DatasetManifest {
    pub fn check(&self, stats: &IngestStats) -> ManifestCheck {
        ManifestCheck {
            dataset: self.name.to_string(),
            tolerance: self.tolerance,
            nodes: (stats.nodes, self.nodes, rel(stats.nodes as f64, self.nodes as f64)),
            edges: (stats.signed_rows, self.edges, rel(stats.signed_rows as f64, self.edges as f64)),
            pct_positive: (stats.pct_positive, self.pct_positive, rel(stats.pct_positive, self.pct_positive)),
        }
    }
}

impl ManifestCheck {
    pub fn passes(&self) -> bool {
        self.warnings().is_empty()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.nodes.2 > self.tolerance {
            out.push(format!("node count {} deviates from expected {} by {:.2}%", self.nodes.0, self.nodes.1, 100.0 * self.nodes.2));
        }
        if self.edges.2 > self.tolerance {
            out.push(format!("edge rows {} deviate from expected {} by {:.2}%", self.edges.0, self.edges.1, 100.0 * self.edges.2));
        }
        if self.pct_positive.2 > self.tolerance {
            out.push(format!(
                "positive share {:.2}% deviates from expected {:.1}% by {:.2}% (relative)",
                self.pct_positive.0,
                self.pct_positive.1,
                100.0 * self.pct_positive.2
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        let m = find_manifest("Bitcoin_Alpha").unwrap();
        assert_eq!((m.nodes, m.edges), (3_783, 24_186));
        assert_eq!(builtin_manifests().len(), 4);
        assert!(find_manifest("epinions").is_none());
    }

    #[test]
    fn check_flags_large_deviation() {
        let m = find_manifest("bitcoin-alpha").unwrap();
        let mut st = IngestStats {
            nodes: 3_783,
            signed_rows: 24_186,
            pct_positive: 93.6,
            ..IngestStats::default()
        };
        assert!(m.check(&st).passes());
        st.nodes = 3_700;
        let c = m.check(&st);
        assert!(!c.passes());
        assert_eq!(c.warnings().len(), 1);
    }
}
