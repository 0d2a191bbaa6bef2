use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use super::DataError;

/// On-disk layout of an edge list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeFormat {
    /// `source,target,rating,time` per line.
    BitcoinCsv,
    /// `SRC:`/`TGT:`/`VOT:` key-value blocks separated by blank lines.
    Wikirfa,
    /// `source<TAB>target<TAB>sign`, `#` comments.
    Slashdot,
}

impl FromStr for EdgeFormat {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bitcoin-csv" => Ok(EdgeFormat::BitcoinCsv),
            "wikirfa" => Ok(EdgeFormat::Wikirfa),
            "slashdot" => Ok(EdgeFormat::Slashdot),
            other => Err(DataError::UnknownFormat(other.to_string())),
        }
    }
}

impl std::fmt::Display for EdgeFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EdgeFormat::BitcoinCsv => "bitcoin-csv",
            EdgeFormat::Wikirfa => "wikirfa",
            EdgeFormat::Slashdot => "slashdot",
        })
    }
}

/// One parsed row, ids kept as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEdgeRecord {
    pub source: String,
    pub target: String,
    pub weight: f64,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedEdges {
    pub records: Vec<RawEdgeRecord>,
    /// Lines or blocks that could not be parsed.
    pub malformed: usize,
}

/// Opens `path`, transparently decompressing gzip by magic bytes.
pub fn open_maybe_gz(path: &Path) -> Result<Box<dyn BufRead>, DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = File::open(path).map_err(io)?;
    let mut magic = [0u8; 2];
    let n = f.read(&mut magic).map_err(io)?;
    let f = File::open(path).map_err(io)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(f))))
    } else {
        Ok(Box::new(BufReader::new(f)))
    }
}

pub fn parse_edge_list(path: &Path, format: EdgeFormat) -> Result<ParsedEdges, DataError> {
    let reader = open_maybe_gz(path)?;
    let parsed = parse_reader(reader, format).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if parsed.records.is_empty() {
        return Err(DataError::EmptyFile(path.to_path_buf()));
    }
    Ok(parsed)
}

pub fn parse_reader(reader: impl BufRead, format: EdgeFormat) -> std::io::Result<ParsedEdges> {
    match format {
        EdgeFormat::BitcoinCsv => parse_delimited(reader, |l| l.split(',').map(str::trim).collect()),
        EdgeFormat::Slashdot => parse_delimited(reader, |l| l.split_whitespace().collect()),
        EdgeFormat::Wikirfa => parse_wikirfa(reader),
    }
}

fn parse_delimited(reader: impl BufRead, split: impl Fn(&str) -> Vec<&str>) -> std::io::Result<ParsedEdges> {
    let mut out = ParsedEdges::default();
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields = split(t);
        let rec = match fields.as_slice() {
            [s, d, w, rest @ ..] if !s.is_empty() && !d.is_empty() => w.parse::<f64>().ok().filter(|w| w.is_finite()).map(|weight| RawEdgeRecord {
                source: s.to_string(),
                target: d.to_string(),
                weight,
                timestamp: rest.first().and_then(|x| x.parse::<f64>().ok()).map(|x| x as i64),
            }),
            _ => None,
        };
        match rec {
            Some(r) => out.records.push(r),
            None => out.malformed += 1,
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Block {
    src: Option<String>,
    tgt: Option<String>,
    vot: Option<String>,
    any: bool,
}

impl Block {
    fn flush(&mut self, out: &mut ParsedEdges) {
        if !self.any {
            return;
        }
        let b = std::mem::take(self);
        let weight = b.vot.as_deref().and_then(|v| v.trim().parse::<f64>().ok());
        match (b.src, b.tgt, weight) {
            (Some(s), Some(t), Some(w)) if !s.is_empty() && !t.is_empty() => out.records.push(RawEdgeRecord {
                source: s,
                target: t,
                weight: w,
                timestamp: None,
            }),
            _ => out.malformed += 1,
        }
    }
}

fn parse_wikirfa(reader: impl BufRead) -> std::io::Result<ParsedEdges> {
    let mut out = ParsedEdges::default();
    let mut block = Block::default();
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            block.flush(&mut out);
            continue;
        }
        block.any = true;
        let Some((key, value)) = t.split_once(':') else {
            continue;
        };
        let value = value.trim().to_string();
        match key {
            "SRC" => block.src = Some(value),
            "TGT" => block.tgt = Some(value),
            "VOT" => block.vot = Some(value),
            _ => {}
        }
    }
    block.flush(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, f: EdgeFormat) -> ParsedEdges {
        parse_reader(text.as_bytes(), f).unwrap()
    }

    #[test]
    fn bitcoin_line() {
        let p = parse("7188,1,10,1407470400\n430,1,-1,1376539200\n", EdgeFormat::BitcoinCsv);
        assert_eq!(
            p.records[0],
            RawEdgeRecord {
                source: "7188".into(),
                target: "1".into(),
                weight: 10.0,
                timestamp: Some(1407470400)
            }
        );
        assert_eq!(p.records[1].weight, -1.0);
    }

    #[test]
    fn non_numeric_weight_is_counted() {
        let p = parse("1,2,abc,0\n1,3,2,0\nonly,two\n", EdgeFormat::BitcoinCsv);
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.malformed, 2);
    }

    #[test]
    fn wikirfa_blocks() {
        let text = "SRC:Alice\nTGT:Bob\nVOT:-1\nRES:1\nYEA:2013\nDAT:19:53, 25 January 2013\nTXT:no\n\nSRC:Carol\nTGT:Bob\nVOT:1\nRES:1\n\nSRC:Dan\nTGT:\nVOT:1\n";
        let p = parse(text, EdgeFormat::Wikirfa);
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[0].source, "Alice");
        assert_eq!(p.records[0].weight, -1.0);
        assert_eq!(p.records[1].weight, 1.0);
        assert_eq!(p.malformed, 1);
    }

    #[test]
    fn slashdot_with_comments() {
        let text = "# Directed graph\n# FromNodeId\tToNodeId\tSign\n0\t1\t1\n0\t2\t-1\n";
        let p = parse(text, EdgeFormat::Slashdot);
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[1].weight, -1.0);
        assert_eq!(p.malformed, 0);
    }

    #[test]
    fn gzip_is_detected() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::default());
        enc.write_all(b"1,2,5,0\n2,3,-2,0\n").unwrap();
        enc.finish().unwrap();
        let p = parse_edge_list(&path, EdgeFormat::BitcoinCsv).unwrap();
        assert_eq!(p.records.len(), 2);
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        std::fs::write(&path, "# nothing\n").unwrap();
        assert!(matches!(parse_edge_list(&path, EdgeFormat::BitcoinCsv), Err(DataError::EmptyFile(_))));
    }

    #[test]
    fn unknown_format_name() {
        assert!(matches!("edgelist".parse::<EdgeFormat>(), Err(DataError::UnknownFormat(_))));
        assert_eq!("wikirfa".parse::<EdgeFormat>().unwrap().to_string(), "wikirfa");
    }
}
