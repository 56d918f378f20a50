//! On-disk dataset directories.
//!
//! A dataset directory holds:
//!
//! * `edges.tsv`: two tab-separated 0-based node ids per line, `#` comments.
//! * `features.bin`: magic `GNNF`, little-endian `u32` rows and cols, then
//!   `rows * cols` little-endian `f32` values in row-major order.
//!   `features.csv` (one comma-separated row per node) is read when the
//!   binary file is absent.
//! * `labels.tsv`: `node_id<TAB>class_id` for every labeled node.
//! * `train.txt`, `val.txt`, `test.txt`: one node id per line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::graph::Graph;

pub const FEATURES_MAGIC: &[u8; 4] = b"GNNF";

/// Labels of the labeled nodes plus the train/val/test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSplit {
    labels: Vec<Option<usize>>,
    num_classes: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl LabeledSplit {
    pub fn new(
        labels: Vec<Option<usize>>,
        num_classes: usize,
        train: Vec<usize>,
        val: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        for (node, l) in labels.iter().enumerate() {
            if let Some(l) = *l {
                if l >= num_classes {
                    return Err(Error::LabelOutOfRange { node, label: l, classes: num_classes });
                }
            }
        }
        let mut owner = vec![None; n];
        for (name, set) in [("train", &train), ("val", &val), ("test", &test)] {
            for &v in set {
                if v >= n {
                    return Err(Error::Dataset(format!("{name} node {v} outside [0, {n})")));
                }
                if labels[v].is_none() {
                    return Err(Error::Dataset(format!("{name} node {v} has no label")));
                }
                match owner[v] {
                    Some(other) if other != name => {
                        return Err(Error::Dataset(format!("node {v} is in both {other} and {name}")))
                    }
                    Some(_) => return Err(Error::Dataset(format!("node {v} listed twice in {name}"))),
                    None => owner[v] = Some(name),
                }
            }
        }
        Ok(Self { labels, num_classes, train, val, test })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.labels[v]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }
}

/// A validated graph with node features and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: Dense,
    pub split: LabeledSplit,
}

impl Dataset {
    pub fn new(graph: Graph, features: Dense, split: LabeledSplit) -> Result<Self> {
        if features.rows() != graph.num_nodes() {
            return Err(Error::Dataset(format!("{} feature rows for {} nodes", features.rows(), graph.num_nodes())));
        }
        if split.labels().len() != graph.num_nodes() {
            return Err(Error::Dataset(format!(
                "{} label slots for {} nodes",
                split.labels().len(),
                graph.num_nodes()
            )));
        }
        if !features.is_finite() {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        Ok(Self { graph, features, split })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.split.num_classes()
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Yields `(1-based line number, trimmed content)` for non-blank,
/// non-comment lines.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_index(path: &Path, line: usize, tok: &str, bound: usize) -> Result<usize> {
    let v: usize =
        tok.parse().map_err(|_| Error::parse(path, line, format!("expected a non-negative integer, found {tok:?}")))?;
    if v >= bound {
        return Err(Error::IndexOutOfRange { path: path.to_path_buf(), line, index: v, bound });
    }
    Ok(v)
}

pub fn read_edges(path: &Path, num_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (line, content) in data_lines(&text) {
        let mut toks = content.split_whitespace();
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(Error::parse(path, line, "expected exactly two columns"));
        };
        edges.push((parse_index(path, line, a, num_nodes)?, parse_index(path, line, b, num_nodes)?));
    }
    Ok(edges)
}

pub fn read_features_bin(path: &Path) -> Result<Dense> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..4] != FEATURES_MAGIC {
        return Err(Error::parse(path, 0, "missing GNNF header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != rows * cols * 4 {
        return Err(Error::parse(
            path,
            0,
            format!("expected {} payload bytes for {rows}x{cols}, found {}", rows * cols * 4, body.len()),
        ));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    Dense::from_vec(rows, cols, data)
}

pub fn write_features_bin(path: &Path, x: &Dense) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(FEATURES_MAGIC).map_err(io)?;
    w.write_all(&(x.rows() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(x.cols() as u32).to_le_bytes()).map_err(io)?;
    for &v in x.as_slice() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_features_csv(path: &Path) -> Result<Dense> {
    let text = read_text(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, content) in data_lines(&text) {
        let row = content
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, line, format!("expected a real number, found {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(path, line, format!("{} columns, expected {}", row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    Dense::from_rows(&rows)
}

fn read_labels(path: &Path, num_nodes: usize) -> Result<(Vec<Option<usize>>, usize)> {
    let text = read_text(path)?;
    let mut labels = vec![None; num_nodes];
    let mut max_class = None;
    for (line, content) in data_lines(&text) {
        let mut toks = content.split_whitespace();
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(Error::parse(path, line, "expected node_id and class_id"));
        };
        let node = parse_index(path, line, a, num_nodes)?;
        let class = parse_index(path, line, b, usize::MAX)?;
        if labels[node].replace(class).is_some() {
            return Err(Error::parse(path, line, format!("node {node} labeled twice")));
        }
        max_class = Some(max_class.map_or(class, |m: usize| m.max(class)));
    }
    Ok((labels, max_class.map_or(0, |m| m + 1)))
}

fn read_node_list(path: &Path, num_nodes: usize) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    data_lines(&text).map(|(line, content)| parse_index(path, line, content, num_nodes)).collect()
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let bin = dir.join("features.bin");
    let features = if bin.exists() {
        read_features_bin(&bin)?
    } else {
        let csv = dir.join("features.csv");
        if !csv.exists() {
            return Err(Error::io(
                bin,
                std::io::Error::new(std::io::ErrorKind::NotFound, "neither features.bin nor features.csv found"),
            ));
        }
        read_features_csv(&csv)?
    };
    let n = features.rows();
    let edges = read_edges(&dir.join("edges.tsv"), n)?;
    let graph = Graph::from_edges(n, &edges)?;
    let (labels, classes) = read_labels(&dir.join("labels.tsv"), n)?;
    let train = read_node_list(&dir.join("train.txt"), n)?;
    let val = read_node_list(&dir.join("val.txt"), n)?;
    let test = read_node_list(&dir.join("test.txt"), n)?;
    for (file, set) in [("train.txt", &train), ("val.txt", &val), ("test.txt", &test)] {
        if let Some(v) = set.iter().find(|&&v| labels[v].is_none()) {
            return Err(Error::Dataset(format!("{}: node {v} has no label", dir.join(file).display())));
        }
    }
    let split = LabeledSplit::new(labels, classes, train, val, test)?;
    Dataset::new(graph, features, split)
}

/// Writes `ds` in the directory layout read by [`load_dataset`].
pub fn write_dataset(dir: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<PathBuf> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    let mut edges = String::from("# u\tv\n");
    for (u, v) in ds.graph.edges() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write("edges.tsv", edges)?;
    write_features_bin(&dir.join("features.bin"), &ds.features)?;
    let mut labels = String::new();
    for (v, l) in ds.split.labels().iter().enumerate() {
        if let Some(l) = l {
            labels.push_str(&format!("{v}\t{l}\n"));
        }
    }
    write("labels.tsv", labels)?;
    for (name, set) in [("train.txt", &ds.split.train), ("val.txt", &ds.split.val), ("test.txt", &ds.split.test)] {
        let body: String = set.iter().map(|v| format!("{v}\n")).collect();
        write(name, body)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_dir(files: &[(&str, &str)]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (name, body) in files {
            fs::write(dir.path().join(name), body).unwrap();
        }
        dir
    }

    fn basic(edges: &str) -> tempfile::TempDir {
        write_dir(&[
            ("edges.tsv", edges),
            ("features.csv", "1,0,0\n0,1,0\n"),
            ("labels.tsv", "0\t0\n1\t1\n"),
            ("train.txt", "0\n"),
            ("val.txt", "1\n"),
            ("test.txt", ""),
        ])
    }

    #[test]
    fn smallest_valid_directory() {
        let d = basic("# comment\n0\t1\n");
        let ds = load_dataset(d.path()).unwrap();
        assert_eq!(ds.num_nodes(), 2);
        assert_eq!(ds.num_features(), 3);
        assert_eq!(ds.graph.neighbors(0), &[1]);
        assert_eq!(ds.graph.neighbors(1), &[0]);
        assert_eq!(ds.num_classes(), 2);
    }

    #[test]
    fn reversed_duplicate_is_one_edge() {
        let ds = load_dataset(basic("0\t1\n1\t0\n").path()).unwrap();
        assert_eq!(ds.graph.num_edges(), 1);
    }

    #[test]
    fn self_loops_are_dropped() {
        let ds = load_dataset(basic("0\t0\n0\t1\n").path()).unwrap();
        assert_eq!(ds.graph.neighbors(0), &[1]);
    }

    #[test]
    fn errors_carry_file_and_line() {
        let err = load_dataset(basic("0\t1\n0\tx\n").path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("edges.tsv:2"));

        let err = load_dataset(basic("0\t1\n\n0\t5\n").path()).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { line: 3, index: 5, bound: 2, .. }), "{err}");

        let d = basic("0\t1\n");
        fs::remove_file(d.path().join("labels.tsv")).unwrap();
        assert!(matches!(load_dataset(d.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn feature_row_count_mismatch() {
        let d = basic("0\t1\n");
        fs::write(d.path().join("features.csv"), "1,0,0\n0,1,0\n0,0,1\n").unwrap();
        // Three feature rows make node 2 exist, but it has no label: fine.
        assert_eq!(load_dataset(d.path()).unwrap().num_nodes(), 3);
        fs::write(d.path().join("labels.tsv"), "0\t0\n3\t1\n").unwrap();
        let err = load_dataset(d.path()).unwrap_err();
        assert!(err.to_string().contains("labels.tsv:2"), "{err}");
    }

    #[test]
    fn binary_features_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let x = Dense::from_fn(3, 2, |i, j| (i as f64) * 0.5 - j as f64);
        let p = d.path().join("features.bin");
        write_features_bin(&p, &x).unwrap();
        assert_eq!(read_features_bin(&p).unwrap(), x);
        fs::write(&p, b"GNNX\0\0\0\0\0\0\0\0").unwrap();
        assert!(read_features_bin(&p).is_err());
    }

    #[test]
    fn overlapping_splits_rejected() {
        let labels = vec![Some(0), Some(1)];
        assert!(LabeledSplit::new(labels.clone(), 2, vec![0], vec![0], vec![]).is_err());
        assert!(LabeledSplit::new(vec![Some(0), None], 2, vec![1], vec![], vec![]).is_err());
        assert!(LabeledSplit::new(vec![Some(3)], 2, vec![0], vec![], vec![]).is_err());
        assert!(LabeledSplit::new(labels, 2, vec![0], vec![1], vec![]).is_ok());
    }
}
