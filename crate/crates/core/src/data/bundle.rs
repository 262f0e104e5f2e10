//! Directory bundle format.
//!
//! ```text
//! manifest.toml   format_version, name, task, nodes, features, classes
//! edges.tsv       one "u<TAB>v" line per edge, 0-based node ids
//! features.bin    u64 rows, u64 cols, rows*cols f32, little-endian
//! labels.bin      u64 rows, u64 cols, rows*cols i32; single-label uses one
//!                 column with -1 for unlabelled nodes
//! masks.bin       u64 rows, u64 3, rows*3 u8 (train, val, test)
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DataError, GraphDataset, Labels};
use crate::genome::Task;
use crate::gnn::Graph;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    name: String,
    task: Task,
    nodes: u64,
    features: u64,
    classes: u64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> DataError {
    DataError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes `dataset` into `dir`, creating the directory if needed.
pub fn write_bundle(dataset: &GraphDataset, dir: &Path) -> Result<(), DataError> {
    dataset.validate().map_err(DataError::Invalid)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let n = dataset.node_count();

    let manifest = Manifest {
        format_version: BUNDLE_FORMAT_VERSION,
        name: dataset.name.clone(),
        task: dataset.task(),
        nodes: n as u64,
        features: dataset.feature_dim() as u64,
        classes: dataset.classes as u64,
    };
    let path = dir.join("manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| format_err(&path, e.to_string()))?;
    fs::write(&path, text).map_err(io_err(&path))?;

    let path = dir.join("edges.tsv");
    write_with(&path, |w| {
        for &(u, v) in dataset.graph.directed_edges() {
            if u < v {
                writeln!(w, "{u}\t{v}")?;
            }
        }
        Ok(())
    })?;

    let path = dir.join("features.bin");
    write_with(&path, |w| {
        write_header(w, dataset.features.nrows(), dataset.features.ncols())?;
        for &x in dataset.features.iter() {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        Ok(())
    })?;

    let path = dir.join("labels.bin");
    write_with(&path, |w| match &dataset.labels {
        Labels::Single(ys) => {
            write_header(w, n, 1)?;
            for y in ys {
                let v = y.map_or(-1, |y| y as i32);
                w.write_all(&v.to_le_bytes())?;
            }
            Ok(())
        }
        Labels::Multi(ys) => {
            write_header(w, ys.nrows(), ys.ncols())?;
            for &y in ys.iter() {
                w.write_all(&(y as i32).to_le_bytes())?;
            }
            Ok(())
        }
    })?;

    let path = dir.join("masks.bin");
    write_with(&path, |w| {
        write_header(w, n, 3)?;
        for i in 0..n {
            w.write_all(&[
                dataset.train[i] as u8,
                dataset.val[i] as u8,
                dataset.test[i] as u8,
            ])?;
        }
        Ok(())
    })
}

fn write_with(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<(), DataError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn write_header(w: &mut impl Write, rows: usize, cols: usize) -> std::io::Result<()> {
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())
}

/// Reads a little-endian matrix file and checks its declared shape.
fn read_matrix<const W: usize>(
    path: &Path,
    rows: usize,
    cols: Option<usize>,
) -> Result<(usize, Vec<[u8; W]>), DataError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    if bytes.len() < 16 {
        return Err(format_err(path, "truncated header"));
    }
    let r = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let c = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if r != rows {
        return Err(format_err(path, format!("{r} rows, manifest says {rows} nodes")));
    }
    if let Some(want) = cols {
        if c != want {
            return Err(format_err(path, format!("{c} columns, expected {want}")));
        }
    }
    let body = &bytes[16..];
    let expected = r.checked_mul(c).and_then(|x| x.checked_mul(W));
    if expected != Some(body.len()) {
        return Err(format_err(
            path,
            format!("payload is {} bytes, header implies {r}x{c} cells of {W} bytes", body.len()),
        ));
    }
    let cells = body.chunks_exact(W).map(|ch| ch.try_into().unwrap()).collect();
    Ok((c, cells))
}

/// Loads a bundle directory and validates the result.
pub fn load_bundle(dir: &Path) -> Result<GraphDataset, DataError> {
    let path = dir.join("manifest.toml");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| format_err(&path, e.to_string()))?;
    if manifest.format_version != BUNDLE_FORMAT_VERSION {
        return Err(format_err(
            &path,
            format!("unsupported format_version {}", manifest.format_version),
        ));
    }
    let n = manifest.nodes as usize;
    let d = manifest.features as usize;
    let classes = manifest.classes as usize;

    let path = dir.join("edges.tsv");
    let (edges, raw_edge_count) = read_edges(&path)?;
    let graph = Graph::from_undirected(n, &edges).map_err(|e| format_err(&path, e.to_string()))?;

    let path = dir.join("features.bin");
    let (_, cells) = read_matrix::<4>(&path, n, Some(d))?;
    let features = Array2::from_shape_vec((n, d), cells.into_iter().map(|b| f32::from_le_bytes(b) as f64).collect())
        .expect("shape checked");

    let path = dir.join("labels.bin");
    let want_cols = match manifest.task {
        Task::SingleLabel => 1,
        Task::MultiLabel => classes,
    };
    let (_, cells) = read_matrix::<4>(&path, n, Some(want_cols))?;
    let raw: Vec<i32> = cells.into_iter().map(i32::from_le_bytes).collect();
    let labels = match manifest.task {
        Task::SingleLabel => Labels::Single(
            raw.iter()
                .enumerate()
                .map(|(i, &y)| match y {
                    -1 => Ok(None),
                    y if y >= 0 => Ok(Some(y as u32)),
                    y => Err(format_err(&path, format!("node {i} has label {y}"))),
                })
                .collect::<Result<_, _>>()?,
        ),
        Task::MultiLabel => Labels::Multi(
            Array2::from_shape_vec(
                (n, classes),
                raw.iter()
                    .map(|&y| match y {
                        0 | 1 => Ok(y as u8),
                        y => Err(format_err(&path, format!("label cell {y} is not 0 or 1"))),
                    })
                    .collect::<Result<_, _>>()?,
            )
            .expect("shape checked"),
        ),
    };

    let path = dir.join("masks.bin");
    let (_, cells) = read_matrix::<1>(&path, n, Some(3))?;
    let mut masks = [vec![false; n], vec![false; n], vec![false; n]];
    for (idx, [b]) in cells.into_iter().enumerate() {
        if b > 1 {
            return Err(format_err(&path, format!("mask cell {b} is not 0 or 1")));
        }
        masks[idx % 3][idx / 3] = b == 1;
    }
    let [train, val, test] = masks;

    let dataset = GraphDataset {
        name: manifest.name,
        graph,
        features,
        labels,
        classes,
        train,
        val,
        test,
        raw_edge_count,
    };
    dataset.validate().map_err(DataError::Invalid)?;
    Ok(dataset)
}

fn read_edges(path: &PathBuf) -> Result<(Vec<(usize, usize)>, usize), DataError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize, DataError> {
            tok.and_then(|t| t.parse().ok()).ok_or_else(|| {
                format_err(path, format!("line {}: expected two node ids", lineno + 1))
            })
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(format_err(path, format!("line {}: extra fields", lineno + 1)));
        }
        edges.push((u, v));
    }
    let raw = edges.len();
    Ok((edges, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_sbm, SbmParams};

    fn two_triangles(dir: &Path) {
        let manifest = Manifest {
            format_version: 1,
            name: "triangles".into(),
            task: Task::SingleLabel,
            nodes: 6,
            features: 2,
            classes: 2,
        };
        fs::write(dir.join("manifest.toml"), toml::to_string(&manifest).unwrap()).unwrap();
        // one duplicate and one reversed duplicate
        fs::write(dir.join("edges.tsv"), "0\t1\n1\t2\n2\t0\n3\t4\n4\t5\n5\t3\n1\t0\n0\t1\n").unwrap();
        let mut f = Vec::new();
        write_header(&mut f, 6, 2).unwrap();
        for i in 0..12 {
            f.extend_from_slice(&(i as f32 * 0.5).to_le_bytes());
        }
        fs::write(dir.join("features.bin"), f).unwrap();
        let mut l = Vec::new();
        write_header(&mut l, 6, 1).unwrap();
        for y in [0i32, 0, -1, 1, 1, 1] {
            l.extend_from_slice(&y.to_le_bytes());
        }
        fs::write(dir.join("labels.bin"), l).unwrap();
        let mut m = Vec::new();
        write_header(&mut m, 6, 3).unwrap();
        for row in [[1u8, 0, 0], [0, 1, 0], [0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]] {
            m.extend_from_slice(&row);
        }
        fs::write(dir.join("masks.bin"), m).unwrap();
    }

    #[test]
    fn two_disjoint_triangles() {
        let tmp = tempfile::tempdir().unwrap();
        two_triangles(tmp.path());
        let d = load_bundle(tmp.path()).unwrap();
        let s = d.stats();
        assert_eq!(s.nodes, 6);
        assert_eq!(s.raw_edges, 8);
        assert_eq!(s.undirected_edges, 6);
        assert_eq!(d.graph.directed_edges().len(), 12);
        assert_eq!(d.labels, Labels::Single(vec![Some(0), Some(0), None, Some(1), Some(1), Some(1)]));
        assert_eq!(d.features[[5, 1]], 5.5);
        assert_eq!((s.train, s.val, s.test), (2, 2, 1));
        let nb = d.graph.neighborhoods();
        for i in 0..6 {
            assert_eq!(nb.degree(i), 3);
        }
    }

    #[test]
    fn truncated_features_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        two_triangles(tmp.path());
        let p = tmp.path().join("features.bin");
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_bundle(tmp.path()), Err(DataError::Format { .. })));
    }

    #[test]
    fn overlapping_masks_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        two_triangles(tmp.path());
        let mut m = Vec::new();
        write_header(&mut m, 6, 3).unwrap();
        for row in [[1u8, 1, 0], [0, 1, 0], [0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]] {
            m.extend_from_slice(&row);
        }
        fs::write(tmp.path().join("masks.bin"), m).unwrap();
        assert!(matches!(load_bundle(tmp.path()), Err(DataError::Invalid(_))));
    }

    #[test]
    fn out_of_range_edge_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        two_triangles(tmp.path());
        fs::write(tmp.path().join("edges.tsv"), "0\t6\n").unwrap();
        assert!(matches!(load_bundle(tmp.path()), Err(DataError::Format { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load_bundle(tmp.path()), Err(DataError::Io { .. })));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip(seed in 0u64..1000, c in 2usize..5, per in 5usize..20, multi: bool) {
            let d = generate_sbm(&SbmParams {
                communities: c,
                nodes_per_community: per,
                feature_dim: 3,
                p_in: 0.3,
                p_out: 0.05,
                multi_label: multi,
                seed,
                ..SbmParams::default()
            }).unwrap();
            let tmp = tempfile::tempdir().unwrap();
            write_bundle(&d, tmp.path()).unwrap();
            let back = load_bundle(tmp.path()).unwrap();
            proptest::prop_assert_eq!(back, d);
        }
    }
}
