//! Raw node feature vectors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{InteractionGraph, NodeRef, NodeType};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::seed;

pub const DEFAULT_DIM: usize = 128;

/// One dense row per node, one table per node type.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    dim: usize,
    tables: Vec<Matrix<T>>,
}

impl<T: Scalar> FeatureMatrix<T> {
    /// Builds from per-type tables; all must share the column count.
    pub fn from_tables(tables: Vec<Matrix<T>>) -> Result<Self> {
        let dim = tables.first().map_or(0, |t| t.cols());
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if tables.iter().any(|t| t.cols() != dim) {
            return Err(Error::Shape("feature tables disagree on dimension".into()));
        }
        if tables.iter().any(|t| t.as_slice().iter().any(|x| !x.is_finite())) {
            return Err(Error::Numeric("non-finite feature value".into()));
        }
        Ok(FeatureMatrix { dim, tables })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn type_count(&self) -> usize {
        self.tables.len()
    }

    pub fn table(&self, t: NodeType) -> &Matrix<T> {
        &self.tables[t.0 as usize]
    }

    pub fn row(&self, node: NodeRef) -> &[T] {
        self.table(node.node_type).row(node.index as usize)
    }

    pub fn node_count(&self) -> usize {
        self.tables.iter().map(Matrix::rows).sum()
    }

    pub fn into_tables(self) -> Vec<Matrix<T>> {
        self.tables
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{} {}", self.node_count(), self.dim).map_err(io)?;
        for (t, table) in self.tables.iter().enumerate() {
            for i in 0..table.rows() {
                write!(w, "{t} {i}").map_err(io)?;
                for x in table.row(i) {
                    write!(w, " {x}").map_err(io)?;
                }
                writeln!(w).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Loads a feature file. `counts[t]` is the number of nodes of type `t`
    /// that must all be present.
    pub fn load(path: &Path, counts: &[usize]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty feature file"))?;
        let head: Vec<usize> = first
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, 1, "expected `count dim`"))?;
        let &[_, dim] = head.as_slice() else {
            return Err(Error::parse(path, 1, "expected `count dim`"));
        };
        if dim == 0 {
            return Err(Error::parse(path, 1, "dimension must be at least 1"));
        }
        let mut tables: Vec<Matrix<T>> = counts.iter().map(|&n| Matrix::zeros(n, dim)).collect();
        let mut seen: Vec<Vec<bool>> = counts.iter().map(|&n| vec![false; n]).collect();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| Error::parse(path, n + 1, msg);
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != dim + 2 {
                return Err(bad(format!("expected {dim} values, found {}", f.len().saturating_sub(2))));
            }
            let t: usize = f[0].parse().map_err(|_| bad("bad node type".into()))?;
            let i: usize = f[1].parse().map_err(|_| bad("bad node index".into()))?;
            if t >= counts.len() || i >= counts[t] {
                return Err(bad(format!("unknown node {t}:{i}")));
            }
            if seen[t][i] {
                return Err(bad(format!("duplicate node {t}:{i}")));
            }
            seen[t][i] = true;
            let row = tables[t].row_mut(i);
            for (slot, s) in row.iter_mut().zip(&f[2..]) {
                let x: T = s.parse().map_err(|_| bad(format!("bad value `{s}`")))?;
                if !x.is_finite() {
                    return Err(bad(format!("non-finite value `{s}`")));
                }
                *slot = x;
            }
        }
        for (t, s) in seen.iter().enumerate() {
            if let Some(i) = s.iter().position(|&x| !x) {
                return Err(Error::invalid(format!(
                    "feature file {} is missing node {t}:{i}",
                    path.display()
                )));
            }
        }
        FeatureMatrix::from_tables(tables)
    }
}

/// Uniform features in `[-a, a]`, `a = sqrt(3 / dim)`, drawn per node from
/// a stream keyed by `(seed, type, index)`.
pub fn seeded_features<T: Scalar>(graph: &InteractionGraph, dim: usize, seed: u64) -> Result<FeatureMatrix<T>> {
    let counts: Vec<usize> = graph.node_types().map(|t| graph.node_count(t)).collect();
    seeded_features_for(&counts, dim, seed)
}

pub fn seeded_features_for<T: Scalar>(counts: &[usize], dim: usize, seed: u64) -> Result<FeatureMatrix<T>> {
    if dim == 0 {
        return Err(Error::invalid("feature dimension must be at least 1"));
    }
    let a = (3.0 / dim as f64).sqrt();
    let tables = counts
        .iter()
        .enumerate()
        .map(|(t, &n)| {
            let mut m = Matrix::zeros(n, dim);
            for i in 0..n {
                let mut rng = seed::rng(seed, &[seed::stream::FEATURES, t as u64, i as u64]);
                for x in m.row_mut(i) {
                    *x = T::of(rng.gen_range(-a..=a));
                }
            }
            m
        })
        .collect();
    FeatureMatrix::from_tables(tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_features_are_deterministic_and_bounded() {
        let a: FeatureMatrix<f32> = seeded_features_for(&[5, 7], 64, 3).unwrap();
        let b: FeatureMatrix<f32> = seeded_features_for(&[5, 7], 64, 3).unwrap();
        assert_eq!(a, b);
        let bound = (3.0f32 / 64.0).sqrt();
        assert_eq!(a.row(NodeRef::item(6)).len(), 64);
        assert!(a.table(NodeType::ITEM).as_slice().iter().all(|x| x.abs() <= bound));
        assert!(seeded_features_for::<f32>(&[1], 0, 3).is_err());
    }

    #[test]
    fn seeded_features_have_unit_expected_norm() {
        let f: FeatureMatrix<f64> = seeded_features_for(&[10_000], 16, 1).unwrap();
        let t = f.table(NodeType::USER);
        let mean: f64 = (0..t.rows()).map(|i| t.row(i).iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / t.rows() as f64;
        assert!((mean - 1.0).abs() <= 0.05, "{mean}");
    }

    #[test]
    fn seeds_isolate_nodes() {
        let a: FeatureMatrix<f64> = seeded_features_for(&[3, 3], 8, 1).unwrap();
        let b: FeatureMatrix<f64> = seeded_features_for(&[3, 3], 8, 2).unwrap();
        assert_ne!(a.row(NodeRef::user(0)), b.row(NodeRef::user(0)));
        let bigger: FeatureMatrix<f64> = seeded_features_for(&[4, 3], 8, 1).unwrap();
        for i in 0..3 {
            assert_eq!(a.row(NodeRef::user(i)), bigger.row(NodeRef::user(i)));
            assert_eq!(a.row(NodeRef::item(i)), bigger.row(NodeRef::item(i)));
        }
        assert_ne!(a.row(NodeRef::user(0)), a.row(NodeRef::item(0)));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let a: FeatureMatrix<f32> = seeded_features_for(&[4, 6], 128, 7).unwrap();
        a.save(f.path()).unwrap();
        assert_eq!(FeatureMatrix::<f32>::load(f.path(), &[4, 6]).unwrap(), a);
        let b: FeatureMatrix<f64> = seeded_features_for(&[2, 2], 5, 7).unwrap();
        b.save(f.path()).unwrap();
        assert_eq!(FeatureMatrix::<f64>::load(f.path(), &[2, 2]).unwrap(), b);
    }

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn missing_node_is_named() {
        let f = file("2 2\n0 0 0.1 0.2\n");
        let err = FeatureMatrix::<f32>::load(f.path(), &[1, 1]).unwrap_err();
        assert!(err.to_string().contains("1:0"), "{err}");
    }

    #[test]
    fn wrong_row_length_reports_line() {
        let f = file("2 2\n0 0 0.1 0.2\n1 0 0.3\n");
        match FeatureMatrix::<f32>::load(f.path(), &[1, 1]).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
    }
}
