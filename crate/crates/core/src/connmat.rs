//! Symmetric connectivity matrices and their upper-triangle edge vectors.
//!
//! A `V × V` symmetric matrix is represented by its `p = V(V−1)/2` strictly
//! upper-triangular entries enumerated row by row:
//! `(1,2), (1,3), …, (1,V), (2,3), …, (V−1,V)`.
//! Node indices are 0-based in code and 1-based in file headers; the
//! [`EdgeIndex`] owns that translation.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{LocusError, Result};

/// Relative tolerance under which an input is considered symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Number of edges for `nodes` nodes.
pub fn edge_count(nodes: usize) -> usize {
    nodes * nodes.saturating_sub(1) / 2
}

/// Inverse of [`edge_count`], if `edges` is a triangular number with `V ≥ 2`.
pub fn node_count_for(edges: usize) -> Option<usize> {
    let v = ((1.0 + (1.0 + 8.0 * edges as f64).sqrt()) / 2.0).round() as usize;
    (v >= 2 && edge_count(v) == edges).then_some(v)
}

/// Bijection between node pairs `u < v` and edge positions `0..p`.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    nodes: usize,
    pairs: Vec<(usize, usize)>,
}

impl EdgeIndex {
    pub fn new(nodes: usize) -> Self {
        let mut pairs = Vec::with_capacity(edge_count(nodes));
        for u in 0..nodes {
            for v in (u + 1)..nodes {
                pairs.push((u, v));
            }
        }
        EdgeIndex { nodes, pairs }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Position of the (unordered) pair `{a, b}`; `a != b`.
    pub fn index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a != b && a < self.nodes && b < self.nodes);
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        u * self.nodes - u * (u + 1) / 2 + (v - u - 1)
    }

    /// The pair `(u, v)`, `u < v`, stored at position `k`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        self.pairs[k]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Edge positions touching node `v`, ordered by the other endpoint.
    pub fn incident(&self, v: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nodes)
            .filter(move |&u| u != v)
            .map(move |u| (u, self.index(u, v)))
    }

    /// Header label `"u_v"` with 1-based node numbers.
    pub fn label(&self, k: usize) -> String {
        let (u, v) = self.pairs[k];
        format!("{}_{}", u + 1, v + 1)
    }

    /// Parses a `"u_v"` label back to a 0-based pair.
    pub fn parse_label(label: &str) -> Option<(usize, usize)> {
        let (a, b) = label.trim().split_once('_')?;
        let u: usize = a.trim().parse().ok()?;
        let v: usize = b.trim().parse().ok()?;
        (u >= 1 && v > u).then(|| (u - 1, v - 1))
    }
}

/// Checks that `m` is square and symmetric within [`SYMMETRY_TOL`] (relative
/// to the largest entry) and returns the symmetrized `(M + Mᵀ)/2`.
pub fn symmetrize_checked(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(LocusError::Dimension(format!(
            "connectivity matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let scale = m.iter().fold(0.0_f64, |s, x| s.max(x.abs()));
    let mut worst = (0, 0, 0.0_f64);
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (m[(i, j)] - m[(j, i)]).abs();
            if diff > worst.2 || diff.is_nan() {
                worst = (i, j, diff);
            }
        }
    }
    if worst.2.is_nan() || worst.2 > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(LocusError::Asymmetric {
            row: worst.0,
            col: worst.1,
            diff: worst.2,
        });
    }
    Ok((m + m.transpose()) * 0.5)
}

/// `ℒ`: the strictly upper-triangular entries of a symmetric matrix.
pub fn vectorize(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let sym = symmetrize_checked(m)?;
    let n = sym.nrows();
    if n < 2 {
        return Err(LocusError::Dimension(format!("need at least 2 nodes, got {n}")));
    }
    Ok(upper_triangle(&sym))
}

/// `ℒ` without the symmetry check; callers guarantee symmetry.
pub(crate) fn upper_triangle(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(edge_count(n));
    for u in 0..n {
        for v in (u + 1)..n {
            out.push(m[(u, v)]);
        }
    }
    DVector::from_vec(out)
}

/// `ℒ⁻¹`: symmetric matrix with zero diagonal from an edge vector.
pub fn unvectorize(s: &[f64], nodes: usize) -> Result<DMatrix<f64>> {
    if s.len() != edge_count(nodes) {
        return Err(LocusError::Dimension(format!(
            "edge vector of length {} does not match V={} (p={})",
            s.len(),
            nodes,
            edge_count(nodes)
        )));
    }
    let mut m = DMatrix::zeros(nodes, nodes);
    let mut k = 0;
    for u in 0..nodes {
        for v in (u + 1)..nodes {
            m[(u, v)] = s[k];
            m[(v, u)] = s[k];
            k += 1;
        }
    }
    Ok(m)
}

/// Fisher's z transform, `atanh(r)`, defined for `|r| < 1`.
pub fn fisher_z(r: f64) -> Option<f64> {
    (r.abs() < 1.0).then(|| r.atanh())
}

/// Multi-subject connectivity data: row `i` is `ℒ(Y*_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityDataset {
    data: DMatrix<f64>,
    nodes: usize,
    subject_ids: Option<Vec<String>>,
}

impl ConnectivityDataset {
    pub fn new(data: DMatrix<f64>, nodes: usize, subject_ids: Option<Vec<String>>) -> Result<Self> {
        if nodes < 2 || data.ncols() != edge_count(nodes) {
            return Err(LocusError::Dimension(format!(
                "{} edge columns do not match V={} (expected p={})",
                data.ncols(),
                nodes,
                edge_count(nodes)
            )));
        }
        if data.nrows() == 0 {
            return Err(LocusError::Dimension("dataset has no subjects".into()));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            let (i, k) = (pos % data.nrows(), pos / data.nrows());
            return Err(LocusError::NonFinite {
                location: format!("subject {}, edge {}", i + 1, EdgeIndex::new(nodes).label(k)),
            });
        }
        if let Some(ids) = &subject_ids {
            if ids.len() != data.nrows() {
                return Err(LocusError::Dimension(format!(
                    "{} subject ids for {} subjects",
                    ids.len(),
                    data.nrows()
                )));
            }
        }
        Ok(ConnectivityDataset {
            data,
            nodes,
            subject_ids,
        })
    }

    /// Builds a dataset from per-subject symmetric matrices.
    pub fn from_matrices(mats: &[DMatrix<f64>], subject_ids: Option<Vec<String>>) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| LocusError::Dimension("no subject matrices".into()))?;
        let nodes = first.nrows();
        let mut data = DMatrix::zeros(mats.len(), edge_count(nodes));
        for (i, m) in mats.iter().enumerate() {
            if m.nrows() != nodes || m.ncols() != nodes {
                return Err(LocusError::Dimension(format!(
                    "subject {} is {}x{}, expected {nodes}x{nodes}",
                    i + 1,
                    m.nrows(),
                    m.ncols()
                )));
            }
            let row = vectorize(m)?;
            data.set_row(i, &row.transpose());
        }
        ConnectivityDataset::new(data, nodes, subject_ids)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn subjects(&self) -> usize {
        self.data.nrows()
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> usize {
        self.data.ncols()
    }

    pub fn subject_ids(&self) -> Option<&[String]> {
        self.subject_ids.as_deref()
    }

    /// Subject `i` as a symmetric matrix with zero diagonal.
    pub fn subject_matrix(&self, i: usize) -> DMatrix<f64> {
        let row: Vec<f64> = self.data.row(i).iter().copied().collect();
        unvectorize(&row, self.nodes).expect("dataset dimensions are validated")
    }

    /// Applies Fisher's z transform to every edge.
    pub fn fisher_z(self) -> Result<Self> {
        let index = EdgeIndex::new(self.nodes);
        let mut data = self.data;
        for k in 0..data.ncols() {
            for i in 0..data.nrows() {
                let r = data[(i, k)];
                data[(i, k)] = fisher_z(r).ok_or_else(|| LocusError::FisherZDomain {
                    value: r,
                    location: format!("subject {}, edge {}", i + 1, index.label(k)),
                })?;
            }
        }
        Ok(ConnectivityDataset {
            data,
            nodes: self.nodes,
            subject_ids: self.subject_ids,
        })
    }

    /// Dataset made of the given subject rows (repeats allowed).
    pub fn select_subjects(&self, rows: &[usize]) -> Result<Self> {
        let mut data = DMatrix::zeros(rows.len(), self.edges());
        for (i, &r) in rows.iter().enumerate() {
            data.set_row(i, &self.data.row(r));
        }
        ConnectivityDataset::new(data, self.nodes, None)
    }
}

/// On-disk layouts accepted by [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Directory with one headerless `V × V` CSV per subject.
    SquareDir,
    /// One `N × p` CSV whose header row holds `"u_v"` edge labels.
    EdgeCsv,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub fisher_z: bool,
}

pub fn load_dataset(path: &Path, format: DatasetFormat, opts: LoadOptions) -> Result<ConnectivityDataset> {
    let dataset = match format {
        DatasetFormat::SquareDir => load_square_dir(path)?,
        DatasetFormat::EdgeCsv => load_edge_csv(path)?,
    };
    if opts.fisher_z {
        dataset.fisher_z()
    } else {
        Ok(dataset)
    }
}

fn csv_reader(path: &Path, has_headers: bool) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| LocusError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_field(path: &Path, field: &str, row: usize, col: usize) -> Result<f64> {
    let x: f64 = field
        .parse()
        .map_err(|_| LocusError::parse(path, format!("row {row}, column {col}: not a number: {field:?}")))?;
    if !x.is_finite() {
        return Err(LocusError::NonFinite {
            location: format!("{} row {row}, column {col}", path.display()),
        });
    }
    Ok(x)
}

/// Reads a headerless numeric CSV into a matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv_reader(path, false)?;
    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| LocusError::parse(path, e.to_string()))?;
        match ncols {
            None => ncols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(LocusError::parse(path, format!("row {} has {} fields, expected {c}", r + 1, rec.len())))
            }
            _ => {}
        }
        for (c, field) in rec.iter().enumerate() {
            values.push(parse_field(path, field, r + 1, c + 1)?);
        }
        nrows += 1;
    }
    let ncols = ncols.unwrap_or(0);
    Ok(DMatrix::from_row_slice(nrows, ncols, &values))
}

/// Writes a matrix as headerless CSV using shortest round-trip formatting.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 12);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&m[(i, j)].to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| LocusError::io(path, e))
}

fn load_square_dir(dir: &Path) -> Result<ConnectivityDataset> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| LocusError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(LocusError::parse(dir, "no .csv subject files found"));
    }
    let mut mats = Vec::with_capacity(files.len());
    let mut ids = Vec::with_capacity(files.len());
    for f in &files {
        let m = read_matrix_csv(f)?;
        if let Some(first) = mats.first() {
            let first: &DMatrix<f64> = first;
            if m.shape() != first.shape() {
                return Err(LocusError::Dimension(format!(
                    "{} is {}x{}, expected {}x{}",
                    f.display(),
                    m.nrows(),
                    m.ncols(),
                    first.nrows(),
                    first.ncols()
                )));
            }
        }
        mats.push(m);
        ids.push(f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    }
    ConnectivityDataset::from_matrices(&mats, Some(ids))
}

fn load_edge_csv(path: &Path) -> Result<ConnectivityDataset> {
    let mut rdr = csv_reader(path, true)?;
    let header = rdr.headers().map_err(|e| LocusError::parse(path, e.to_string()))?.clone();
    let nodes = node_count_for(header.len())
        .ok_or_else(|| LocusError::Dimension(format!("{} edge columns is not V(V-1)/2 for any V", header.len())))?;
    let index = EdgeIndex::new(nodes);
    for (k, label) in header.iter().enumerate() {
        let expected = index.pair(k);
        match EdgeIndex::parse_label(label) {
            Some(pair) if pair == expected => {}
            _ => {
                return Err(LocusError::parse(
                    path,
                    format!("header column {} is {label:?}, expected \"{}\"", k + 1, index.label(k)),
                ))
            }
        }
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| LocusError::parse(path, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(LocusError::Dimension(format!(
                "row {} has {} fields, header has {}",
                r + 1,
                rec.len(),
                header.len()
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            values.push(parse_field(path, field, r + 1, c + 1)?);
        }
        rows += 1;
    }
    ConnectivityDataset::new(DMatrix::from_row_slice(rows, header.len(), &values), nodes, None)
}

/// Writes the edge-CSV layout: `"u_v"` header then one row per subject.
pub fn save_edge_csv(dataset: &ConnectivityDataset, path: &Path) -> Result<()> {
    let index = EdgeIndex::new(dataset.nodes());
    let mut out = String::new();
    let labels: Vec<String> = (0..index.len()).map(|k| index.label(k)).collect();
    out.push_str(&labels.join(","));
    out.push('\n');
    let data = dataset.data();
    for i in 0..data.nrows() {
        for k in 0..data.ncols() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&data[(i, k)].to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| LocusError::io(path, e))
}

/// Writes one square CSV per subject into `dir` (created if missing).
pub fn save_square_dir(dataset: &ConnectivityDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LocusError::io(dir, e))?;
    let width = dataset.subjects().to_string().len();
    for i in 0..dataset.subjects() {
        let name = match dataset.subject_ids() {
            Some(ids) => ids[i].clone(),
            None => format!("subject_{:0width$}", i + 1),
        };
        write_matrix_csv(&dir.join(format!("{name}.csv")), &dataset.subject_matrix(i))?;
    }
    Ok(())
}
