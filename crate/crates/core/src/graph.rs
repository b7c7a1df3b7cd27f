//! Attributed graphs: storage, text file formats, Laplacian smoothing and a
//! stochastic block model generator.
//!
//! File formats (UTF-8, LF or CRLF):
//!
//! * edges: one `u v` pair of 0-based indices per line, `#` starts a comment line
//! * features: header `N D`, then `N` lines of `D` reals
//! * labels: `N` lines, one integer each

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

pub const EDGE_FILE: &str = "edges.txt";
pub const FEATURE_FILE: &str = "features.txt";
pub const LABEL_FILE: &str = "labels.txt";

/// Undirected graph with a dense node attribute matrix and optional ground truth.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted. Self-loops are
/// never stored; smoothing adds them implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph<T> {
    edges: Vec<(usize, usize)>,
    attributes: Matrix<T>,
    labels: Option<Vec<usize>>,
}

impl<T: Real> AttributedGraph<T> {
    /// Validates and canonicalizes. Reversed and duplicate edges collapse
    /// into one; self-loops are dropped.
    pub fn new(
        attributes: Matrix<T>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = attributes.rows();
        if !attributes.is_finite() {
            return Err(Error::Validation(
                "attributes contain non-finite values".into(),
            ));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Validation(format!(
                    "{} labels for {n} nodes",
                    l.len()
                )));
            }
        }
        Ok(Self {
            edges: set.into_iter().collect(),
            attributes,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.attributes.rows()
    }

    pub fn dim(&self) -> usize {
        self.attributes.cols()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn attributes(&self) -> &Matrix<T> {
        &self.attributes
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of distinct ground-truth classes, if labels are present.
    pub fn class_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().collect::<BTreeSet<_>>().len())
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// Writes the three dataset files into `dir` (labels only when present).
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut edges = String::new();
        for &(u, v) in &self.edges {
            edges.push_str(&format!("{u} {v}\n"));
        }
        write_atomic(&dir.join(EDGE_FILE), edges.as_bytes())?;
        write_atomic(
            &dir.join(FEATURE_FILE),
            &feature_file_bytes(&self.attributes),
        )?;
        if let Some(labels) = &self.labels {
            write_atomic(&dir.join(LABEL_FILE), &label_file_bytes(labels))?;
        }
        Ok(())
    }

    /// Loads `edges.txt`, `features.txt` and, if present, `labels.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let labels = dir.join(LABEL_FILE);
        load_graph(
            &dir.join(EDGE_FILE),
            &dir.join(FEATURE_FILE),
            labels.exists().then_some(labels.as_path()),
        )
    }
}

pub fn feature_file_bytes<T: Real>(m: &Matrix<T>) -> Vec<u8> {
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn label_file_bytes(labels: &[usize]) -> Vec<u8> {
    labels
        .iter()
        .map(|l| format!("{l}\n"))
        .collect::<String>()
        .into_bytes()
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_tok<V: std::str::FromStr>(path: &Path, line: usize, tok: &str, what: &str) -> Result<V> {
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("expected {what}, found {tok:?}")))
}

pub fn load_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(path, i + 1, "expected two node indices"));
        }
        let u = parse_tok(path, i + 1, toks[0], "node index")?;
        let v = parse_tok(path, i + 1, toks[1], "node index")?;
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn load_features<T: Real>(path: &Path) -> Result<Matrix<T>> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate();
    let (n, d) = loop {
        match lines.next() {
            None => return Err(parse_err(path, 1, "missing \"N D\" header")),
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => {
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks.len() != 2 {
                    return Err(parse_err(path, i + 1, "header must be \"N D\""));
                }
                let n: usize = parse_tok(path, i + 1, toks[0], "node count")?;
                let d: usize = parse_tok(path, i + 1, toks[1], "dimension")?;
                break (n, d);
            }
        }
    };
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows == n {
            return Err(parse_err(
                path,
                i + 1,
                format!("more than {n} feature rows"),
            ));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: T = parse_tok(path, i + 1, tok, "real")?;
            if !v.is_finite() {
                return Err(parse_err(path, i + 1, format!("non-finite value {tok:?}")));
            }
            data.push(v);
        }
        if data.len() - before != d {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected {d} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Validation(format!(
            "{}: header declares {n} rows, found {rows}",
            path.display()
        )));
    }
    Matrix::from_vec(n, d, data)
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(parse_tok(path, i + 1, line, "non-negative class index")?);
    }
    Ok(labels)
}

/// Reads a graph from the edge, feature and optional label files.
pub fn load_graph<T: Real>(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<AttributedGraph<T>> {
    let attributes = load_features(feature_path)?;
    let edges = load_edges(edge_path)?;
    let labels = label_path.map(load_labels).transpose()?;
    AttributedGraph::new(attributes, edges, labels)
}

/// Features after `hops` applications of the normalized low-pass filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredFeatures<T> {
    pub matrix: Matrix<T>,
    pub hops: usize,
}

/// Applies `(I − L̃)^hops` to the node attributes, where
/// `I − L̃ = D̂^{-1/2} (A + I) D̂^{-1/2}` and `D̂` is the degree matrix of `A + I`.
pub fn laplacian_smooth<T: Real>(g: &AttributedGraph<T>, hops: usize) -> FilteredFeatures<T> {
    let adj = g.neighbors();
    let inv_sqrt_deg: Vec<T> = adj
        .iter()
        .map(|nb| T::one() / T::from_count(nb.len() + 1).sqrt())
        .collect();
    let mut x = g.attributes().clone();
    for _ in 0..hops {
        let mut next = Matrix::zeros(x.rows(), x.cols());
        for (i, nb) in adj.iter().enumerate() {
            let out = next.row_mut(i);
            let self_w = inv_sqrt_deg[i] * inv_sqrt_deg[i];
            for (o, &v) in out.iter_mut().zip(x.row(i)) {
                *o = self_w * v;
            }
            // neighbor lists are sorted, so the accumulation order is fixed
            for &j in nb {
                let w = inv_sqrt_deg[i] * inv_sqrt_deg[j];
                for (o, &v) in out.iter_mut().zip(x.row(j)) {
                    *o += w * v;
                }
            }
        }
        x = next;
    }
    FilteredFeatures { matrix: x, hops }
}

/// Stochastic block model parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SbmParams {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Euclidean distance between any two block means (unit-variance noise).
    pub mean_separation: f64,
    pub seed: u64,
}

impl SbmParams {
    fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.nodes_per_block == 0 {
            return Err(Error::Argument(
                "blocks and nodes_per_block must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return Err(Error::Argument(
                "edge probabilities must lie in [0, 1]".into(),
            ));
        }
        if self.p_out > self.p_in {
            return Err(Error::Argument(format!(
                "p_out ({}) exceeds p_in ({})",
                self.p_out, self.p_in
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::Argument("feature_dim must be >= 1".into()));
        }
        if !self.mean_separation.is_finite() || self.mean_separation < 0.0 {
            return Err(Error::Argument(
                "mean_separation must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Samples a planted-partition graph. Nodes are numbered block by block and
/// labelled with their block id.
///
/// Block means sit on scaled coordinate axes so that every pair is
/// `mean_separation` apart. When `feature_dim < blocks` the means are placed
/// along the first axis at consecutive spacing `mean_separation` instead.
pub fn generate_sbm<T: Real>(p: &SbmParams) -> Result<AttributedGraph<T>> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n = p.blocks * p.nodes_per_block;
    let labels: Vec<usize> = (0..n).map(|i| i / p.nodes_per_block).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let prob = if labels[u] == labels[v] {
                p.p_in
            } else {
                p.p_out
            };
            if rng.random::<f64>() < prob {
                edges.push((u, v));
            }
        }
    }

    let axis_scale = p.mean_separation / std::f64::consts::SQRT_2;
    let attributes = Matrix::from_fn(n, p.feature_dim, |i, c| {
        let b = labels[i];
        let mean = if p.feature_dim >= p.blocks {
            if c == b {
                axis_scale
            } else {
                0.0
            }
        } else if c == 0 {
            b as f64 * p.mean_separation
        } else {
            0.0
        };
        let noise: f64 = StandardNormal.sample(&mut rng);
        T::lit(mean + noise)
    });
    AttributedGraph::new(attributes, edges, Some(labels))
}
