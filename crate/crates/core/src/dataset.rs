//! Dataset directories, splits, and a stochastic-block-model generator.
//!
//! A dataset directory holds three ASCII files:
//!
//! * `graph.txt`: first line `n m`, then `m` lines `u v` (0-based ids).
//! * `features.txt`: `n` lines of `d` space-separated floats.
//! * `labels.txt`: `n` lines, one class id each.
//!
//! Optionally `splits/<name>.json` holds `{"train": [...], "val": [...], "test": [...]}`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, Graph};
use crate::numkit::{DenseMatrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(graph: Graph, features: DenseMatrix, labels: Vec<usize>) -> Result<Self> {
        let n = graph.node_count();
        if features.rows() != n || labels.len() != n {
            return Err(Error::invalid(format!(
                "dataset sizes disagree: graph has {n} nodes, features {} rows, labels {}",
                features.rows(),
                labels.len()
            )));
        }
        let num_classes = labels.iter().max().map_or(0, |&c| c + 1);
        if num_classes < 2 {
            return Err(Error::invalid("dataset needs at least two classes"));
        }
        Ok(Self {
            graph,
            features,
            labels,
            num_classes,
        })
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// One-hot target matrix, `n × c`.
    pub fn one_hot(&self) -> DenseMatrix {
        let mut y = DenseMatrix::zeros(self.node_count(), self.num_classes);
        for (i, &c) in self.labels.iter().enumerate() {
            y.set(i, c, 1.0);
        }
        y
    }

    /// Copy with every feature row scaled to unit L1 norm (zero rows kept).
    pub fn row_normalized(&self) -> Dataset {
        let mut features = self.features.clone();
        for i in 0..features.rows() {
            let norm = features.row_l1_norm(i);
            if norm > 0.0 {
                features.row_mut(i).iter_mut().for_each(|x| *x /= norm);
            }
        }
        Dataset {
            features,
            ..self.clone()
        }
    }

    pub fn with_graph(&self, graph: Graph) -> Result<Dataset> {
        if graph.node_count() != self.node_count() {
            return Err(Error::invalid("replacement graph changes the node count"));
        }
        Ok(Dataset {
            graph,
            ..self.clone()
        })
    }

    /// Writes the directory format read by [`load_dataset`].
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: String| -> Result<()> {
            let path = dir.join(name);
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))
        };
        let mut graph = format!("{} {}\n", self.node_count(), self.graph.edge_count());
        for (u, v) in self.graph.edges() {
            graph.push_str(&format!("{u} {v}\n"));
        }
        write("graph.txt", graph)?;
        let mut feats = String::new();
        for i in 0..self.features.rows() {
            let row: Vec<String> = self.features.row(i).iter().map(|x| format!("{x:?}")).collect();
            feats.push_str(&row.join(" "));
            feats.push('\n');
        }
        write("features.txt", feats)?;
        let labels: String = self.labels.iter().map(|c| format!("{c}\n")).collect();
        write("labels.txt", labels)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("malformed number {tok:?}")))
}

fn lines(body: &str) -> impl Iterator<Item = (usize, &str)> {
    body.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Reads `graph.txt`, `features.txt` and `labels.txt` from `dir`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let graph_path = dir.join("graph.txt");
    let body = read(&graph_path)?;
    let mut it = lines(&body);
    let (hline, header) = it
        .next()
        .ok_or_else(|| parse_err(&graph_path, 1, "missing \"n m\" header"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err(parse_err(&graph_path, hline, "header must be \"n m\""));
    }
    let n: usize = parse_field(&graph_path, hline, head[0])?;
    let m: usize = parse_field(&graph_path, hline, head[1])?;
    let mut edges = Vec::with_capacity(m);
    for (ln, l) in it {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(&graph_path, ln, "edge line must be \"u v\""));
        }
        let u: usize = parse_field(&graph_path, ln, toks[0])?;
        let v: usize = parse_field(&graph_path, ln, toks[1])?;
        if u >= n || v >= n {
            return Err(parse_err(&graph_path, ln, format!("edge ({u}, {v}) outside 0..{n}")));
        }
        edges.push((u, v));
    }
    if edges.len() != m {
        return Err(parse_err(
            &graph_path,
            hline,
            format!("header declares {m} edges, found {}", edges.len()),
        ));
    }
    let graph = build_graph(n, &edges)?;

    let feat_path = dir.join("features.txt");
    let body = read(&feat_path)?;
    let mut data = Vec::new();
    let mut d = None;
    let mut rows = 0;
    for (ln, l) in lines(&body) {
        let before = data.len();
        for tok in l.split_whitespace() {
            let x: f64 = parse_field(&feat_path, ln, tok)?;
            if !x.is_finite() {
                return Err(parse_err(&feat_path, ln, "non-finite feature value"));
            }
            data.push(x);
        }
        let width = data.len() - before;
        match d {
            None => d = Some(width),
            Some(w) if w != width => {
                return Err(parse_err(
                    &feat_path,
                    ln,
                    format!("expected {w} features, found {width}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(
            &feat_path,
            rows,
            format!("expected {n} feature rows, found {rows}"),
        ));
    }
    let features = DenseMatrix::new(n, d.unwrap_or(0), data)?;

    let label_path = dir.join("labels.txt");
    let body = read(&label_path)?;
    let mut labels = Vec::with_capacity(n);
    for (ln, l) in lines(&body) {
        labels.push(parse_field::<usize>(&label_path, ln, l)?);
    }
    if labels.len() != n {
        return Err(parse_err(
            &label_path,
            labels.len(),
            format!("expected {n} labels, found {}", labels.len()),
        ));
    }
    Dataset::new(graph, features, labels)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::invalid("split has an empty training set"));
        }
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::invalid(format!("split index {i} outside 0..{n}")));
            }
            if seen[i] {
                return Err(Error::invalid(format!("node {i} appears in two split parts")));
            }
            seen[i] = true;
        }
        Ok(())
    }

    /// Boolean membership mask of the training set.
    pub fn train_mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in &self.train {
            m[i] = true;
        }
        m
    }

    pub fn load(path: &Path) -> Result<Split> {
        let split: Split = serde_json::from_str(&read(path)?)?;
        Ok(split)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self)?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// Path of a stored split `name` inside a dataset directory.
pub fn split_path(dir: &Path, name: &str) -> PathBuf {
    dir.join("splits").join(format!("{name}.json"))
}

/// Shuffles `0..n` and cuts it by `⌊f·n⌋` counts; leftovers go to test.
pub fn random_split(n: usize, fractions: (f64, f64, f64), rng: &mut Rng) -> Result<Split> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) || ft + fv + fs > 1.0 + 1e-12 {
        return Err(Error::invalid(format!(
            "split fractions must be positive and sum to at most 1, got {fractions:?}"
        )));
    }
    let n_train = (ft * n as f64).floor() as usize;
    let n_val = (fv * n as f64).floor() as usize;
    if n_train == 0 {
        return Err(Error::invalid(format!("{n} nodes leave the training set empty")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let test = perm.split_off(n_train + n_val);
    let val = perm.split_off(n_train);
    Ok(Split {
        train: perm,
        val,
        test,
    })
}

/// `per_class` training nodes from every class, `val_size` validation nodes
/// from the rest, and everything else as test.
pub fn sparse_split(
    labels: &[usize],
    per_class: usize,
    val_size: usize,
    rng: &mut Rng,
) -> Result<Split> {
    let c = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut train = Vec::with_capacity(per_class * c);
    let mut rest = Vec::new();
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.len() < per_class {
            return Err(Error::invalid(format!(
                "class {class} has {} nodes, fewer than {per_class}",
                members.len()
            )));
        }
        members.shuffle(rng);
        train.extend_from_slice(&members[..per_class]);
        rest.extend_from_slice(&members[per_class..]);
    }
    if val_size > rest.len() {
        return Err(Error::invalid(format!(
            "validation size {val_size} exceeds the {} non-training nodes",
            rest.len()
        )));
    }
    rest.sort_unstable();
    rest.shuffle(rng);
    let test = rest.split_off(val_size);
    let split = Split {
        train,
        val: rest,
        test,
    };
    split.validate(labels.len())?;
    Ok(split)
}

/// Stochastic block model with `c` equal blocks. Features are the one-hot
/// block signal in the first `c` columns plus unit Gaussian noise everywhere.
pub fn synthetic(
    n: usize,
    d: usize,
    c: usize,
    p_in: f64,
    p_out: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if c < 2 || n < c {
        return Err(Error::invalid(format!("synthetic needs n >= c >= 2, got n={n}, c={c}")));
    }
    if d < c {
        return Err(Error::invalid(format!("feature dimension {d} below class count {c}")));
    }
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out > p_in {
        return Err(Error::invalid(format!(
            "need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    let labels: Vec<usize> = (0..n).map(|i| i * c / n).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.uniform() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = build_graph(n, &edges)?;
    let mut features = DenseMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            features.set(i, j, rng.gaussian());
        }
        let v = features.get(i, labels[i]) + 1.0;
        features.set(i, labels[i], v);
    }
    Dataset::new(graph, features, labels)
}
