//! `dysat preprocess`: timestamped interaction logs to snapshot edge lists.
//!
//! Input lines are `u v epoch_seconds`, whitespace separated; node names
//! are arbitrary tokens. Interactions are bucketed into windows of
//! `window_days` days counted from the earliest timestamp, and repeated
//! interactions within a window add up into the edge weight. Self
//! interactions are dropped. Nodes are numbered in order of first
//! appearance.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::CliError;

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    /// Node names, indexed by assigned id.
    pub nodes: Vec<String>,
    /// `(step, u, v) -> weight` with `u < v`.
    pub edges: BTreeMap<(usize, usize, usize), f64>,
    pub num_steps: usize,
    pub dropped_self_loops: usize,
}

pub fn bucket<R: BufRead>(reader: R, window_days: f64) -> Result<Preprocessed, String> {
    if !(window_days > 0.0 && window_days.is_finite()) {
        return Err(format!("window length {window_days} days is not positive"));
    }
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let [u, v, ts] = fields[..] else {
            return Err(format!("line {}: expected `u v epoch`, found {} fields", i + 1, fields.len()));
        };
        let ts: f64 = ts
            .parse()
            .map_err(|e| format!("line {}: bad timestamp `{ts}`: {e}", i + 1))?;
        if !ts.is_finite() {
            return Err(format!("line {}: timestamp is not finite", i + 1));
        }
        records.push((u.to_string(), v.to_string(), ts));
    }
    let Some(start) = records.iter().map(|r| r.2).reduce(f64::min) else {
        return Err("no interactions in input".into());
    };
    let width = window_days * SECONDS_PER_DAY;
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut id = |name: &str| {
        *ids.entry(name.to_string()).or_insert_with(|| {
            nodes.push(name.to_string());
            nodes.len() - 1
        })
    };
    let mut edges = BTreeMap::new();
    let mut dropped = 0;
    let mut num_steps = 0;
    for (u, v, ts) in &records {
        let (a, b) = (id(u), id(v));
        let step = ((ts - start) / width).floor() as usize;
        num_steps = num_steps.max(step + 1);
        if a == b {
            dropped += 1;
            continue;
        }
        *edges.entry((step, a.min(b), a.max(b))).or_insert(0.0) += 1.0;
    }
    Ok(Preprocessed {
        nodes,
        edges,
        num_steps,
        dropped_self_loops: dropped,
    })
}

pub fn run(input: &Path, window_days: f64, edges_out: &Path, nodes_out: &Path) -> Result<Preprocessed, CliError> {
    let bad = |msg: String| CliError::Input {
        path: input.to_path_buf(),
        msg,
    };
    let file = File::open(input).map_err(|e| bad(e.to_string()))?;
    let p = bucket(BufReader::new(file), window_days).map_err(bad)?;
    for path in [edges_out, nodes_out] {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        }
    }
    let mut w = BufWriter::new(File::create(edges_out).map_err(CliError::io(edges_out))?);
    let write_edges = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "# t u v w")?;
        for (&(t, u, v), weight) in &p.edges {
            writeln!(w, "{t} {u} {v} {weight}")?;
        }
        w.flush()
    };
    write_edges(&mut w).map_err(CliError::io(edges_out))?;
    let mut w = BufWriter::new(File::create(nodes_out).map_err(CliError::io(nodes_out))?);
    let write_nodes = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        for (i, name) in p.nodes.iter().enumerate() {
            writeln!(w, "{i}\t{name}")?;
        }
        w.flush()
    };
    write_nodes(&mut w).map_err(CliError::io(nodes_out))?;
    Ok(p)
}
