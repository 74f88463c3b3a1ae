//! Edge-list text format: one `t u v w` record per line, whitespace
//! separated. Blank lines and lines starting with `#` are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{GraphError, Snapshot, SnapshotSequence};

pub fn load_snapshots(path: &Path, num_nodes: usize) -> Result<SnapshotSequence, GraphError> {
    parse_snapshots(BufReader::new(File::open(path)?), num_nodes)
}

/// Parses an edge list. `T` is one more than the largest step index seen;
/// steps with no lines become edgeless snapshots.
pub fn parse_snapshots<R: BufRead>(
    reader: R,
    num_nodes: usize,
) -> Result<SnapshotSequence, GraphError> {
    let mut per_step: Vec<Vec<(usize, usize, f64)>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let Some((t, u, v, w)) = parse_record(&line, lineno)? else {
            continue;
        };
        for node in [u, v] {
            if node >= num_nodes {
                return Err(GraphError::Range {
                    line: lineno,
                    node,
                    num_nodes,
                });
            }
        }
        if u == v {
            return Err(GraphError::Parse {
                line: lineno,
                msg: "self loop".into(),
            });
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(GraphError::Parse {
                line: lineno,
                msg: format!("weight {w} is not positive"),
            });
        }
        if per_step.len() <= t {
            per_step.resize_with(t + 1, Vec::new);
        }
        per_step[t].push((u, v, w));
    }
    let snapshots = per_step
        .into_iter()
        .map(|edges| Snapshot::from_edges(num_nodes, edges))
        .collect::<Result<Vec<_>, _>>()?;
    SnapshotSequence::new(num_nodes, snapshots)
}

fn parse_record(
    line: &str,
    lineno: usize,
) -> Result<Option<(usize, usize, usize, f64)>, GraphError> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let fields: Vec<&str> = trimmed.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(GraphError::Parse {
            line: lineno,
            msg: format!("expected `t u v w`, found {} fields", fields.len()),
        });
    }
    let int = |s: &str, what: &str| {
        s.parse::<usize>().map_err(|e| GraphError::Parse {
            line: lineno,
            msg: format!("bad {what} `{s}`: {e}"),
        })
    };
    let w = fields[3].parse::<f64>().map_err(|e| GraphError::Parse {
        line: lineno,
        msg: format!("bad weight `{}`: {e}", fields[3]),
    })?;
    Ok(Some((
        int(fields[0], "time step")?,
        int(fields[1], "node id")?,
        int(fields[2], "node id")?,
        w,
    )))
}

/// Smallest node count that covers every id in the file.
pub fn infer_num_nodes(path: &Path) -> Result<usize, GraphError> {
    let mut max = None;
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        if let Some((_, u, v, _)) = parse_record(&line?, i + 1)? {
            max = max.max(Some(u.max(v)));
        }
    }
    max.map(|m| m + 1).ok_or(GraphError::Empty)
}

/// Writes each undirected edge once (`u < v`), steps in order.
pub fn write_snapshots<W: Write>(w: &mut W, seq: &SnapshotSequence) -> std::io::Result<()> {
    for (t, s) in seq.snapshots().iter().enumerate() {
        for (u, v, weight) in s.undirected_edges() {
            writeln!(w, "{t} {u} {v} {weight}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_edge() {
        let seq = parse_snapshots("0 0 1 1.0".as_bytes(), 2).unwrap();
        assert_eq!(seq.len(), 1);
        let edges: Vec<_> = seq.snapshots()[0].edges().collect();
        assert_eq!(edges, vec![(0, 1, 1.0), (1, 0, 1.0)]);
    }

    #[test]
    fn repeated_lines_are_summed() {
        let seq = parse_snapshots("0 0 1 1.0\n0 0 1 2.0\n".as_bytes(), 2).unwrap();
        assert_eq!(seq.snapshots()[0].weight(0, 1), Some(3.0));
    }

    #[test]
    fn gaps_become_empty_snapshots() {
        let seq = parse_snapshots("0 0 1 1\n2 0 1 1\n".as_bytes(), 2).unwrap();
        assert_eq!(seq.len(), 3);
        assert!(seq.snapshots()[1].is_edgeless());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_snapshots("0 0 1 1\n0 0 x 1\n".as_bytes(), 2).unwrap_err();
        assert!(matches!(e, GraphError::Parse { line: 2, .. }), "{e}");
        let e = parse_snapshots("# header\n0 0 5 1\n".as_bytes(), 2).unwrap_err();
        assert!(matches!(e, GraphError::Range { line: 2, node: 5, .. }), "{e}");
    }

    #[test]
    fn ten_window_file_gives_ten_steps() {
        let mut text = String::new();
        for t in 0..10 {
            text.push_str(&format!("{t} {} {} 1\n", t % 5, 5 + t % 3));
        }
        assert_eq!(parse_snapshots(text.as_bytes(), 143).unwrap().len(), 10);
    }

    proptest! {
        #[test]
        fn write_then_load_preserves_edges(
            lines in proptest::collection::vec((0usize..4, 0usize..6, 0usize..6, 1u32..5), 1..40)
        ) {
            let mut text = String::new();
            for (t, u, v, w) in &lines {
                if u != v {
                    text.push_str(&format!("{t} {u} {v} {w}\n"));
                }
            }
            prop_assume!(!text.is_empty());
            let seq = parse_snapshots(text.as_bytes(), 6).unwrap();
            let mut out = Vec::new();
            write_snapshots(&mut out, &seq).unwrap();
            let back = parse_snapshots(out.as_slice(), 6).unwrap();
            // trailing empty steps are not representable in the text format
            prop_assert_eq!(&back.snapshots()[..], &seq.snapshots()[..back.len()]);
            prop_assert!(seq.snapshots()[back.len()..].iter().all(Snapshot::is_edgeless));
        }
    }
}
