//! CSV formats for standalone rollouts: an initial state, an exogenous
//! series, and the resulting trajectory.

use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{ExogenousSeries, SystemState, N_SUBPOPS};

fn open(path: &Path, header: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let found: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if found != header {
        return Err(Error::parse(path, 1, format!("expected header {}", header.join(","))));
    }
    Ok(reader)
}

struct Row<'a> {
    rec: csv::StringRecord,
    path: &'a Path,
    line: usize,
}

impl Row<'_> {
    fn index(&self, k: usize, name: &str, len: usize) -> Result<usize> {
        let v: usize = self.field(k, name)?;
        if v >= len {
            return Err(Error::parse(self.path, self.line, format!("{name} {v} out of range (< {len})")));
        }
        Ok(v)
    }

    fn field<T: std::str::FromStr>(&self, k: usize, name: &str) -> Result<T> {
        self.rec
            .get(k)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::parse(self.path, self.line, format!("bad or missing {name}")))
    }

    fn real(&self, k: usize, name: &str) -> Result<f64> {
        let v: f64 = self.field(k, name)?;
        if !v.is_finite() {
            return Err(Error::parse(self.path, self.line, format!("{name} is not finite")));
        }
        Ok(v)
    }
}

fn rows<'a>(reader: &'a mut csv::Reader<std::fs::File>, path: &'a Path) -> impl Iterator<Item = Result<Row<'a>>> + 'a {
    reader.records().enumerate().map(move |(i, rec)| {
        let rec = rec?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        Ok(Row { rec, path, line })
    })
}

/// `node,subpop,count`. Entries not listed are zero.
pub fn read_state_csv(path: &Path, n_nodes: usize) -> Result<SystemState> {
    let mut reader = open(path, &["node", "subpop", "count"])?;
    let mut state = SystemState::zeros(n_nodes);
    for row in rows(&mut reader, path) {
        let row = row?;
        let node = row.index(0, "node", n_nodes)?;
        let s = row.index(1, "subpop", N_SUBPOPS)?;
        state.counts[node][s] = row.real(2, "count")?;
    }
    Ok(state)
}

/// `year,node,subpop,G,D,C`. Years must run contiguously from 0, and `C` must
/// agree across the subpopulation rows of a node.
pub fn read_exogenous_csv(path: &Path, n_nodes: usize) -> Result<ExogenousSeries> {
    let mut reader = open(path, &["year", "node", "subpop", "G", "D", "C"])?;
    let mut exo = ExogenousSeries::constant(vec![f64::NAN; n_nodes], 0);
    for row in rows(&mut reader, path) {
        let row = row?;
        let year: usize = row.field(0, "year")?;
        if year > exo.len() {
            return Err(Error::parse(path, row.line, format!("year {year} skips year {}", exo.len())));
        }
        if year == exo.len() {
            exo.growth.push(vec![[0.0; N_SUBPOPS]; n_nodes]);
            exo.decay.push(vec![[0.0; N_SUBPOPS]; n_nodes]);
            exo.capacity.push(vec![f64::NAN; n_nodes]);
        }
        let node = row.index(1, "node", n_nodes)?;
        let s = row.index(2, "subpop", N_SUBPOPS)?;
        exo.growth[year][node][s] = row.real(3, "G")?;
        exo.decay[year][node][s] = row.real(4, "D")?;
        let c = row.real(5, "C")?;
        let slot = &mut exo.capacity[year][node];
        if !slot.is_nan() && *slot != c {
            return Err(Error::parse(path, row.line, format!("capacity {c} disagrees with {slot} for node {node}")));
        }
        *slot = c;
    }
    if let Some((k, i)) = (0..exo.len()).flat_map(|k| (0..n_nodes).map(move |i| (k, i))).find(|&(k, i)| exo.capacity[k][i].is_nan()) {
        return Err(Error::parse(path, 0, format!("no capacity given for node {i} in year {k}")));
    }
    exo.validate()?;
    Ok(exo)
}

/// `year,node,subpop,count` with round-trip float formatting.
pub fn write_trajectory_csv(path: &Path, states: &[SystemState]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["year", "node", "subpop", "count"])?;
    for (y, state) in states.iter().enumerate() {
        for (node, counts) in state.counts.iter().enumerate() {
            for (s, c) in counts.iter().enumerate() {
                w.write_record([y.to_string(), node.to_string(), s.to_string(), format!("{c:?}")])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path, n_nodes: usize) -> Result<Vec<SystemState>> {
    let mut reader = open(path, &["year", "node", "subpop", "count"])?;
    let mut states: Vec<SystemState> = Vec::new();
    for row in rows(&mut reader, path) {
        let row = row?;
        let year: usize = row.field(0, "year")?;
        if year > states.len() {
            return Err(Error::parse(path, row.line, format!("year {year} skips year {}", states.len())));
        }
        if year == states.len() {
            states.push(SystemState::zeros(n_nodes));
        }
        let node = row.index(1, "node", n_nodes)?;
        let s = row.index(2, "subpop", N_SUBPOPS)?;
        states[year].counts[node][s] = row.real(3, "count")?;
    }
    Ok(states)
}
