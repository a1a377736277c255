//! Region graph and the state containers the dynamics operate on.
//!
//! Node ordering for the case study is fixed: urban = 0, suburban = 1,
//! rural = 2, outmigrated = 3. Every matrix and CSV column follows it.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Number of subpopulations (low, middle, high income).
pub const N_SUBPOPS: usize = 3;

pub const URBAN: usize = 0;
pub const SUBURBAN: usize = 1;
pub const RURAL: usize = 2;
pub const OUTMIGRATED: usize = 3;

pub const CASE_STUDY_LABELS: [&str; 4] = ["urban", "suburban", "rural", "outmigrated"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Topology {
    Complete,
    /// Undirected edges given by label pairs.
    Edges(Vec<(String, String)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionGraph {
    labels: Vec<String>,
    adjacency: Vec<Vec<u8>>,
}

impl RegionGraph {
    pub fn build<S: AsRef<str>>(labels: &[S], topology: &Topology) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("graph needs at least one node label".into()));
        }
        let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Config(format!("duplicate node label {l:?}")));
            }
        }
        let n = labels.len();
        let mut adjacency = vec![vec![0u8; n]; n];
        match topology {
            Topology::Complete => {
                for (i, row) in adjacency.iter_mut().enumerate() {
                    for (j, a) in row.iter_mut().enumerate() {
                        *a = u8::from(i != j);
                    }
                }
            }
            Topology::Edges(edges) => {
                let find = |name: &str| {
                    labels
                        .iter()
                        .position(|l| l == name)
                        .ok_or_else(|| Error::Config(format!("edge references unknown label {name:?}")))
                };
                for (a, b) in edges {
                    let (i, j) = (find(a)?, find(b)?);
                    if i == j {
                        return Err(Error::Config(format!("self-edge on {a:?}")));
                    }
                    adjacency[i][j] = 1;
                    adjacency[j][i] = 1;
                }
            }
        }
        Ok(Self { labels, adjacency })
    }

    /// Complete graph over urban/suburban/rural/outmigrated.
    pub fn case_study() -> Self {
        Self::build(&CASE_STUDY_LABELS, &Topology::Complete).expect("static labels are valid")
    }

    /// Graph with `n` nodes labelled `n0..`, built from index pairs.
    pub fn from_index_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let labels: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let named = edges
            .iter()
            .map(|&(i, j)| {
                let get = |k: usize| labels.get(k).cloned().ok_or(Error::Bounds { index: k, len: n });
                Ok((get(i)?, get(j)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::build(&labels, &Topology::Edges(named))
    }

    pub fn complete(n: usize) -> Result<Self> {
        let labels: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        Self::build(&labels, &Topology::Complete)
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn adjacency(&self) -> &[Vec<u8>] {
        &self.adjacency
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j] == 1
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().flatten().filter(|&&a| a == 1).count() / 2
    }

    pub fn neighbors(&self, node: usize) -> Result<Vec<usize>> {
        let row = self.adjacency.get(node).ok_or(Error::Bounds {
            index: node,
            len: self.n_nodes(),
        })?;
        Ok(row
            .iter()
            .enumerate()
            .filter_map(|(j, &a)| (a == 1).then_some(j))
            .collect())
    }

    /// Relabel nodes so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n_nodes();
        assert_eq!(perm.len(), n);
        let labels = perm.iter().map(|&p| self.labels[p].clone()).collect();
        let adjacency = (0..n)
            .map(|a| (0..n).map(|b| self.adjacency[perm[a]][perm[b]]).collect())
            .collect();
        Self { labels, adjacency }
    }

    /// Plain-text form: labels on the first line, then one 0/1 row per node.
    pub fn to_text(&self) -> String {
        let mut out = self.labels.join(",");
        out.push('\n');
        for row in &self.adjacency {
            let cells: Vec<String> = row.iter().map(u8::to_string).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn from_text(text: &str, source: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(source, 1, "empty graph file"))?;
        let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let n = labels.len();
        let mut adjacency = Vec::with_capacity(n);
        for (lineno, line) in lines {
            let row = line
                .split(',')
                .map(|c| match c.trim() {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::parse(source, lineno + 1, format!("adjacency entry {other:?} is not 0 or 1"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != n {
                return Err(Error::parse(source, lineno + 1, format!("expected {n} entries, found {}", row.len())));
            }
            adjacency.push(row);
        }
        if adjacency.len() != n {
            return Err(Error::parse(source, n + 1, format!("expected {n} adjacency rows, found {}", adjacency.len())));
        }
        for i in 0..n {
            if adjacency[i][i] != 0 {
                return Err(Error::parse(source, i + 2, "self-edge on diagonal"));
            }
            for j in 0..n {
                if adjacency[i][j] != adjacency[j][i] {
                    return Err(Error::parse(source, i + 2, format!("adjacency not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { labels, adjacency })
    }
}

/// Per-node subpopulation counts, in people.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub counts: Vec<[f64; N_SUBPOPS]>,
}

impl SystemState {
    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            counts: vec![[0.0; N_SUBPOPS]; n_nodes],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.counts.iter().flatten().all(|&c| c >= 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.counts.iter().flatten().all(|c| c.is_finite())
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.counts.iter().flatten().copied()
    }
}

/// Exogenous growth, decay, and capacity series indexed by time step.
///
/// `growth[k]` and `decay[k]` drive the transition from step `k` to `k + 1`;
/// `capacity[k]` is the housing capacity at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousSeries {
    pub growth: Vec<Vec<[f64; N_SUBPOPS]>>,
    pub decay: Vec<Vec<[f64; N_SUBPOPS]>>,
    pub capacity: Vec<Vec<f64>>,
}

impl ExogenousSeries {
    /// Zero growth and decay with constant capacity over `len` steps.
    pub fn constant(capacity: Vec<f64>, len: usize) -> Self {
        let n = capacity.len();
        Self {
            growth: vec![vec![[0.0; N_SUBPOPS]; n]; len],
            decay: vec![vec![[0.0; N_SUBPOPS]; n]; len],
            capacity: vec![capacity; len],
        }
    }

    pub fn len(&self) -> usize {
        self.capacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacity.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.capacity.first().map_or(0, Vec::len)
    }

    /// Capacity at time `t`, piecewise constant per step.
    pub fn capacity_at(&self, t: f64) -> &[f64] {
        let k = (t.max(0.0).floor() as usize).min(self.len().saturating_sub(1));
        &self.capacity[k]
    }

    pub fn validate(&self) -> Result<()> {
        if self.growth.len() != self.len() || self.decay.len() != self.len() {
            return Err(Error::Contract("exogenous series have mismatched lengths".into()));
        }
        let n = self.n_nodes();
        for (k, caps) in self.capacity.iter().enumerate() {
            if caps.len() != n || self.growth[k].len() != n || self.decay[k].len() != n {
                return Err(Error::Contract(format!("exogenous step {k} has wrong node count")));
            }
            if let Some(c) = caps.iter().find(|&&c| !(c > 0.0)) {
                return Err(Error::Domain(format!("capacity {c} at step {k} is not positive")));
            }
            if self.growth[k].iter().flatten().any(|&g| g < 0.0) {
                return Err(Error::Domain(format!("negative growth at step {k}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn complete_four_nodes() {
        let g = RegionGraph::case_study();
        let ones: usize = g.adjacency().iter().flatten().map(|&a| a as usize).sum();
        assert_eq!(ones, 12);
        assert!((0..4).all(|i| !g.is_edge(i, i)));
        assert_eq!(g.neighbors(0).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn single_node_has_no_self_edge() {
        let g = RegionGraph::build(&["urban"], &Topology::Complete).unwrap();
        assert_eq!(g.adjacency(), &[vec![0u8]]);
    }

    #[test]
    fn custom_edge_is_symmetric() {
        let g = RegionGraph::build(
            &["urban", "suburban", "rural"],
            &Topology::Edges(vec![("urban".into(), "suburban".into())]),
        )
        .unwrap();
        assert_eq!(g.adjacency(), &[vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 0]]);
    }

    #[test]
    fn unknown_label_is_config_error() {
        let err = RegionGraph::build(
            &["urban", "rural"],
            &Topology::Edges(vec![("urban".into(), "mars".into())]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn neighbors_edge_cases() {
        let edgeless = RegionGraph::from_index_edges(3, &[]).unwrap();
        assert!(edgeless.neighbors(0).unwrap().is_empty());
        let g = RegionGraph::from_index_edges(3, &[(0, 2)]).unwrap();
        assert_eq!(g.neighbors(2).unwrap(), vec![0]);
        assert!(matches!(g.neighbors(3), Err(Error::Bounds { index: 3, len: 3 })));
    }

    #[test]
    fn text_round_trip_and_rejections() {
        let g = RegionGraph::from_index_edges(4, &[(0, 1), (2, 3), (1, 3)]).unwrap();
        let back = RegionGraph::from_text(&g.to_text(), Path::new("g.txt")).unwrap();
        assert_eq!(g, back);

        let asym = "a,b\n0,1\n0,0\n";
        assert!(matches!(RegionGraph::from_text(asym, Path::new("x")), Err(Error::Parse { .. })));
        let bad = "a,b\n0,2\n1,0\n";
        assert!(matches!(RegionGraph::from_text(bad, Path::new("x")), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn capacity_must_be_positive() {
        let ex = ExogenousSeries::constant(vec![1.0, 0.0], 3);
        assert!(matches!(ex.validate(), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn adjacency_symmetric_and_neighbors_mutual(
            n in 1usize..8,
            raw in proptest::collection::vec((0usize..8, 0usize..8), 0..20),
        ) {
            let edges: Vec<_> = raw.into_iter().map(|(a, b)| (a % n, b % n)).filter(|(a, b)| a != b).collect();
            let g = RegionGraph::from_index_edges(n, &edges).unwrap();
            for i in 0..n {
                prop_assert_eq!(g.adjacency()[i][i], 0);
                for j in 0..n {
                    prop_assert_eq!(g.adjacency()[i][j], g.adjacency()[j][i]);
                    let ij = g.neighbors(i).unwrap().contains(&j);
                    let ji = g.neighbors(j).unwrap().contains(&i);
                    prop_assert_eq!(ij, ji);
                }
            }
        }
    }
}
