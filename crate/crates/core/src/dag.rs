//! Inter-symptom directed acyclic graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parent structure among the binary symptoms.
///
/// `adjacency[j][s]` is true iff symptom `j` is a parent of symptom `s`.
/// `order` lists the symptoms so that every parent precedes its children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DagRepr", into = "DagRepr")]
pub struct SymptomDag {
    adjacency: Vec<Vec<bool>>,
    order: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DagRepr {
    adjacency: Vec<Vec<u8>>,
    order: Vec<usize>,
}

impl TryFrom<DagRepr> for SymptomDag {
    type Error = Error;
    fn try_from(r: DagRepr) -> Result<Self> {
        let mut adjacency = Vec::with_capacity(r.adjacency.len());
        for (j, row) in r.adjacency.into_iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (s, v) in row.into_iter().enumerate() {
                match v {
                    0 => out.push(false),
                    1 => out.push(true),
                    _ => return Err(Error::value(format!("adjacency[{j}][{s}]"), "not 0/1")),
                }
            }
            adjacency.push(out);
        }
        SymptomDag::new(adjacency, r.order)
    }
}

impl From<SymptomDag> for DagRepr {
    fn from(d: SymptomDag) -> Self {
        DagRepr {
            adjacency: d
                .adjacency
                .iter()
                .map(|row| row.iter().map(|&b| b as u8).collect())
                .collect(),
            order: d.order,
        }
    }
}

impl SymptomDag {
    /// Builds and validates a graph.
    pub fn new(adjacency: Vec<Vec<bool>>, order: Vec<usize>) -> Result<Self> {
        let dag = SymptomDag { adjacency, order };
        dag.validate()?;
        Ok(dag)
    }

    /// Builds a graph from an adjacency matrix, deriving a topological order.
    pub fn from_adjacency(adjacency: Vec<Vec<bool>>) -> Result<Self> {
        let order = topological_sort(&adjacency)?;
        SymptomDag::new(adjacency, order)
    }

    /// Graph with no edges over `d` symptoms.
    pub fn empty(d: usize) -> Self {
        SymptomDag {
            adjacency: vec![vec![false; d]; d],
            order: (0..d).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from][to]
    }

    /// Parents of `s` in ascending index order.
    pub fn parents(&self, s: usize) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.adjacency[j][s]).collect()
    }

    /// Number of parents of `s` (column sum).
    pub fn n_parents(&self, s: usize) -> usize {
        self.adjacency.iter().filter(|row| row[s]).count()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().flatten().filter(|&&b| b).count()
    }

    /// Bitmask of the parents of `s`.
    pub fn parent_mask(&self, s: usize) -> u32 {
        self.parents(s).iter().fold(0, |m, &j| m | (1 << j))
    }

    /// Checks the matrix is square and acyclic and that `order` sorts it
    /// topologically.
    pub fn validate(&self) -> Result<()> {
        let d = self.adjacency.len();
        if let Some(row) = self.adjacency.iter().position(|r| r.len() != d) {
            return Err(Error::Structural(format!("adjacency row {row} is not length {d}")));
        }
        topological_sort(&self.adjacency)?;
        if self.order.len() != d {
            return Err(Error::OrderInconsistent(format!(
                "order has {} entries for {d} nodes",
                self.order.len()
            )));
        }
        let mut pos = vec![usize::MAX; d];
        for (i, &v) in self.order.iter().enumerate() {
            if v >= d || pos[v] != usize::MAX {
                return Err(Error::OrderInconsistent(format!("not a permutation at {i}")));
            }
            pos[v] = i;
        }
        for j in 0..d {
            for s in 0..d {
                if self.adjacency[j][s] && pos[j] >= pos[s] {
                    return Err(Error::OrderInconsistent(format!(
                        "edge {j}->{s} runs against the order"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Kahn's algorithm; smallest available index first so the result is unique.
fn topological_sort(adjacency: &[Vec<bool>]) -> Result<Vec<usize>> {
    let d = adjacency.len();
    let mut indegree: Vec<usize> = (0..d)
        .map(|s| adjacency.iter().filter(|row| row.get(s).copied().unwrap_or(false)).count())
        .collect();
    let mut done = vec![false; d];
    let mut order = Vec::with_capacity(d);
    while order.len() < d {
        let Some(next) = (0..d).find(|&v| !done[v] && indegree[v] == 0) else {
            let stuck = (0..d).find(|&v| !done[v]).unwrap_or(0);
            return Err(Error::Cycle(stuck));
        };
        done[next] = true;
        order.push(next);
        for s in 0..d {
            if adjacency[next][s] {
                indegree[s] -= 1;
            }
        }
    }
    Ok(order)
}

/// Free-function form of [`SymptomDag::validate`].
pub fn validate_dag(dag: &SymptomDag) -> Result<()> {
    dag.validate()
}
