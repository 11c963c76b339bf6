use std::fmt;

use crate::error::{Error, Result};

/// Binary `M x N` collaboration topology with self loops on the first `M`
/// sensors, together with the column-major map between nonzero entries of a
/// collaboration matrix and positions of the collaboration vector.
#[derive(Clone, PartialEq, Eq)]
pub struct Topology {
    m: usize,
    n: usize,
    a: Vec<bool>,
    index_map: Vec<(usize, usize)>,
    lookup: Vec<Option<usize>>,
}

impl Topology {
    /// Builds a topology from a row-major `m x n` support pattern.
    pub fn new(m: usize, n: usize, a: Vec<bool>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidTopology("empty topology".into()));
        }
        if m > n {
            return Err(Error::InvalidTopology(format!("M = {m} exceeds N = {n}")));
        }
        if a.len() != m * n {
            return Err(Error::Dimension(format!(
                "support has {} entries, expected {}",
                a.len(),
                m * n
            )));
        }
        for i in 0..m {
            if !a[i * n + i] {
                return Err(Error::MissingSelfLoop(i));
            }
        }
        let mut index_map = Vec::new();
        let mut lookup = vec![None; m * n];
        for col in 0..n {
            for row in 0..m {
                if a[row * n + col] {
                    lookup[row * n + col] = Some(index_map.len());
                    index_map.push((row, col));
                }
            }
        }
        Ok(Self {
            m,
            n,
            a,
            index_map,
            lookup,
        })
    }

    /// Builds a topology from rows of 0/1 entries.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut a = Vec::with_capacity(m * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!("row {i} has length {}", row.len())));
            }
            for &v in row {
                match v {
                    0 => a.push(false),
                    1 => a.push(true),
                    _ => return Err(Error::InvalidTopology(format!("entry {v} is not binary"))),
                }
            }
        }
        Self::new(m, n, a)
    }

    /// Self loops only: `[I_m, 0]`.
    pub fn self_loops(m: usize, n: usize) -> Result<Self> {
        let mut a = vec![false; m * n];
        for i in 0..m.min(n) {
            a[i * n + i] = true;
        }
        Self::new(m, n, a)
    }

    pub fn full(m: usize, n: usize) -> Result<Self> {
        Self::new(m, n, vec![true; m * n])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of collaboration weights.
    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.a[row * self.n + col]
    }

    /// `(row, col)` of weight `l`.
    pub fn entry(&self, l: usize) -> (usize, usize) {
        self.index_map[l]
    }

    pub fn index_map(&self) -> &[(usize, usize)] {
        &self.index_map
    }

    /// Vector position of `W[row, col]`, if that entry is supported.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        self.lookup[row * self.n + col]
    }

    /// Positions of the off-diagonal weights (`row != col`) in vector order.
    pub fn off_diagonal_positions(&self) -> Vec<usize> {
        self.index_map
            .iter()
            .enumerate()
            .filter(|(_, (r, c))| r != c)
            .map(|(l, _)| l)
            .collect()
    }

    /// Undirected neighbour lists over all `N` sensors.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(r, c) in &self.index_map {
            if r != c {
                if !adj[r].contains(&c) {
                    adj[r].push(c);
                }
                if !adj[c].contains(&r) {
                    adj[c].push(r);
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Row-major 0/1 support.
    pub fn support(&self) -> &[bool] {
        &self.a
    }
}

impl fmt::Debug for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Topology {}x{} (L = {})", self.m, self.n, self.len())?;
        for row in 0..self.m {
            let line: Vec<&str> = (0..self.n)
                .map(|c| if self.contains(row, c) { "1" } else { "0" })
                .collect();
            writeln!(f, "  {}", line.join(" "))?;
        }
        Ok(())
    }
}
