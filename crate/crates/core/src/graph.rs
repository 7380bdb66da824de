//! Directed Erdős–Rényi graphs with self-loops, stored row-compressed,
//! plus the degree-discrepancy statistics and their concentration bound.
//!
//! The central quantity is the row (and column) discrepancy
//!
//! ```text
//! D_i = Σ_j |ξ_ij / p − 1|
//! ```
//!
//! which measures how far row `i` of the rescaled adjacency is from the
//! all-ones row of the complete graph. A Bernstein-type bound controls
//! `P(D_i ≥ K n)` for `K > 2`, uniformly in `i` after a union bound.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{self, domain};

/// Adjacency of a directed ER graph, compressed by rows and by columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ErGraph {
    n: usize,
    p: f64,
    seed: u64,
    out_ptr: Vec<usize>,
    out_idx: Vec<u32>,
    in_ptr: Vec<usize>,
    in_idx: Vec<u32>,
}

impl ErGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn edge_count(&self) -> usize {
        self.out_idx.len()
    }

    /// Sorted targets `j` with `ξ_ij = 1`.
    #[inline]
    pub fn out_row(&self, i: usize) -> &[u32] {
        &self.out_idx[self.out_ptr[i]..self.out_ptr[i + 1]]
    }

    /// Sorted sources `j` with `ξ_ji = 1`.
    #[inline]
    pub fn in_row(&self, i: usize) -> &[u32] {
        &self.in_idx[self.in_ptr[i]..self.in_ptr[i + 1]]
    }

    /// Builds a graph from explicit adjacency rows (used for imports and
    /// for constructing non-ER graphs in tests). Rows are sorted and
    /// validated; the column structure is derived.
    pub fn from_adjacency_rows(n: usize, p: f64, seed: u64, rows: Vec<Vec<u32>>) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Config(format!("edge probability must be in (0,1], got {p}")));
        }
        if rows.len() != n {
            return Err(Error::Config(format!(
                "expected {n} adjacency rows, got {}",
                rows.len()
            )));
        }
        let mut sorted_rows = rows;
        for (i, row) in sorted_rows.iter_mut().enumerate() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Config(format!("duplicate edge in row {i}")));
            }
            if let Some(&j) = row.last() {
                if j as usize >= n {
                    return Err(Error::Config(format!("row {i} references vertex {j} >= n")));
                }
            }
        }
        Ok(Self::assemble(n, p, seed, &sorted_rows))
    }

    fn assemble(n: usize, p: f64, seed: u64, rows: &[Vec<u32>]) -> Self {
        let mut out_ptr = Vec::with_capacity(n + 1);
        out_ptr.push(0usize);
        let mut total = 0usize;
        for row in rows {
            total += row.len();
            out_ptr.push(total);
        }
        let mut out_idx = Vec::with_capacity(total);
        for row in rows {
            out_idx.extend_from_slice(row);
        }

        // Transpose by counting sort; scanning rows in order keeps every
        // in-row sorted.
        let mut in_deg = vec![0usize; n];
        for &j in &out_idx {
            in_deg[j as usize] += 1;
        }
        let mut in_ptr = Vec::with_capacity(n + 1);
        in_ptr.push(0usize);
        let mut acc = 0usize;
        for d in &in_deg {
            acc += d;
            in_ptr.push(acc);
        }
        let mut cursor = in_ptr[..n].to_vec();
        let mut in_idx = vec![0u32; total];
        for (i, row) in rows.iter().enumerate() {
            for &j in row {
                in_idx[cursor[j as usize]] = i as u32;
                cursor[j as usize] += 1;
            }
        }

        ErGraph {
            n,
            p,
            seed,
            out_ptr,
            out_idx,
            in_ptr,
            in_idx,
        }
    }

    /// The graph with every edge reversed.
    pub fn transpose(&self) -> ErGraph {
        ErGraph {
            n: self.n,
            p: self.p,
            seed: self.seed,
            out_ptr: self.in_ptr.clone(),
            out_idx: self.in_idx.clone(),
            in_ptr: self.out_ptr.clone(),
            in_idx: self.out_idx.clone(),
        }
    }

    /// Writes the graph as a text edge list with a `n p seed` header line.
    pub fn write_edge_list<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{} {} {}", self.n, self.p, self.seed)?;
        for i in 0..self.n {
            for &j in self.out_row(i) {
                writeln!(w, "{i} {j}")?;
            }
        }
        Ok(())
    }

    /// Reads a graph written by [`ErGraph::write_edge_list`].
    pub fn read_edge_list<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let mut it = header.split_whitespace();
        let n: usize = it
            .next()
            .ok_or_else(|| Error::Parse("missing vertex count in header".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad vertex count: {e}")))?;
        let p: f64 = it
            .next()
            .ok_or_else(|| Error::Parse("missing edge probability in header".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad edge probability: {e}")))?;
        let seed: u64 = it
            .next()
            .ok_or_else(|| Error::Parse("missing seed in header".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad seed: {e}")))?;

        let mut rows = vec![Vec::new(); n];
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let mut it = t.split_whitespace();
            let parse = |s: Option<&str>| -> Result<usize> {
                s.ok_or_else(|| Error::Parse(format!("edge line {}: missing field", lineno + 2)))?
                    .parse()
                    .map_err(|e| Error::Parse(format!("edge line {}: {e}", lineno + 2)))
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            if i >= n || j >= n {
                return Err(Error::Parse(format!(
                    "edge line {}: vertex out of range",
                    lineno + 2
                )));
            }
            rows[i].push(j as u32);
        }
        Self::from_adjacency_rows(n, p, seed, rows)
    }
}

/// Samples a directed ER graph with self-loops.
///
/// Each entry `ξ_ij` (including `i = j`) is an independent Bernoulli(p)
/// draw from a counter-based stream keyed by `(seed, n, i, j)`, so the
/// result is bit-identical for a given `(n, p, seed)` regardless of how
/// rows are distributed over threads, and graphs for different `n` are
/// mutually independent.
pub fn sample_er(n: usize, p: f64, seed: u64) -> Result<ErGraph> {
    sample_er_with(n, p, seed, true)
}

/// As [`sample_er`], optionally forcing an empty diagonal. Off-diagonal
/// entries use the same stream either way.
pub fn sample_er_with(n: usize, p: f64, seed: u64, self_loops: bool) -> Result<ErGraph> {
    if n < 1 {
        return Err(Error::Config("vertex count must be >= 1".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!("edge probability must be in (0,1], got {p}")));
    }
    let key = rng::hash3(seed, n as u64, domain::GRAPH);
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity((p * n as f64 * 1.3) as usize + 4);
            for j in 0..n {
                if !self_loops && i == j {
                    continue;
                }
                if rng::uniform(rng::hash3(key, i as u64, j as u64)) < p {
                    row.push(j as u32);
                }
            }
            row
        })
        .collect();
    Ok(ErGraph::assemble(n, p, seed, &rows))
}

/// Row and column discrepancies of the rescaled adjacency.
#[derive(Clone, Debug)]
pub struct DegreeReport {
    /// `D_i = Σ_j |ξ_ij/p − 1|` per row.
    pub row_disc: Vec<f64>,
    /// `D'_i = Σ_j |ξ_ji/p − 1|` per column.
    pub col_disc: Vec<f64>,
    /// `max_i max(D_i, D'_i) / n`.
    pub max_disc: f64,
}

/// Computes the discrepancy report. With `d` ones in a row,
/// `Σ_j |ξ_ij/p − 1| = d (1/p − 1) + (n − d)` exactly.
pub fn degree_report(g: &ErGraph) -> DegreeReport {
    let n = g.n();
    let inv = 1.0 / g.p() - 1.0;
    let disc = |deg: usize| deg as f64 * inv + (n - deg) as f64;
    let row_disc: Vec<f64> = (0..n).map(|i| disc(g.out_row(i).len())).collect();
    let col_disc: Vec<f64> = (0..n).map(|i| disc(g.in_row(i).len())).collect();
    let max = row_disc
        .iter()
        .chain(col_disc.iter())
        .fold(0.0f64, |m, &v| m.max(v));
    DegreeReport {
        row_disc,
        col_disc,
        max_disc: max / n as f64,
    }
}

/// Tail bound `P(Σ_j |ξ_ij/p − 1| ≥ K n) ≤ exp(−3(K−2)²/(6+2(K−2)) · p n)`
/// for a single row, valid for `K > 2`.
pub fn bernstein_bound(k: f64, p: f64, n: usize) -> Result<f64> {
    if !(k > 2.0) {
        return Err(Error::Domain(format!("bernstein_bound requires K > 2, got {k}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("edge probability must be in (0,1], got {p}")));
    }
    if n < 1 {
        return Err(Error::Domain("n must be >= 1".into()));
    }
    let e = k - 2.0;
    let rate = 3.0 * e * e / (6.0 + 2.0 * e);
    Ok((-rate * p * n as f64).exp().clamp(0.0, 1.0))
}

/// Threshold `K_C = 2 + 2/(3C) + sqrt(4/(9C²) + 4/C)` above which the
/// discrepancy condition holds eventually along a schedule with
/// `liminf p_n n / log n = C`. Pass `f64::INFINITY` for the dense regime,
/// where the threshold degenerates to 2.
pub fn k_c(c: f64) -> Result<f64> {
    if c.is_infinite() && c > 0.0 {
        return Ok(2.0);
    }
    if !(c > 0.0) {
        return Err(Error::Domain(format!("k_c requires C > 0, got {c}")));
    }
    Ok(2.0 + 2.0 / (3.0 * c) + (4.0 / (9.0 * c * c) + 4.0 / c).sqrt())
}

/// Whether `max(sup_i D_i, sup_i D'_i) ≤ K n` on this realization.
pub fn degree_condition_holds(g: &ErGraph, k: f64) -> bool {
    debug_assert!(k > 0.0, "degree condition threshold should be positive");
    degree_report(g).max_disc <= k
}
