//! Sparse symmetric `LDL^T` factorization without pivoting, supernodal and
//! multifrontal.
//!
//! One [`LdltAnalysis`] (ordering plus symbolic structure) serves every shift
//! of the same matrix. The numeric phase either only tracks pivot signs, which
//! gives the inertia of `A - sigma I` with memory bounded by the frontal
//! stack, or keeps the factor for solves.

use super::ordering::nested_dissection;
use crate::error::{Error, Result};
use crate::graph::SparseSymLaplacian;

/// Pivots smaller than this in magnitude abort the factorization.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

const NONE: u32 = u32::MAX;
const PANEL: usize = 48;

/// Ordering and supernodal structure of a symmetric sparse matrix.
#[derive(Debug, Clone)]
pub struct LdltAnalysis {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<u32>,
    /// Lower triangle of the permuted matrix by column; the first entry of
    /// each column is its diagonal.
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
    /// Supernode `s` owns columns `sn_start[s]..sn_start[s + 1]`.
    sn_start: Vec<usize>,
    /// Row indices strictly below the supernode's last column, ascending.
    sn_rows_ptr: Vec<usize>,
    sn_rows: Vec<u32>,
    sn_children: Vec<u32>,
    max_front: usize,
}

impl LdltAnalysis {
    pub fn new(lap: &SparseSymLaplacian) -> Self {
        let n = lap.n();
        let adjacency: Vec<&[u32]> = (0..n).map(|i| lap.row(i).0).collect();
        let nd = nested_dissection(n, |i| adjacency[i]);

        // Relabel so the elimination tree is postordered.
        let (col_ptr, row_idx, _) = permuted_lower(lap, &nd);
        let parent = etree_from_lower(n, &col_ptr, &row_idx);
        let post = postorder(&parent);
        let perm: Vec<u32> = post.iter().map(|&k| nd[k as usize]).collect();

        let (col_ptr, row_idx, values) = permuted_lower(lap, &perm);
        let parent = etree_from_lower(n, &col_ptr, &row_idx);
        let mut analysis = Self {
            n,
            perm,
            col_ptr,
            row_idx,
            values,
            sn_start: Vec::new(),
            sn_rows_ptr: Vec::new(),
            sn_rows: Vec::new(),
            sn_children: Vec::new(),
            max_front: 0,
        };
        analysis.supernodes(&parent);
        analysis
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_supernodes(&self) -> usize {
        self.sn_start.len() - 1
    }

    pub fn max_front(&self) -> usize {
        self.max_front
    }

    /// Number of stored factor entries (below-diagonal, including the
    /// explicit zeros of dense supernode blocks).
    pub fn factor_nnz(&self) -> usize {
        (0..self.n_supernodes())
            .map(|s| {
                let nc = self.sn_start[s + 1] - self.sn_start[s];
                let r = self.sn_rows_ptr[s + 1] - self.sn_rows_ptr[s];
                nc * (nc - 1) / 2 + nc * r
            })
            .sum()
    }

    fn supernodes(&mut self, parent: &[u32]) {
        let n = self.n;
        let mut n_children = vec![0u32; n];
        for &p in parent {
            if p != NONE {
                n_children[p as usize] += 1;
            }
        }
        // Structures of finished supernodes, waiting for their parent column.
        let mut waiting: Vec<Vec<Vec<u32>>> = vec![Vec::new(); n];
        let mut mark = vec![NONE; n];
        let mut sn_start = vec![0usize];
        let mut sn_struct: Vec<Vec<u32>> = Vec::new();
        let mut col_sn = vec![0u32; n];

        let mut j = 0;
        while j < n {
            let first = j;
            let sn = sn_start.len() as u32 - 1;
            let mut rows: Vec<u32> = Vec::new();
            for &i in &self.row_idx[self.col_ptr[j] + 1..self.col_ptr[j + 1]] {
                if mark[i as usize] != first as u32 {
                    mark[i as usize] = first as u32;
                    rows.push(i);
                }
            }
            for child_rows in std::mem::take(&mut waiting[j]) {
                for i in child_rows {
                    if i as usize != j && mark[i as usize] != first as u32 {
                        mark[i as usize] = first as u32;
                        rows.push(i);
                    }
                }
            }
            rows.sort_unstable();
            col_sn[j] = sn;

            // Absorb j + 1 while it is j's only parent-child continuation
            // with an identical structure.
            let mut head = 0;
            while j + 1 < n
                && parent[j] == (j + 1) as u32
                && n_children[j + 1] == 1
                && self.row_idx[self.col_ptr[j + 1] + 1..self.col_ptr[j + 2]]
                    .iter()
                    .all(|&i| mark[i as usize] == first as u32)
            {
                debug_assert_eq!(rows[head], (j + 1) as u32);
                head += 1;
                j += 1;
                col_sn[j] = sn;
            }
            let rows = rows.split_off(head);
            if let Some(&p) = rows.first() {
                waiting[p as usize].push(rows.clone());
            }
            sn_struct.push(rows);
            j += 1;
            sn_start.push(j);
        }

        let ns = sn_struct.len();
        let mut sn_children = vec![0u32; ns];
        let mut sn_rows_ptr = Vec::with_capacity(ns + 1);
        sn_rows_ptr.push(0);
        let mut sn_rows = Vec::new();
        let mut max_front = 0;
        for s in 0..ns {
            let rows = &sn_struct[s];
            if let Some(&p) = rows.first() {
                sn_children[col_sn[p as usize] as usize] += 1;
            }
            max_front = max_front.max(sn_start[s + 1] - sn_start[s] + rows.len());
            sn_rows.extend_from_slice(rows);
            sn_rows_ptr.push(sn_rows.len());
        }
        self.sn_start = sn_start;
        self.sn_rows_ptr = sn_rows_ptr;
        self.sn_rows = sn_rows;
        self.sn_children = sn_children;
        self.max_front = max_front;
    }

    /// Number of negative pivots of `A - shift I`, which by Sylvester's law
    /// equals the number of eigenvalues below `shift`.
    pub fn inertia(&self, shift: f64) -> Result<usize> {
        let mut negatives = 0;
        self.multifrontal(shift, |_, _, d| {
            negatives += d.iter().filter(|&&x| x < 0.0).count();
        })?;
        Ok(negatives)
    }

    /// Factors `A - shift I` and keeps the factor for solves.
    pub fn factor(&self, shift: f64) -> Result<LdltFactor<'_>> {
        let mut panels = Vec::with_capacity(self.n_supernodes());
        let mut diag = vec![0.0; self.n];
        self.multifrontal(shift, |s, panel, d| {
            diag[self.sn_start[s]..self.sn_start[s + 1]].copy_from_slice(d);
            panels.push(panel.to_vec());
        })?;
        Ok(LdltFactor {
            analysis: self,
            panels,
            diag,
        })
    }

    /// Runs the numeric factorization; `sink` receives, per supernode, the
    /// column-major `m x nc` panel (unit lower factor columns) and the pivots.
    fn multifrontal(&self, shift: f64, mut sink: impl FnMut(usize, &[f64], &[f64])) -> Result<()> {
        let n = self.n;
        let mut relpos = vec![0u32; n];
        let mut stack: Vec<Vec<f64>> = Vec::new();
        let mut front: Vec<f64> = Vec::new();
        let mut wbuf: Vec<f64> = Vec::new();
        let mut lbuf: Vec<f64> = Vec::new();
        let mut pivots: Vec<f64> = Vec::new();
        let mut child_ids: Vec<usize> = Vec::new();
        let mut child_pos: Vec<usize> = Vec::new();
        // Supernode whose update matrix sits at each stack slot.
        let mut stack_owner: Vec<usize> = Vec::new();

        for s in 0..self.n_supernodes() {
            let f = self.sn_start[s];
            let l = self.sn_start[s + 1];
            let nc = l - f;
            let rows = &self.sn_rows[self.sn_rows_ptr[s]..self.sn_rows_ptr[s + 1]];
            let m = nc + rows.len();

            for (k, j) in (f..l).enumerate() {
                relpos[j] = k as u32;
            }
            for (k, &i) in rows.iter().enumerate() {
                relpos[i as usize] = (nc + k) as u32;
            }
            front.clear();
            front.resize(m * m, 0.0);

            for j in f..l {
                let b = j - f;
                let (lo, hi) = (self.col_ptr[j], self.col_ptr[j + 1]);
                front[b + b * m] += self.values[lo] - shift;
                for p in lo + 1..hi {
                    let a = relpos[self.row_idx[p] as usize] as usize;
                    let v = self.values[p];
                    front[a + b * m] += v;
                    front[b + a * m] += v;
                }
            }

            // Extend-add the children's update matrices.
            child_ids.clear();
            for _ in 0..self.sn_children[s] {
                child_ids.push(stack_owner.pop().expect("frontal stack underflow"));
            }
            for &c in child_ids.iter() {
                let update = stack.pop().expect("frontal stack underflow");
                let crow = &self.sn_rows[self.sn_rows_ptr[c]..self.sn_rows_ptr[c + 1]];
                let r = crow.len();
                child_pos.clear();
                child_pos.extend(crow.iter().map(|&i| relpos[i as usize] as usize));
                for (bb, &pb) in child_pos.iter().enumerate() {
                    let dst = &mut front[pb * m..pb * m + m];
                    let src = &update[bb * r..bb * r + r];
                    for (aa, &pa) in child_pos.iter().enumerate() {
                        dst[pa] += src[aa];
                    }
                }
            }

            pivots.clear();
            partial_factor(&mut front, m, nc, &mut pivots, &mut wbuf, &mut lbuf).map_err(|k| {
                Error::FactorizationBreakdown {
                    pivot: f + k,
                    value: front[k + k * m],
                    shift,
                }
            })?;

            let r = m - nc;
            if r > 0 {
                let mut update = vec![0.0; r * r];
                for b in 0..r {
                    update[b * r..b * r + r]
                        .copy_from_slice(&front[nc + (nc + b) * m..m + (nc + b) * m]);
                }
                stack.push(update);
                stack_owner.push(s);
            }
            sink(s, &front[..m * nc], &pivots);
        }
        Ok(())
    }
}

/// Eliminates the first `nc` columns of the dense column-major `m x m`
/// front in place. Columns `0..nc` become unit lower factor columns, the
/// trailing block becomes the Schur complement. Returns the offending
/// column on a tiny pivot.
fn partial_factor(
    front: &mut [f64],
    m: usize,
    nc: usize,
    pivots: &mut Vec<f64>,
    wbuf: &mut Vec<f64>,
    lbuf: &mut Vec<f64>,
) -> std::result::Result<(), usize> {
    let mut k0 = 0;
    while k0 < nc {
        let k1 = (k0 + PANEL).min(nc);
        for k in k0..k1 {
            let d = front[k + k * m];
            if !(d.abs() >= PIVOT_TOLERANCE) {
                return Err(k);
            }
            pivots.push(d);
            for j in k + 1..k1 {
                let factor = front[j + k * m] / d;
                if factor == 0.0 {
                    continue;
                }
                let (left, right) = front.split_at_mut(j * m);
                let colk = &left[k * m..k * m + m];
                let colj = &mut right[..m];
                for i in j..m {
                    colj[i] -= colk[i] * factor;
                }
            }
        }
        let b = k1 - k0;
        let m2 = m - k1;
        if m2 > 0 {
            // W = unscaled panel rows below the block, L = W D^{-1}.
            wbuf.clear();
            lbuf.clear();
            for k in k0..k1 {
                let d = front[k + k * m];
                let col = &front[k1 + k * m..m + k * m];
                wbuf.extend_from_slice(col);
                lbuf.extend(col.iter().map(|&x| x / d));
            }
            // trailing -= L W^T
            unsafe {
                matrixmultiply::dgemm(
                    m2,
                    b,
                    m2,
                    -1.0,
                    lbuf.as_ptr(),
                    1,
                    m2 as isize,
                    wbuf.as_ptr(),
                    m2 as isize,
                    1,
                    1.0,
                    front.as_mut_ptr().add(k1 + k1 * m),
                    1,
                    m as isize,
                );
            }
        }
        for k in k0..k1 {
            let d = front[k + k * m];
            for i in k + 1..m {
                front[i + k * m] /= d;
            }
        }
        k0 = k1;
    }
    Ok(())
}

/// Stored `P (A - shift I) P^T = L D L^T` factor.
pub struct LdltFactor<'a> {
    analysis: &'a LdltAnalysis,
    panels: Vec<Vec<f64>>,
    diag: Vec<f64>,
}

impl LdltFactor<'_> {
    pub fn negative_pivots(&self) -> usize {
        self.diag.iter().filter(|&&d| d < 0.0).count()
    }

    /// Solves `(A - shift I) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = self.analysis;
        let mut x: Vec<f64> = a.perm.iter().map(|&p| b[p as usize]).collect();
        let mut local = Vec::with_capacity(a.max_front);

        for s in 0..a.n_supernodes() {
            let f = a.sn_start[s];
            let nc = a.sn_start[s + 1] - f;
            let rows = &a.sn_rows[a.sn_rows_ptr[s]..a.sn_rows_ptr[s + 1]];
            let m = nc + rows.len();
            let panel = &self.panels[s];
            local.clear();
            local.extend_from_slice(&x[f..f + nc]);
            local.extend(rows.iter().map(|&i| x[i as usize]));
            for k in 0..nc {
                let xk = local[k];
                if xk != 0.0 {
                    let col = &panel[k * m..k * m + m];
                    for i in k + 1..m {
                        local[i] -= col[i] * xk;
                    }
                }
            }
            x[f..f + nc].copy_from_slice(&local[..nc]);
            for (k, &i) in rows.iter().enumerate() {
                x[i as usize] = local[nc + k];
            }
        }
        for (xi, d) in x.iter_mut().zip(&self.diag) {
            *xi /= d;
        }
        for s in (0..a.n_supernodes()).rev() {
            let f = a.sn_start[s];
            let nc = a.sn_start[s + 1] - f;
            let rows = &a.sn_rows[a.sn_rows_ptr[s]..a.sn_rows_ptr[s + 1]];
            let m = nc + rows.len();
            let panel = &self.panels[s];
            local.clear();
            local.extend_from_slice(&x[f..f + nc]);
            local.extend(rows.iter().map(|&i| x[i as usize]));
            for k in (0..nc).rev() {
                let col = &panel[k * m..k * m + m];
                let dotp: f64 = (k + 1..m).map(|i| col[i] * local[i]).sum();
                local[k] -= dotp;
            }
            x[f..f + nc].copy_from_slice(&local[..nc]);
        }
        for (new, &old) in a.perm.iter().enumerate() {
            b[old as usize] = x[new];
        }
    }
}

/// Lower triangle of `P A P^T` in compressed columns, rows ascending with the
/// diagonal first.
fn permuted_lower(lap: &SparseSymLaplacian, perm: &[u32]) -> (Vec<usize>, Vec<u32>, Vec<f64>) {
    let n = lap.n();
    let mut inv = vec![0u32; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old as usize] = new as u32;
    }
    let mut col_ptr = Vec::with_capacity(n + 1);
    col_ptr.push(0);
    let mut row_idx = Vec::with_capacity(lap.nnz() / 2 + n);
    let mut values = Vec::with_capacity(lap.nnz() / 2 + n);
    let mut entries: Vec<(u32, f64)> = Vec::new();
    for j in 0..n {
        let (cols, vals) = lap.row(perm[j] as usize);
        entries.clear();
        entries.extend(
            cols.iter()
                .zip(vals)
                .map(|(&c, &v)| (inv[c as usize], v))
                .filter(|&(i, _)| i as usize >= j),
        );
        entries.sort_unstable_by_key(|e| e.0);
        debug_assert_eq!(entries.first().map(|e| e.0 as usize), Some(j));
        for &(i, v) in &entries {
            row_idx.push(i);
            values.push(v);
        }
        col_ptr.push(row_idx.len());
    }
    (col_ptr, row_idx, values)
}

/// Elimination tree from the lower-triangular column pattern (Liu's
/// algorithm with path compression).
fn etree_from_lower(n: usize, col_ptr: &[usize], row_idx: &[u32]) -> Vec<u32> {
    // Row-wise access: for row i, the columns j < i with A(i, j) != 0.
    let mut row_count = vec![0usize; n + 1];
    for j in 0..n {
        for &i in &row_idx[col_ptr[j] + 1..col_ptr[j + 1]] {
            row_count[i as usize + 1] += 1;
        }
    }
    for i in 0..n {
        row_count[i + 1] += row_count[i];
    }
    let mut fill = row_count.clone();
    let mut row_cols = vec![0u32; row_count[n]];
    for j in 0..n {
        for &i in &row_idx[col_ptr[j] + 1..col_ptr[j + 1]] {
            row_cols[fill[i as usize]] = j as u32;
            fill[i as usize] += 1;
        }
    }

    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for i in 0..n {
        for &j in &row_cols[row_count[i]..row_count[i + 1]] {
            let mut r = j as usize;
            while ancestor[r] != NONE && ancestor[r] as usize != i {
                let next = ancestor[r] as usize;
                ancestor[r] = i as u32;
                r = next;
            }
            if ancestor[r] == NONE {
                ancestor[r] = i as u32;
                parent[r] = i as u32;
            }
        }
    }
    parent
}

/// Postorder of a forest given by parent pointers; children are visited in
/// ascending order. Returns `post[k] = node`.
fn postorder(parent: &[u32]) -> Vec<u32> {
    let n = parent.len();
    let mut head = vec![NONE; n];
    let mut next = vec![NONE; n];
    for j in (0..n).rev() {
        let p = parent[j];
        if p != NONE {
            next[j] = head[p as usize];
            head[p as usize] = j as u32;
        }
    }
    let mut post = Vec::with_capacity(n);
    let mut stack = Vec::new();
    for root in 0..n {
        if parent[root] != NONE {
            continue;
        }
        stack.push(root as u32);
        while let Some(&top) = stack.last() {
            let child = head[top as usize];
            if child == NONE {
                stack.pop();
                post.push(top);
            } else {
                head[top as usize] = next[child as usize];
                stack.push(child);
            }
        }
    }
    post
}
