use nalgebra::DMatrix;

use super::VoxelGraph;

/// Symmetric normalized Laplacian `I - D^{-1/2} A D^{-1/2}` in CSR form.
///
/// Every row stores its diagonal entry explicitly, so the pattern is also
/// the pattern of any shifted matrix `L - sigma I`. Rows of isolated
/// vertices are entirely zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymLaplacian {
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    degree: Vec<u32>,
}

/// Builds the normalized Laplacian of `graph`.
pub fn normalized_laplacian(graph: &VoxelGraph) -> SparseSymLaplacian {
    let n = graph.n_vertices();
    let degree: Vec<u32> = (0..n).map(|i| graph.degree(i) as u32).collect();

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut indices = Vec::with_capacity(graph.neighbor_array().len() + n);
    let mut values = Vec::with_capacity(graph.neighbor_array().len() + n);
    for i in 0..n {
        let diag = if degree[i] > 0 { 1.0 } else { 0.0 };
        let mut diag_done = false;
        for &j in graph.neighbors(i) {
            if !diag_done && j as usize > i {
                indices.push(i as u32);
                values.push(diag);
                diag_done = true;
            }
            indices.push(j);
            values.push(-1.0 / ((degree[i] as u64 * degree[j as usize] as u64) as f64).sqrt());
        }
        if !diag_done {
            indices.push(i as u32);
            values.push(diag);
        }
        offsets.push(indices.len());
    }
    SparseSymLaplacian {
        offsets,
        indices,
        values,
        degree,
    }
}

impl SparseSymLaplacian {
    pub fn n(&self) -> usize {
        self.degree.len()
    }

    pub fn degree(&self) -> &[u32] {
        &self.degree
    }

    /// Column indices and values of row `i`, ascending by column.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `y = L x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols
                .iter()
                .zip(vals)
                .map(|(&j, &v)| v * x[j as usize])
                .sum();
        }
    }

    /// Dense copy, for oracle computations on small graphs.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j as usize)] = v;
            }
        }
        m
    }
}
