use rayon::prelude::*;

/// Square matrix in compressed sparse row format with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros_with_pattern(row_ptr: Vec<usize>, cols: Vec<usize>) -> Self {
        let n = row_ptr.len() - 1;
        let nnz = cols.len();
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals: vec![0.0; nnz],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    /// Adds `v` at `(i, j)`; the entry must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        let k = self.cols[r.clone()].binary_search(&j).expect("entry outside sparsity pattern");
        self.vals[r.start + k] += v;
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().with_min_len(1024).enumerate().for_each(|(i, yi)| {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, a)| a * x[j]).sum();
        });
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, a) in c.iter().zip(v) {
                m = m.max((a - self.get(j, i)).abs());
            }
        }
        m
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, a) in c.iter().zip(v) {
                row[j] = *a;
            }
        }
        d
    }
}
