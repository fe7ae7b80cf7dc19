//! Compressed-row complex matrices between number sectors.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;

/// CSR matrix mapping vectors of sector `from` (total number `N`) into
/// sector `to`. Sector labels are total particle numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    from: usize,
    to: usize,
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
    hermitian: bool,
}

impl SparseOperator {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(
        from: usize,
        to: usize,
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, C64)>,
    ) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; n_rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        let mut op = SparseOperator {
            from,
            to,
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
            hermitian: false,
        };
        op.prune();
        op
    }

    pub fn diagonal(sector: usize, diag: &[f64]) -> Self {
        let trip = diag
            .iter()
            .enumerate()
            .map(|(i, &d)| (i, i, C64::new(d, 0.0)))
            .collect();
        let mut op = Self::from_triplets(sector, sector, diag.len(), diag.len(), trip);
        op.hermitian = true;
        op
    }

    pub fn identity(sector: usize, dim: usize) -> Self {
        Self::diagonal(sector, &vec![1.0; dim])
    }

    pub fn zeros(from: usize, to: usize, n_rows: usize, n_cols: usize) -> Self {
        Self::from_triplets(from, to, n_rows, n_cols, Vec::new())
    }

    fn prune(&mut self) {
        let mut indptr = vec![0; self.n_rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.n_rows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                if self.values[p] != C64::new(0.0, 0.0) {
                    indices.push(self.indices[p]);
                    values.push(self.values[p]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn from_sector(&self) -> usize {
        self.from
    }

    pub fn to_sector(&self) -> usize {
        self.to
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_hermitian_hint(&self) -> bool {
        self.hermitian
    }

    /// Marks the operator Hermitian after checking `max |A − A†| < tol`.
    pub fn mark_hermitian(&mut self, tol: f64) -> bool {
        let ok = self.from == self.to && self.hermitian_deviation() < tol;
        self.hermitian = ok;
        ok
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |p| (r, self.indices[p], self.values[p]))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match row.binary_search(&c) {
            Ok(p) => self.values[self.indptr[r] + p],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for p in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            *out = acc;
        }
    }

    pub fn adjoint(&self) -> Self {
        let trip = self.iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        let mut op = Self::from_triplets(self.to, self.from, self.n_cols, self.n_rows, trip);
        op.hermitian = self.hermitian;
        op
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut op = self.clone();
        for v in &mut op.values {
            *v *= s;
        }
        op.prune();
        op
    }

    /// `self · rhs`; panics on inner dimension mismatch.
    pub fn matmul(&self, rhs: &SparseOperator) -> Self {
        assert_eq!(self.n_cols, rhs.n_rows, "inner dimension mismatch");
        let mut trip = Vec::new();
        for r in 0..self.n_rows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let k = self.indices[p];
                let a = self.values[p];
                for q in rhs.indptr[k]..rhs.indptr[k + 1] {
                    trip.push((r, rhs.indices[q], a * rhs.values[q]));
                }
            }
        }
        Self::from_triplets(rhs.from, self.to, self.n_rows, rhs.n_cols, trip)
    }

    pub fn add(&self, other: &SparseOperator) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        let trip = self.iter().chain(other.iter()).collect();
        Self::from_triplets(self.from, self.to, self.n_rows, self.n_cols, trip)
    }

    pub fn sub(&self, other: &SparseOperator) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Largest entry modulus, 0 for the zero matrix.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn hermitian_deviation(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        self.sub(&self.adjoint()).max_abs()
    }

    pub fn is_diagonal(&self) -> bool {
        self.iter().all(|(r, c, _)| r == c)
    }

    pub fn diagonal_entries(&self) -> Vec<C64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }

    /// Real part as a dense matrix; meaningful for real operators such as the
    /// Hamiltonians built here.
    pub fn to_dense_real(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v.re;
        }
        m
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }
}

/// `⟨a|b⟩`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}
