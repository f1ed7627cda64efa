//! Dense order-3 tensors and real matrices.
//!
//! # Memory layout
//!
//! All storage in this crate follows one fixed linearization:
//!
//! * [`Tensor3`] with dims `(n1, n2, n3)` stores entry `(i, j, k)` at
//!   `(i * n2 + j) * n3 + k`. Mode-3 fibers are contiguous, then the mode-2
//!   index varies, then the mode-1 index. For a hyperspectral cube this means
//!   each pixel spectrum (or abundance vector) is one contiguous slice.
//! * [`Matrix`] is row-major: entry `(r, c)` lives at `r * cols + c`.
//! * [`unfold`] along mode `k` puts `dims[k]` on the rows. The columns enumerate
//!   the two remaining modes in increasing mode order with the later mode
//!   varying fastest: mode 1 uses column `j * n3 + k`, mode 2 uses `i * n3 + k`,
//!   mode 3 uses `i * n2 + j`. [`crate::khatri_rao`] uses the same ordering, so
//!   `unfold(T, 1) = Z1 · diag(ξ) · (Z2 ⊙ Z3)ᵀ` for a CP model.

use crate::error::{Error, Result};

/// One of the three tensor modes. `Mode::One` is the row (first) index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    /// Zero-based position of the mode in the dims tuple.
    pub fn index(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }

    /// Parses the one-based mode number used in the usual notation.
    pub fn from_number(k: usize) -> Result<Mode> {
        match k {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => Err(Error::Parameter(format!("mode must be 1, 2 or 3, got {k}"))),
        }
    }
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("matrix contains non-finite entries".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Dimension("columns have unequal lengths".into()));
        }
        Matrix::from_row_major(rows, cols, {
            let mut data = vec![0.0; rows * cols];
            for (c, col) in columns.iter().enumerate() {
                for (r, v) in col.iter().enumerate() {
                    data[r * cols + c] = *v;
                }
            }
            data
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.rows);
        for (r, v) in values.iter().enumerate() {
            self.set(r, c, *v);
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (t, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(t)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    /// `selfᵀ · self`.
    pub fn gram(&self) -> Matrix {
        let n = self.cols;
        let mut g = Matrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for a in 0..n {
                let ra = row[a];
                for (b, &rb) in row.iter().enumerate().skip(a) {
                    g.data[a * n + b] += ra * rb;
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                g.data[a * n + b] = g.data[b * n + a];
            }
        }
        g
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension("hadamard product of unequal shapes".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense order-3 real tensor. See the module docs for the storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Tensor3 { dims, data: vec![0.0; dims.0 * dims.1 * dims.2] }
    }

    pub fn filled(dims: (usize, usize, usize), value: f64) -> Self {
        Tensor3 { dims, data: vec![value; dims.0 * dims.1 * dims.2] }
    }

    pub fn from_vec(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let n = dims.0 * dims.1 * dims.2;
        if data.len() != n {
            return Err(Error::Dimension(format!(
                "tensor {}x{}x{} needs {n} entries, got {}",
                dims.0,
                dims.1,
                dims.2,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("tensor contains non-finite entries".into()));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn from_fn(
        dims: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for i in 0..dims.0 {
            for j in 0..dims.1 {
                for k in 0..dims.2 {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3 { dims, data }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn dim(&self, mode: Mode) -> usize {
        match mode {
            Mode::One => self.dims.0,
            Mode::Two => self.dims.1,
            Mode::Three => self.dims.2,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims.1 + j) * self.dims.2 + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    /// The mode-3 fiber `T[i, j, :]`.
    #[inline]
    pub fn fiber(&self, i: usize, j: usize) -> &[f64] {
        let start = self.offset(i, j, 0);
        &self.data[start..start + self.dims.2]
    }

    #[inline]
    pub fn fiber_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let start = self.offset(i, j, 0);
        let n3 = self.dims.2;
        &mut self.data[start..start + n3]
    }

    /// Iterates over mode-3 fibers in storage order (row-major over pixels).
    pub fn fibers(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero, which only happens for empty tensors.
        self.data.chunks_exact(self.dims.2.max(1))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `‖self − other‖²_F`.
    pub fn squared_distance(&self, other: &Tensor3) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.check_same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Tensor3 { dims: self.dims, data })
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.check_same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Tensor3 { dims: self.dims, data })
    }

    pub fn scale(&self, c: f64) -> Tensor3 {
        Tensor3 { dims: self.dims, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub(crate) fn check_same_dims(&self, other: &Tensor3) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "tensor shapes differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}

/// `T[i, j, k] = a[i] · b[j] · c[k]`.
pub fn outer3(a: &[f64], b: &[f64], c: &[f64]) -> Result<Tensor3> {
    if a.is_empty() || b.is_empty() || c.is_empty() {
        return Err(Error::Dimension("outer product of an empty vector".into()));
    }
    let mut data = Vec::with_capacity(a.len() * b.len() * c.len());
    for &x in a {
        for &y in b {
            let xy = x * y;
            data.extend(c.iter().map(|&z| xy * z));
        }
    }
    Ok(Tensor3 { dims: (a.len(), b.len(), c.len()), data })
}

/// Mode-k product `T ×ₖ B`: every mode-k fiber of `T` is multiplied by `B`.
pub fn mode_k_product(t: &Tensor3, b: &Matrix, mode: Mode) -> Result<Tensor3> {
    let (n1, n2, n3) = t.dims();
    let nk = t.dim(mode);
    if b.cols() != nk {
        return Err(Error::Dimension(format!(
            "mode-{} product needs a matrix with {nk} columns, got {}x{}",
            mode.index() + 1,
            b.rows(),
            b.cols()
        )));
    }
    let m = b.rows();
    let out_dims = match mode {
        Mode::One => (m, n2, n3),
        Mode::Two => (n1, m, n3),
        Mode::Three => (n1, n2, m),
    };
    let mut out = Tensor3::zeros(out_dims);
    match mode {
        Mode::One => {
            // Each output slab out[r, :, :] is a combination of input slabs.
            let slab = n2 * n3;
            for r in 0..m {
                let dst = &mut out.data[r * slab..(r + 1) * slab];
                for (i, &w) in b.row(r).iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for (d, &s) in dst.iter_mut().zip(&t.data[i * slab..(i + 1) * slab]) {
                        *d += w * s;
                    }
                }
            }
        }
        Mode::Two => {
            for i in 0..n1 {
                for r in 0..m {
                    let row = b.row(r);
                    let start = (i * m + r) * n3;
                    for (j, &w) in row.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let src = t.fiber(i, j);
                        for (d, &s) in out.data[start..start + n3].iter_mut().zip(src) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
        Mode::Three => {
            for (fiber, dst) in t.fibers().zip(out.data.chunks_exact_mut(m.max(1))) {
                for (r, d) in dst.iter_mut().enumerate() {
                    *d = dot(b.row(r), fiber);
                }
            }
        }
    }
    Ok(out)
}

/// `T ×₁ B1 ×₂ B2 ×₃ B3`.
pub fn multilinear_product(t: &Tensor3, b1: &Matrix, b2: &Matrix, b3: &Matrix) -> Result<Tensor3> {
    let u = mode_k_product(t, b1, Mode::One)?;
    let u = mode_k_product(&u, b2, Mode::Two)?;
    mode_k_product(&u, b3, Mode::Three)
}

/// Sums every mode-3 fiber, giving the `n1 × n2` matrix `T ×³ 1`.
pub fn contract_mode3_ones(t: &Tensor3) -> Matrix {
    let (n1, n2, _) = t.dims();
    let data = if t.dims.2 == 0 {
        vec![0.0; n1 * n2]
    } else {
        t.fibers().map(|f| f.iter().sum()).collect()
    };
    Matrix { rows: n1, cols: n2, data }
}

/// Mode-k matricization. Column ordering is described in the module docs.
pub fn unfold(t: &Tensor3, mode: Mode) -> Matrix {
    let (n1, n2, n3) = t.dims();
    match mode {
        // Storage order already matches: row i holds T[i, :, :] with k fastest.
        Mode::One => Matrix { rows: n1, cols: n2 * n3, data: t.data.clone() },
        Mode::Two => {
            let mut m = Matrix::zeros(n2, n1 * n3);
            for i in 0..n1 {
                for j in 0..n2 {
                    let dst = j * (n1 * n3) + i * n3;
                    m.data[dst..dst + n3].copy_from_slice(t.fiber(i, j));
                }
            }
            m
        }
        Mode::Three => {
            let mut m = Matrix::zeros(n3, n1 * n2);
            for (p, fiber) in t.fibers().enumerate() {
                for (k, &v) in fiber.iter().enumerate() {
                    m.data[k * (n1 * n2) + p] = v;
                }
            }
            m
        }
    }
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, dims: (usize, usize, usize), mode: Mode) -> Result<Tensor3> {
    let (n1, n2, n3) = dims;
    let expected = match mode {
        Mode::One => (n1, n2 * n3),
        Mode::Two => (n2, n1 * n3),
        Mode::Three => (n3, n1 * n2),
    };
    if m.shape() != expected {
        return Err(Error::Dimension(format!(
            "cannot fold a {}x{} matrix along mode {} into {n1}x{n2}x{n3}",
            m.rows(),
            m.cols(),
            mode.index() + 1
        )));
    }
    let mut t = Tensor3::zeros(dims);
    match mode {
        Mode::One => t.data.copy_from_slice(&m.data),
        Mode::Two => {
            for i in 0..n1 {
                for j in 0..n2 {
                    let src = j * (n1 * n3) + i * n3;
                    t.fiber_mut(i, j).copy_from_slice(&m.data[src..src + n3]);
                }
            }
        }
        Mode::Three => {
            let pixels = n1 * n2;
            for p in 0..pixels {
                for k in 0..n3 {
                    t.data[p * n3 + k] = m.data[k * pixels + p];
                }
            }
        }
    }
    Ok(t)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // loop oracles index explicitly
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dims: (usize, usize, usize), seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0))
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn assert_close(a: &Tensor3, b: &Tensor3, rel: f64) {
        assert_eq!(a.dims(), b.dims());
        let scale = a.frobenius_norm().max(b.frobenius_norm()).max(1e-300);
        let diff = a.squared_distance(b).unwrap().sqrt();
        assert!(diff <= rel * scale, "relative difference {} > {rel}", diff / scale);
    }

    // Brute-force mode-k product straight from the index definition.
    fn mode_product_oracle(t: &Tensor3, b: &Matrix, k: usize) -> Tensor3 {
        let (n1, n2, n3) = t.dims();
        let mut dims = [n1, n2, n3];
        dims[k] = b.rows();
        let mut out = Tensor3::zeros((dims[0], dims[1], dims[2]));
        for o1 in 0..dims[0] {
            for o2 in 0..dims[1] {
                for o3 in 0..dims[2] {
                    let mut s = 0.0;
                    for i in 0..b.cols() {
                        let mut idx = [o1, o2, o3];
                        idx[k] = i;
                        s += t.get(idx[0], idx[1], idx[2]) * b.get([o1, o2, o3][k], i);
                    }
                    out.set(o1, o2, o3, s);
                }
            }
        }
        out
    }

    #[test]
    fn outer3_identity_case() {
        let t = outer3(&[1.0], &[1.0], &[1.0]).unwrap();
        assert_eq!(t.dims(), (1, 1, 1));
        assert_eq!(t.get(0, 0, 0), 1.0);
    }

    #[test]
    fn outer3_direct_definition() {
        let t = outer3(&[1.0, 2.0], &[3.0], &[1.0, 0.0]).unwrap();
        assert_eq!(t.get(0, 0, 0), 3.0);
        assert_eq!(t.get(1, 0, 0), 6.0);
        assert_eq!(t.get(0, 0, 1), 0.0);
        assert_eq!(t.get(1, 0, 1), 0.0);
    }

    #[test]
    fn outer3_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (a, b, c) = (random_vec(3, &mut rng), random_vec(4, &mut rng), random_vec(2, &mut rng));
        let t = outer3(&a, &b, &c).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..2 {
                    assert_eq!(t.get(i, j, k), a[i] * b[j] * c[k]);
                }
            }
        }
    }

    #[test]
    fn outer3_rejects_empty() {
        assert!(matches!(outer3(&[], &[1.0], &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn mode_product_of_ones() {
        let t = Tensor3::filled((2, 2, 2), 1.0);
        let b = Matrix::filled(2, 2, 1.0);
        let u = mode_k_product(&t, &b, Mode::One).unwrap();
        assert_eq!(u, Tensor3::filled((2, 2, 2), 2.0));
    }

    #[test]
    fn mode_product_identity_is_exact() {
        let t = random_tensor((3, 4, 2), 1);
        for mode in Mode::ALL {
            let eye = Matrix::identity(t.dim(mode));
            assert_eq!(mode_k_product(&t, &eye, mode).unwrap(), t);
        }
    }

    #[test]
    fn mode_product_matches_loop_oracle() {
        let t = random_tensor((3, 4, 2), 2);
        let b = random_matrix(5, 3, 3);
        let u = mode_k_product(&t, &b, Mode::One).unwrap();
        assert_eq!(u.dims(), (5, 4, 2));
        assert_close(&u, &mode_product_oracle(&t, &b, 0), 1e-14);

        let b2 = random_matrix(3, 4, 4);
        assert_close(
            &mode_k_product(&t, &b2, Mode::Two).unwrap(),
            &mode_product_oracle(&t, &b2, 1),
            1e-14,
        );
        let b3 = random_matrix(6, 2, 5);
        assert_close(
            &mode_k_product(&t, &b3, Mode::Three).unwrap(),
            &mode_product_oracle(&t, &b3, 2),
            1e-14,
        );
    }

    #[test]
    fn mode_product_dimension_mismatch() {
        let t = random_tensor((3, 4, 2), 2);
        let b = random_matrix(5, 4, 3);
        assert!(matches!(mode_k_product(&t, &b, Mode::One), Err(Error::Dimension(_))));
    }

    #[test]
    fn mode_number_parsing() {
        assert_eq!(Mode::from_number(2).unwrap(), Mode::Two);
        assert!(Mode::from_number(0).is_err());
        assert!(Mode::from_number(4).is_err());
    }

    #[test]
    fn multilinear_identity() {
        let t = random_tensor((3, 4, 2), 9);
        let out = multilinear_product(&t, &Matrix::identity(3), &Matrix::identity(4), &Matrix::identity(2))
            .unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn multilinear_of_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (a, b, c) = (random_vec(3, &mut rng), random_vec(4, &mut rng), random_vec(2, &mut rng));
        let (b1, b2, b3) = (random_matrix(2, 3, 12), random_matrix(5, 4, 13), random_matrix(3, 2, 14));
        let t = outer3(&a, &b, &c).unwrap();
        let lhs = multilinear_product(&t, &b1, &b2, &b3).unwrap();
        let rhs = outer3(&b1.mul_vec(&a).unwrap(), &b2.mul_vec(&b).unwrap(), &b3.mul_vec(&c).unwrap())
            .unwrap();
        assert_close(&lhs, &rhs, 1e-12);
    }

    #[test]
    fn multilinear_order_of_application_is_irrelevant() {
        let t = random_tensor((3, 4, 2), 21);
        let (b1, b2, b3) = (random_matrix(2, 3, 22), random_matrix(5, 4, 23), random_matrix(3, 2, 24));
        let forward = multilinear_product(&t, &b1, &b2, &b3).unwrap();
        let u = mode_k_product(&t, &b3, Mode::Three).unwrap();
        let u = mode_k_product(&u, &b2, Mode::Two).unwrap();
        let backward = mode_k_product(&u, &b1, Mode::One).unwrap();
        assert_close(&forward, &backward, 1e-12);
    }

    #[test]
    fn contraction_of_simplex_fibers_is_ones() {
        let t = Tensor3::from_fn((3, 2, 4), |i, j, k| if k == (i + j) % 4 { 1.0 } else { 0.0 });
        assert_eq!(contract_mode3_ones(&t), Matrix::filled(3, 2, 1.0));
        assert_eq!(contract_mode3_ones(&Tensor3::zeros((2, 2, 3))), Matrix::zeros(2, 2));
    }

    #[test]
    fn contraction_matches_fiber_sums_and_mode3_product() {
        let t = random_tensor((3, 4, 5), 31);
        let c = contract_mode3_ones(&t);
        let via_product = mode_k_product(&t, &Matrix::filled(1, 5, 1.0), Mode::Three).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let mut s = 0.0;
                for k in 0..5 {
                    s += t.get(i, j, k);
                }
                assert!((c.get(i, j) - s).abs() <= 1e-12);
                assert!((c.get(i, j) - via_product.get(i, j, 0)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn unfold_of_outer_product_mode1() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (a, b, c) = (random_vec(3, &mut rng), random_vec(4, &mut rng), random_vec(2, &mut rng));
        let m = unfold(&outer3(&a, &b, &c).unwrap(), Mode::One);
        // Column index j * n3 + k carries b[j] * c[k].
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..2 {
                    assert_eq!(m.get(i, j * 2 + k), a[i] * b[j] * c[k]);
                }
            }
        }
    }

    #[test]
    fn unfold_zero_and_bad_fold() {
        let z = Tensor3::zeros((2, 3, 4));
        for mode in Mode::ALL {
            let m = unfold(&z, mode);
            assert!(m.as_slice().iter().all(|&v| v == 0.0));
        }
        assert!(matches!(
            fold(&Matrix::zeros(3, 8), (2, 3, 4), Mode::One),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn frobenius_norm_cases() {
        assert_eq!(Tensor3::zeros((2, 2, 2)).frobenius_norm(), 0.0);
        let mut t = Tensor3::zeros((2, 2, 2));
        t.set(1, 0, 1, 3.0);
        assert_eq!(t.frobenius_norm(), 3.0);
        let r = random_tensor((3, 4, 5), 51);
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..5 {
                    s += r.get(i, j, k) * r.get(i, j, k);
                }
            }
        }
        assert!((r.frobenius_norm() - s.sqrt()).abs() <= 1e-12 * s.sqrt());
    }

    #[test]
    fn constructors_reject_bad_data() {
        assert!(matches!(Tensor3::from_vec((2, 2, 2), vec![0.0; 7]), Err(Error::Dimension(_))));
        assert!(matches!(
            Tensor3::from_vec((1, 1, 2), vec![0.0, f64::NAN]),
            Err(Error::Input(_))
        ));
        assert!(Matrix::from_row_major(2, 2, vec![1.0; 3]).is_err());
    }

    fn dims_strategy() -> impl Strategy<Value = (usize, usize, usize)> {
        (1usize..5, 1usize..5, 1usize..5)
    }

    proptest! {
        #[test]
        fn fold_unfold_round_trip_is_bit_exact(dims in dims_strategy(), seed in any::<u64>()) {
            let t = random_tensor(dims, seed);
            for mode in Mode::ALL {
                let back = fold(&unfold(&t, mode), dims, mode).unwrap();
                prop_assert_eq!(&back, &t);
            }
        }

        #[test]
        fn unfolding_preserves_norm(dims in dims_strategy(), seed in any::<u64>()) {
            let t = random_tensor(dims, seed);
            let n2 = t.squared_norm();
            for mode in Mode::ALL {
                let m = unfold(&t, mode).frobenius_norm().powi(2);
                prop_assert!((m - n2).abs() <= 1e-12 * n2.max(1e-300));
            }
        }

        #[test]
        fn mode_product_is_linear(dims in dims_strategy(), rows in 1usize..4, seed in any::<u64>()) {
            let t1 = random_tensor(dims, seed);
            let t2 = random_tensor(dims, seed.wrapping_add(1));
            for mode in Mode::ALL {
                let b1 = random_matrix(rows, t1.dim(mode), seed.wrapping_add(2));
                let b2 = random_matrix(rows, t1.dim(mode), seed.wrapping_add(3));
                let lhs = mode_k_product(&t1.add(&t2).unwrap(), &b1, mode).unwrap();
                let rhs = mode_k_product(&t1, &b1, mode).unwrap()
                    .add(&mode_k_product(&t2, &b1, mode).unwrap()).unwrap();
                let scale = lhs.frobenius_norm().max(1e-300);
                prop_assert!(lhs.squared_distance(&rhs).unwrap().sqrt() <= 1e-12 * scale);

                let bsum = Matrix::from_fn(rows, t1.dim(mode), |r, c| b1.get(r, c) + b2.get(r, c));
                let lhs = mode_k_product(&t1, &bsum, mode).unwrap();
                let rhs = mode_k_product(&t1, &b1, mode).unwrap()
                    .add(&mode_k_product(&t1, &b2, mode).unwrap()).unwrap();
                let scale = lhs.frobenius_norm().max(1e-300);
                prop_assert!(lhs.squared_distance(&rhs).unwrap().sqrt() <= 1e-12 * scale);
            }
        }
    }
}
