//! Rank-K canonical polyadic decomposition of an order-3 tensor.
//!
//! The model is `T ≈ Σᵢ ξᵢ · z⁽¹⁾ᵢ ∘ z⁽²⁾ᵢ ∘ z⁽³⁾ᵢ`, fitted by alternating least
//! squares: each sweep solves the exact least-squares problem for one factor
//! matrix while the other two are held fixed, for modes 1, 2 and 3 in turn.
//! Every update is a global minimizer of its block, so the squared residual
//! after each sweep never increases.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Mode, Tensor3};

/// Singular values below this fraction of the largest one are dropped when
/// inverting the Khatri-Rao Gram matrix.
const PINV_RTOL: f64 = 1e-12;
/// Below this reciprocal condition estimate the normal equations go through the
/// pseudo-inverse instead of Cholesky.
const CHOLESKY_MIN_RCOND: f64 = 1e-8;

/// A rank-K CP model with unit-norm factor columns and nonnegative,
/// nonincreasing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CpdFactors {
    weights: Vec<f64>,
    factors: [Matrix; 3],
}

impl CpdFactors {
    /// Assembles a model from raw parts, checking that the shapes agree.
    ///
    /// No normalization is applied; use [`CpdFactors::normalized`] for that.
    pub fn new(weights: Vec<f64>, z1: Matrix, z2: Matrix, z3: Matrix) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Parameter("CP model needs at least one component".into()));
        }
        for (n, z) in [&z1, &z2, &z3].iter().enumerate() {
            if z.cols() != k {
                return Err(Error::Dimension(format!(
                    "factor {} has {} columns but there are {k} weights",
                    n + 1,
                    z.cols()
                )));
            }
        }
        if weights.iter().chain(z1.as_slice()).chain(z2.as_slice()).chain(z3.as_slice()).any(|v| !v.is_finite())
        {
            return Err(Error::Input("CP model contains non-finite values".into()));
        }
        Ok(CpdFactors { weights, factors: [z1, z2, z3] })
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn factor(&self, mode: Mode) -> &Matrix {
        &self.factors[mode.index()]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.factors[0].rows(), self.factors[1].rows(), self.factors[2].rows())
    }

    /// Rescales every column to unit norm, absorbs the scale into the weights,
    /// makes the weights nonnegative and sorts components by decreasing weight.
    /// The represented tensor is unchanged.
    pub fn normalized(&self) -> CpdFactors {
        let k = self.rank();
        let mut weights = self.weights.clone();
        let mut factors = self.factors.clone();
        for z in factors.iter_mut() {
            for (r, w) in weights.iter_mut().enumerate() {
                let norm = column_norm(z, r);
                if norm > 0.0 {
                    scale_column(z, r, 1.0 / norm);
                    *w *= norm;
                } else {
                    set_basis_column(z, r);
                    *w = 0.0;
                }
            }
        }
        for (r, w) in weights.iter_mut().enumerate() {
            if *w < 0.0 {
                *w = -*w;
                scale_column(&mut factors[0], r, -1.0);
            }
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
        let weights = order.iter().map(|&r| weights[r]).collect();
        let factors = factors.map(|z| Matrix::from_fn(z.rows(), k, |i, r| z.get(i, order[r])));
        CpdFactors { weights, factors }
    }
}

/// How the ALS iterations are started.
#[derive(Debug, Clone, PartialEq)]
pub enum CpdInit {
    /// Factor entries drawn from a standard normal generator seeded with
    /// [`CpdOptions::seed`], then column-normalized.
    Random,
    /// Start from an existing model, typically the previous solution.
    Given(CpdFactors),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpdOptions {
    pub rank: usize,
    pub max_iters: usize,
    /// Stop once the relative change of the squared residual between sweeps
    /// drops below this value.
    pub rel_tol: f64,
    pub init: CpdInit,
    pub seed: u64,
}

impl CpdOptions {
    pub fn with_rank(rank: usize) -> Self {
        CpdOptions { rank, ..CpdOptions::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Parameter("CP rank must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be at least 1".into()));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(Error::Parameter(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        if let CpdInit::Given(f) = &self.init {
            if f.rank() != self.rank {
                return Err(Error::Parameter(format!(
                    "initial model has rank {} but rank {} was requested",
                    f.rank(),
                    self.rank
                )));
            }
        }
        Ok(())
    }
}

impl Default for CpdOptions {
    fn default() -> Self {
        CpdOptions { rank: 1, max_iters: 100, rel_tol: 1e-6, init: CpdInit::Random, seed: 0 }
    }
}

/// Fits a rank-`opts.rank` CP model to `t` by alternating least squares.
///
/// Returns the normalized model and the squared Frobenius residual after each
/// full sweep. An all-zero tensor yields zero weights and a history of `[0.0]`.
pub fn cpd_als(t: &Tensor3, opts: &CpdOptions) -> Result<(CpdFactors, Vec<f64>)> {
    opts.validate()?;
    let dims = t.dims();
    if let CpdInit::Given(f) = &opts.init {
        if f.dims() != dims {
            return Err(Error::Dimension(format!(
                "initial model has dims {:?}, tensor has {:?}",
                f.dims(),
                dims
            )));
        }
    }
    let k = opts.rank;

    let mut factors = match &opts.init {
        CpdInit::Random => random_factors(dims, k, opts.seed),
        CpdInit::Given(f) => {
            // Fold the weights into the first factor; mode 1 is updated first
            // and the remaining factors keep the model's scale exactly.
            let mut z = f.factors.clone();
            for (r, &w) in f.weights.iter().enumerate() {
                scale_column(&mut z[0], r, w);
            }
            z
        }
    };

    let norm_sq = t.squared_norm();
    if norm_sq == 0.0 {
        let model = CpdFactors { weights: vec![0.0; k], factors }.normalized();
        return Ok((model, vec![0.0]));
    }

    let mut weights = vec![1.0; k];
    let mut previous = match &opts.init {
        CpdInit::Given(_) => residual(t, &weights, &factors),
        CpdInit::Random => f64::INFINITY,
    };
    let mut history = Vec::with_capacity(opts.max_iters);
    for _ in 0..opts.max_iters {
        for mode in Mode::ALL {
            let z = als_update(t, &factors, mode);
            factors[mode.index()] = z;
            // Keep the model's scale in the weights so the fixed factors stay unit-norm.
            let zn = &mut factors[mode.index()];
            for (r, w) in weights.iter_mut().enumerate() {
                let norm = column_norm(zn, r);
                if norm > 0.0 {
                    scale_column(zn, r, 1.0 / norm);
                    *w = norm;
                } else {
                    set_basis_column(zn, r);
                    *w = 0.0;
                }
            }
        }
        let current = residual(t, &weights, &factors);
        history.push(current);
        let change = (previous - current).abs() / previous.max(f64::MIN_POSITIVE);
        if change < opts.rel_tol || current <= norm_sq * 1e-30 {
            break;
        }
        previous = current;
    }

    let model = CpdFactors { weights, factors }.normalized();
    Ok((model, history))
}

/// Least-squares update of the factor for `mode` with the other two fixed:
/// `Z = MTTKRP · (Gram₁ ⊛ Gram₂)⁺`, the minimal-norm solution of the
/// normal equations. The column scale of the fixed factors is carried into `Z`.
pub(crate) fn als_update(t: &Tensor3, factors: &[Matrix; 3], mode: Mode) -> Matrix {
    let (a, b) = other_modes(mode);
    let gram = factors[a].gram().hadamard(&factors[b].gram()).expect("factor ranks agree");
    let rhs = mttkrp(t, factors, mode);
    if let Some(z) = cholesky_solve(&gram, &rhs) {
        return z;
    }
    let pinv = pseudo_inverse(&gram);
    rhs.matmul(&pinv).expect("conformable")
}

/// `rhs · G⁻¹` through a Cholesky factorization of the symmetric `G`, or `None`
/// when `G` is not comfortably positive definite.
fn cholesky_solve(g: &Matrix, rhs: &Matrix) -> Option<Matrix> {
    let n = g.rows();
    let chol = DMatrix::from_row_slice(n, n, g.as_slice()).cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if lo.is_nan() || lo <= 0.0 || (lo / hi).powi(2) < CHOLESKY_MIN_RCOND {
        return None;
    }
    // Solve G Zᵀ = rhsᵀ; the row-major rhs is the column-major rhsᵀ.
    let mut zt = DMatrix::from_column_slice(n, rhs.rows(), rhs.as_slice());
    chol.solve_mut(&mut zt);
    Matrix::from_row_major(rhs.rows(), n, zt.as_slice().to_vec()).ok()
}

fn other_modes(mode: Mode) -> (usize, usize) {
    match mode {
        Mode::One => (1, 2),
        Mode::Two => (0, 2),
        Mode::Three => (0, 1),
    }
}

/// Matricized tensor times Khatri-Rao product, `unfold(T, mode) · (Zₐ ⊙ Z_b)`,
/// computed without forming either operand.
pub(crate) fn mttkrp(t: &Tensor3, factors: &[Matrix; 3], mode: Mode) -> Matrix {
    let (n1, n2, n3) = t.dims();
    let k = factors[0].cols();
    let [z1, z2, z3] = factors;
    let mut out = Matrix::zeros(t.dim(mode), k);
    let mut w = vec![0.0; k];
    match mode {
        Mode::One | Mode::Two => {
            for i in 0..n1 {
                for j in 0..n2 {
                    let fiber = t.fiber(i, j);
                    w.iter_mut().for_each(|v| *v = 0.0);
                    for (kk, &x) in fiber.iter().enumerate() {
                        if x == 0.0 {
                            continue;
                        }
                        for (v, &z) in w.iter_mut().zip(z3.row(kk)) {
                            *v += x * z;
                        }
                    }
                    let (row, scale) = if mode == Mode::One { (i, z2.row(j)) } else { (j, z1.row(i)) };
                    let dst = &mut out.as_mut_slice()[row * k..(row + 1) * k];
                    for ((d, &v), &s) in dst.iter_mut().zip(&w).zip(scale) {
                        *d += v * s;
                    }
                }
            }
        }
        Mode::Three => {
            for i in 0..n1 {
                for j in 0..n2 {
                    for ((v, &a), &b) in w.iter_mut().zip(z1.row(i)).zip(z2.row(j)) {
                        *v = a * b;
                    }
                    for (kk, &x) in t.fiber(i, j).iter().enumerate() {
                        if x == 0.0 {
                            continue;
                        }
                        let dst = &mut out.as_mut_slice()[kk * k..(kk + 1) * k];
                        for (d, &v) in dst.iter_mut().zip(&w) {
                            *d += x * v;
                        }
                    }
                }
            }
        }
    }
    debug_assert_eq!(out.rows(), [n1, n2, n3][mode.index()]);
    out
}

fn pseudo_inverse(g: &Matrix) -> Matrix {
    let n = g.rows();
    let svd = DMatrix::from_row_slice(n, n, g.as_slice()).svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = PINV_RTOL * sigma_max;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut pinv = Matrix::zeros(n, n);
    for (s, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma <= cutoff || sigma == 0.0 {
            continue;
        }
        let inv = 1.0 / sigma;
        for r in 0..n {
            let vr = v_t[(s, r)] * inv;
            for c in 0..n {
                let cur = pinv.get(r, c);
                pinv.set(r, c, cur + vr * u[(c, s)]);
            }
        }
    }
    pinv
}

fn random_factors(dims: (usize, usize, usize), k: usize, seed: u64) -> [Matrix; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| {
        let mut z = Matrix::from_fn(rows, k, |_, _| StandardNormal.sample(&mut rng));
        for r in 0..k {
            let norm = column_norm(&z, r);
            if norm > 0.0 {
                scale_column(&mut z, r, 1.0 / norm);
            } else {
                set_basis_column(&mut z, r);
            }
        }
        z
    };
    [draw(dims.0), draw(dims.1), draw(dims.2)]
}

fn column_norm(z: &Matrix, c: usize) -> f64 {
    (0..z.rows()).map(|r| z.get(r, c).powi(2)).sum::<f64>().sqrt()
}

fn scale_column(z: &mut Matrix, c: usize, s: f64) {
    for r in 0..z.rows() {
        let v = z.get(r, c);
        z.set(r, c, v * s);
    }
}

fn set_basis_column(z: &mut Matrix, c: usize) {
    for r in 0..z.rows() {
        z.set(r, c, if r == 0 { 1.0 } else { 0.0 });
    }
}

fn residual(t: &Tensor3, weights: &[f64], factors: &[Matrix; 3]) -> f64 {
    let model = reconstruct_parts(weights, factors);
    t.squared_distance(&model).expect("model dims match tensor")
}

/// `Σᵢ ξᵢ · Z1[:, i] ∘ Z2[:, i] ∘ Z3[:, i]`.
pub fn reconstruct(f: &CpdFactors) -> Tensor3 {
    reconstruct_parts(&f.weights, &f.factors)
}

fn reconstruct_parts(weights: &[f64], factors: &[Matrix; 3]) -> Tensor3 {
    let [z1, z2, z3] = factors;
    let (n1, n2, n3) = (z1.rows(), z2.rows(), z3.rows());
    let k = weights.len();
    let mut out = Tensor3::zeros((n1, n2, n3));
    let mut p = vec![0.0; k];
    for i in 0..n1 {
        for j in 0..n2 {
            for (r, v) in p.iter_mut().enumerate() {
                *v = weights[r] * z1.get(i, r) * z2.get(j, r);
            }
            let fiber = out.fiber_mut(i, j);
            for (kk, x) in fiber.iter_mut().enumerate() {
                *x = z3.row(kk).iter().zip(&p).map(|(a, b)| a * b).sum();
            }
        }
    }
    out
}

/// Column-wise Kronecker product. Row `p * n + q` of column `i` holds
/// `A[p, i] · B[q, i]`, matching the column order of [`crate::tensor::unfold`].
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "Khatri-Rao product needs equal column counts, got {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    let (m, n, k) = (a.rows(), b.rows(), a.cols());
    Ok(Matrix::from_fn(m * n, k, |row, c| a.get(row / n, c) * b.get(row % n, c)))
}

/// A deterministic unit-weight model of the given shape.
#[cfg(test)]
pub(crate) fn outer_model_for_tests(dims: (usize, usize, usize), k: usize) -> CpdFactors {
    let [z1, z2, z3] = random_factors(dims, k, 0);
    CpdFactors::new(vec![1.0; k], z1, z2, z3).unwrap()
}
