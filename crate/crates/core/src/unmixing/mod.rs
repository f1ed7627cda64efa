//! Abundance estimation under the linear mixing model.
//!
//! Every pixel spectrum `r` is modelled as `M·α + e` with `α` on the unit
//! simplex. [`fcls`] solves the plain fully constrained problem per pixel;
//! [`ultra`] alternates a regularized FCLS pass (the A-step) with a rank-K CP
//! fit of the abundance tensor (the Q-step) to minimize
//!
//! ```text
//! J(A, Q) = ½ Σ ‖r(n1,n2) − M·α(n1,n2)‖² + (λ/2)·‖A − Q‖²_F
//! ```
//!
//! The simplex constraint is enforced in the A-step only; `Q` is unconstrained.

mod fcls;
mod ultra;

use crate::cpd::{cpd_als, reconstruct, CpdFactors, CpdOptions};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};

pub use ultra::{ultra, unmix_ultra, RunReport, Termination};

/// Default KKT tolerance for the active-set solver.
pub const DEFAULT_FCLS_TOL: f64 = 1e-12;
/// ALS sweeps per Q-step. Each Q-step is warm-started from the previous
/// model, so the fit keeps improving across outer iterations.
pub const DEFAULT_Q_STEP_SWEEPS: usize = 10;

/// Slack allowed on abundance nonnegativity.
pub const NONNEG_SLACK: f64 = 1e-9;
/// Slack allowed on the sum-to-one constraint.
pub const SUM_SLACK: f64 = 1e-8;

/// `L × R` matrix of endmember spectra, one column per material.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberMatrix(Matrix);

impl EndmemberMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.cols() == 0 || m.rows() == 0 {
            return Err(Error::Dimension("endmember matrix needs at least one band and one endmember".into()));
        }
        if m.as_slice().iter().any(|&v| v < 0.0) {
            return Err(Error::Input("endmember reflectances must be nonnegative".into()));
        }
        Ok(EndmemberMatrix(m))
    }

    pub fn bands(&self) -> usize {
        self.0.rows()
    }

    pub fn count(&self) -> usize {
        self.0.cols()
    }

    /// Fewer bands than endmembers: the problem is solvable but not identifiable.
    pub fn is_underdetermined(&self) -> bool {
        self.bands() < self.count()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// `M · α`.
    pub fn mix(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        self.0.mul_vec(alpha)
    }

    /// `Mᵀ · r`.
    pub fn project(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.bands() {
            return Err(Error::Dimension(format!(
                "spectrum has {} bands, endmembers have {}",
                r.len(),
                self.bands()
            )));
        }
        let mut out = vec![0.0; self.count()];
        for (l, &x) in r.iter().enumerate() {
            for (o, &m) in out.iter_mut().zip(self.0.row(l)) {
                *o += m * x;
            }
        }
        Ok(out)
    }

    /// Noiseless cube `R[n1, n2, :] = M · A[n1, n2, :]`.
    pub fn forward(&self, abundances: &Tensor3) -> Result<Tensor3> {
        let (n1, n2, r) = abundances.dims();
        if r != self.count() {
            return Err(Error::Dimension(format!(
                "abundance tensor has {r} endmembers, matrix has {}",
                self.count()
            )));
        }
        let mut cube = Tensor3::zeros((n1, n2, self.bands()));
        for i in 0..n1 {
            for j in 0..n2 {
                let mixed = self.mix(abundances.fiber(i, j))?;
                cube.fiber_mut(i, j).copy_from_slice(&mixed);
            }
        }
        Ok(cube)
    }
}

/// `N1 × N2 × R` abundance tensor whose mode-3 fibers lie on the unit simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceTensor(Tensor3);

impl AbundanceTensor {
    /// Checks nonnegativity (within `1e-9`) and sum-to-one (within `1e-8`) of every fiber.
    pub fn new(t: Tensor3) -> Result<Self> {
        let (n1, n2, _) = t.dims();
        for i in 0..n1 {
            for j in 0..n2 {
                let f = t.fiber(i, j);
                let sum: f64 = f.iter().sum();
                if f.iter().any(|&v| v < -NONNEG_SLACK) || (sum - 1.0).abs() > SUM_SLACK {
                    return Err(Error::Input(format!(
                        "abundance fiber ({i}, {j}) is not on the unit simplex"
                    )));
                }
            }
        }
        Ok(AbundanceTensor(t))
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor3 {
        self.0
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.0.dims()
    }
}

impl AsRef<Tensor3> for AbundanceTensor {
    fn as_ref(&self) -> &Tensor3 {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UltraConfig {
    /// Weight of the low-rank prior term.
    pub lambda: f64,
    /// Rank of the prior tensor Q.
    pub rank: usize,
    pub outer_max_iters: usize,
    /// Stop once the relative change of J between outer iterations is below this.
    pub outer_rel_tol: f64,
    /// ALS controls for the Q-step; `rank` is overridden by [`UltraConfig::rank`].
    pub cpd: CpdOptions,
    pub fcls_tol: f64,
}

impl UltraConfig {
    pub fn new(lambda: f64, rank: usize) -> Self {
        UltraConfig { lambda, rank, ..UltraConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Parameter(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.rank == 0 {
            return Err(Error::Parameter("prior rank must be at least 1".into()));
        }
        if self.outer_max_iters == 0 {
            return Err(Error::Parameter("outer_max_iters must be at least 1".into()));
        }
        if self.outer_rel_tol.is_nan() || self.outer_rel_tol <= 0.0 || self.fcls_tol.is_nan() || self.fcls_tol <= 0.0 {
            return Err(Error::Parameter("tolerances must be positive".into()));
        }
        self.cpd_options().validate()
    }

    pub(crate) fn cpd_options(&self) -> CpdOptions {
        CpdOptions { rank: self.rank, ..self.cpd.clone() }
    }
}

impl Default for UltraConfig {
    fn default() -> Self {
        UltraConfig {
            lambda: 1.0,
            rank: 10,
            outer_max_iters: 50,
            outer_rel_tol: 1e-5,
            cpd: CpdOptions { max_iters: DEFAULT_Q_STEP_SWEEPS, ..CpdOptions::default() },
            fcls_tol: DEFAULT_FCLS_TOL,
        }
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// Fully constrained least squares for one pixel: `argmin ‖r − Mα‖²` over the unit simplex.
pub fn fcls_pixel(r: &[f64], m: &EndmemberMatrix, tol: f64) -> Result<Vec<f64>> {
    check_finite(r, "pixel spectrum")?;
    let c = m.project(r)?;
    fcls::solve_simplex_qp(&m.matrix().gram(), &c, tol)
}

/// `argmin ‖r − Mα‖² + λ‖α − q‖²` over the unit simplex.
///
/// This is FCLS on the augmented system `[M; √λ·I]`, `[r; √λ·q]`, solved in
/// normal-equation form: Gram `MᵀM + λI`, right-hand side `Mᵀr + λq`.
pub fn regularized_fcls_pixel(
    r: &[f64],
    m: &EndmemberMatrix,
    q: &[f64],
    lambda: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Parameter(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return fcls_pixel(r, m, tol);
    }
    if q.len() != m.count() {
        return Err(Error::Dimension(format!(
            "prior fiber has {} entries, expected {}",
            q.len(),
            m.count()
        )));
    }
    check_finite(r, "pixel spectrum")?;
    check_finite(q, "prior fiber")?;
    let gram = regularized_gram(m.matrix().gram(), lambda);
    let c = regularized_rhs(m.project(r)?, q, lambda);
    fcls::solve_simplex_qp(&gram, &c, tol)
}

fn regularized_gram(mut gram: Matrix, lambda: f64) -> Matrix {
    for i in 0..gram.rows() {
        let v = gram.get(i, i);
        gram.set(i, i, v + lambda);
    }
    gram
}

fn regularized_rhs(mut c: Vec<f64>, q: &[f64], lambda: f64) -> Vec<f64> {
    for (ci, qi) in c.iter_mut().zip(q) {
        *ci += lambda * qi;
    }
    c
}

/// Per-image data that stays fixed across outer iterations: the Gram matrix
/// `MᵀM`, the projections `Mᵀr` of every pixel and `‖R‖²_F`.
pub(crate) struct PixelSystem {
    gram: Matrix,
    projections: Tensor3,
    cube_sq: f64,
}

impl PixelSystem {
    pub(crate) fn new(cube: &Tensor3, m: &EndmemberMatrix) -> Result<Self> {
        let (n1, n2, l) = cube.dims();
        if l != m.bands() {
            return Err(Error::Dimension(format!(
                "cube is {n1}x{n2}x{l} but endmember matrix is {}x{} ({} bands expected)",
                m.bands(),
                m.count(),
                m.bands()
            )));
        }
        let mut projections = Tensor3::zeros((n1, n2, m.count()));
        for i in 0..n1 {
            for j in 0..n2 {
                let c = m.project(cube.fiber(i, j))?;
                projections.fiber_mut(i, j).copy_from_slice(&c);
            }
        }
        Ok(PixelSystem { gram: m.matrix().gram(), projections, cube_sq: cube.squared_norm() })
    }

    /// Solves every pixel; `prior = None` or `lambda == 0` is plain FCLS.
    pub(crate) fn solve(&self, prior: Option<&Tensor3>, lambda: f64, tol: f64) -> Result<AbundanceTensor> {
        let (n1, n2, r) = self.projections.dims();
        let regularize = lambda != 0.0 && prior.is_some();
        let gram = if regularize { regularized_gram(self.gram.clone(), lambda) } else { self.gram.clone() };
        let mut out = Tensor3::zeros((n1, n2, r));
        for i in 0..n1 {
            for j in 0..n2 {
                let c = self.projections.fiber(i, j).to_vec();
                let c = match prior {
                    Some(q) if regularize => regularized_rhs(c, q.fiber(i, j), lambda),
                    _ => c,
                };
                let alpha = fcls::solve_simplex_qp(&gram, &c, tol)
                    .map_err(|e| Error::Pixel { row: i, col: j, source: Box::new(e) })?;
                out.fiber_mut(i, j).copy_from_slice(&alpha);
            }
        }
        Ok(AbundanceTensor(out))
    }

    /// Objective J(A, Q) through `‖R‖² − 2Σ αᵀMᵀr + Σ αᵀMᵀMα`.
    pub(crate) fn cost(&self, a: &Tensor3, q: &Tensor3, lambda: f64) -> f64 {
        let mut data = self.cube_sq;
        for (alpha, c) in a.fibers().zip(self.projections.fibers()) {
            let mut quad = 0.0;
            for (x, &ai) in alpha.iter().enumerate() {
                quad += ai * self.gram.row(x).iter().zip(alpha).map(|(g, b)| g * b).sum::<f64>();
            }
            data += quad - 2.0 * alpha.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
        }
        let prior = if lambda == 0.0 { 0.0 } else { a.squared_distance(q).expect("same dims") };
        0.5 * data.max(0.0) + 0.5 * lambda * prior
    }
}

fn check_prior_dims(cube: &Tensor3, m: &EndmemberMatrix, q: &Tensor3) -> Result<()> {
    let (n1, n2, _) = cube.dims();
    if q.dims() != (n1, n2, m.count()) {
        return Err(Error::Dimension(format!(
            "prior tensor is {:?}, expected ({n1}, {n2}, {})",
            q.dims(),
            m.count()
        )));
    }
    Ok(())
}

/// Plain per-pixel FCLS over a whole cube.
pub fn fcls(cube: &Tensor3, m: &EndmemberMatrix, tol: f64) -> Result<AbundanceTensor> {
    PixelSystem::new(cube, m)?.solve(None, 0.0, tol)
}

/// The A-step: regularized FCLS toward `q` for every pixel independently.
pub fn a_step(cube: &Tensor3, m: &EndmemberMatrix, q: &Tensor3, cfg: &UltraConfig) -> Result<AbundanceTensor> {
    if cfg.lambda.is_nan() || cfg.lambda < 0.0 {
        return Err(Error::Parameter(format!("lambda must be >= 0, got {}", cfg.lambda)));
    }
    check_prior_dims(cube, m, q)?;
    PixelSystem::new(cube, m)?.solve(Some(q), cfg.lambda, cfg.fcls_tol)
}

/// The Q-step: the rank-`rank` CP approximation of the abundance tensor.
pub fn q_step(a: &AbundanceTensor, rank: usize, opts: &CpdOptions) -> Result<Tensor3> {
    Ok(q_step_model(a.tensor(), &CpdOptions { rank, ..opts.clone() })?.1)
}

pub(crate) fn q_step_model(a: &Tensor3, opts: &CpdOptions) -> Result<(CpdFactors, Tensor3)> {
    let (model, _) = cpd_als(a, opts)?;
    let q = reconstruct(&model);
    Ok((model, q))
}

/// `J(A, Q) = ½ Σ‖R fiber − M·A fiber‖² + (λ/2)‖A − Q‖²_F`, evaluated directly.
pub fn evaluate_cost(cube: &Tensor3, m: &EndmemberMatrix, a: &Tensor3, q: &Tensor3, lambda: f64) -> Result<f64> {
    let (n1, n2, l) = cube.dims();
    if l != m.bands() || a.dims() != (n1, n2, m.count()) {
        return Err(Error::Dimension(format!(
            "cube {:?}, abundances {:?} and {}x{} endmembers are not conformable",
            cube.dims(),
            a.dims(),
            m.bands(),
            m.count()
        )));
    }
    check_prior_dims(cube, m, q)?;
    let mut data = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            let mixed = m.mix(a.fiber(i, j))?;
            data += cube.fiber(i, j).iter().zip(&mixed).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
    }
    let prior = if lambda == 0.0 { 0.0 } else { a.squared_distance(q)? };
    Ok(0.5 * data + 0.5 * lambda * prior)
}
