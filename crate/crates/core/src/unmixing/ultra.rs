use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{check_prior_dims, AbundanceTensor, EndmemberMatrix, PixelSystem, UltraConfig};
use crate::cpd::{cpd_als, reconstruct, CpdFactors, CpdInit, CpdOptions};
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative change of the objective fell below the tolerance.
    Converged,
    MaxIterations,
}

/// What happened during one unmixing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub lambda: f64,
    pub rank: Option<usize>,
    /// `J(A, Q)` at the initial point followed by one value per outer iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// ALS sweeps spent in each Q-step, initialization first.
    pub cpd_sweeps: Vec<usize>,
    pub init_seconds: f64,
    pub a_step_seconds: f64,
    pub q_step_seconds: f64,
    pub total_seconds: f64,
}

/// Alternates the A-step and the Q-step starting from `(a0, q0)`.
///
/// The prior `q0` is passed as a CP model of rank `cfg.rank`; every Q-step runs
/// ALS warm-started from the previous model, so neither block update can raise
/// the objective beyond solver round-off.
pub fn ultra(
    cube: &Tensor3,
    m: &EndmemberMatrix,
    cfg: &UltraConfig,
    a0: &AbundanceTensor,
    q0: &CpdFactors,
) -> Result<(AbundanceTensor, Tensor3, RunReport)> {
    let start = Instant::now();
    cfg.validate()?;
    let system = PixelSystem::new(cube, m)?;
    let (n1, n2, _) = cube.dims();
    if a0.dims() != (n1, n2, m.count()) {
        return Err(Error::Dimension(format!(
            "initial abundances are {:?}, expected ({n1}, {n2}, {})",
            a0.dims(),
            m.count()
        )));
    }
    if q0.rank() != cfg.rank {
        return Err(Error::Parameter(format!(
            "initial prior has rank {} but rank {} was configured",
            q0.rank(),
            cfg.rank
        )));
    }
    let mut q = reconstruct(q0);
    check_prior_dims(cube, m, &q)?;

    let mut a = a0.clone();
    let mut model = q0.clone();
    let mut objective = system.cost(a.tensor(), &q, cfg.lambda);
    let mut report = RunReport {
        method: "ultra".into(),
        lambda: cfg.lambda,
        rank: Some(cfg.rank),
        objective_history: vec![objective],
        iterations: 0,
        termination: Termination::MaxIterations,
        cpd_sweeps: Vec::new(),
        init_seconds: 0.0,
        a_step_seconds: 0.0,
        q_step_seconds: 0.0,
        total_seconds: 0.0,
    };

    for iteration in 1..=cfg.outer_max_iters {
        let t = Instant::now();
        a = system.solve(Some(&q), cfg.lambda, cfg.fcls_tol)?;
        report.a_step_seconds += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let opts = CpdOptions { init: CpdInit::Given(model), ..cfg.cpd_options() };
        let (fitted, history) = cpd_als(a.tensor(), &opts)?;
        report.cpd_sweeps.push(history.len());
        q = reconstruct(&fitted);
        model = fitted;
        report.q_step_seconds += t.elapsed().as_secs_f64();

        let next = system.cost(a.tensor(), &q, cfg.lambda);
        report.objective_history.push(next);
        report.iterations = iteration;
        let change = (objective - next).abs() / objective.abs().max(f64::MIN_POSITIVE);
        objective = next;
        if change < cfg.outer_rel_tol || next == 0.0 {
            report.termination = Termination::Converged;
            break;
        }
    }
    report.total_seconds = start.elapsed().as_secs_f64();
    Ok((a, q, report))
}

/// Full pipeline with the default initialization: `A⁽⁰⁾` is the plain FCLS map
/// and `Q⁽⁰⁾` is its CP fit from the seeded random start.
pub fn unmix_ultra(
    cube: &Tensor3,
    m: &EndmemberMatrix,
    cfg: &UltraConfig,
) -> Result<(AbundanceTensor, Tensor3, RunReport)> {
    let start = Instant::now();
    cfg.validate()?;
    let a0 = PixelSystem::new(cube, m)?.solve(None, 0.0, cfg.fcls_tol)?;
    let (q0, history) = cpd_als(a0.tensor(), &cfg.cpd_options())?;
    let init_seconds = start.elapsed().as_secs_f64();
    let (a, q, mut report) = ultra(cube, m, cfg, &a0, &q0)?;
    report.cpd_sweeps.insert(0, history.len());
    report.init_seconds = init_seconds;
    report.total_seconds = start.elapsed().as_secs_f64();
    Ok((a, q, report))
}
