//! Grid search over the prior weight λ and the prior rank K.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{median, reconstruction_rmse, sre};
use crate::tensor::Tensor3;
use crate::unmixing::{unmix_ultra, EndmemberMatrix, UltraConfig};

/// Outcome of one `(λ, K, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub lambda: f64,
    pub rank: usize,
    pub seed: u64,
    pub sre_db: f64,
    pub rmse: f64,
    pub seconds: f64,
}

/// Aggregate of every seed run for one `(λ, K)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub lambda: f64,
    pub rank: usize,
    pub median_sre_db: f64,
    pub median_rmse: f64,
    pub runs: usize,
}

/// Runs ULTRA for every combination of `lambdas × ranks × seeds`.
///
/// `seeds` drive the CPD initialization; all other controls come from `base`.
pub fn grid_search(
    cube: &Tensor3,
    m: &EndmemberMatrix,
    truth: &Tensor3,
    lambdas: &[f64],
    ranks: &[usize],
    seeds: &[u64],
    base: &UltraConfig,
) -> Result<Vec<GridRecord>> {
    if lambdas.is_empty() || ranks.is_empty() || seeds.is_empty() {
        return Err(Error::Parameter("grid search needs at least one lambda, rank and seed".into()));
    }
    let mut records = Vec::with_capacity(lambdas.len() * ranks.len() * seeds.len());
    for &lambda in lambdas {
        for &rank in ranks {
            for &seed in seeds {
                let mut cfg = UltraConfig { lambda, rank, ..base.clone() };
                cfg.cpd.seed = seed;
                let t = Instant::now();
                let (a, _, _) = unmix_ultra(cube, m, &cfg)?;
                let seconds = t.elapsed().as_secs_f64();
                records.push(GridRecord {
                    lambda,
                    rank,
                    seed,
                    sre_db: sre(truth, a.tensor())?,
                    rmse: reconstruction_rmse(cube, m, a.tensor())?,
                    seconds,
                });
            }
        }
    }
    Ok(records)
}

/// Groups records by `(λ, K)` in first-seen order.
pub fn summarize(records: &[GridRecord]) -> Vec<CellSummary> {
    let mut cells: Vec<(f64, usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for r in records {
        match cells.iter_mut().find(|c| c.0 == r.lambda && c.1 == r.rank) {
            Some(c) => {
                c.2.push(r.sre_db);
                c.3.push(r.rmse);
            }
            None => cells.push((r.lambda, r.rank, vec![r.sre_db], vec![r.rmse])),
        }
    }
    cells
        .into_iter()
        .map(|(lambda, rank, sres, rmses)| CellSummary {
            lambda,
            rank,
            median_sre_db: median(&sres).unwrap_or(f64::NAN),
            median_rmse: median(&rmses).unwrap_or(f64::NAN),
            runs: sres.len(),
        })
        .collect()
}

/// Cell with the highest median SRE; earlier cells win ties.
pub fn best_cell(records: &[GridRecord]) -> Option<CellSummary> {
    summarize(records)
        .into_iter()
        .filter(|c| !c.median_sre_db.is_nan())
        .fold(None, |best: Option<CellSummary>, c| match best {
            Some(b) if b.median_sre_db >= c.median_sre_db => Some(b),
            _ => Some(c),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_scene, Pattern, SceneSpec};

    fn record(lambda: f64, rank: usize, seed: u64, sre_db: f64) -> GridRecord {
        GridRecord { lambda, rank, seed, sre_db, rmse: 0.1, seconds: 0.0 }
    }

    #[test]
    fn summary_uses_medians_per_cell() {
        let records = vec![
            record(0.1, 2, 0, 10.0),
            record(0.1, 2, 1, 30.0),
            record(0.1, 2, 2, 11.0),
            record(1.0, 2, 0, 12.0),
            record(1.0, 2, 1, 12.5),
        ];
        let cells = summarize(&records);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].median_sre_db, 11.0);
        assert_eq!(cells[0].runs, 3);
        assert_eq!(cells[1].median_sre_db, 12.25);
        let best = best_cell(&records).unwrap();
        assert_eq!((best.lambda, best.rank), (1.0, 2));
    }

    #[test]
    fn ties_keep_the_first_cell() {
        let records = vec![record(0.5, 1, 0, 5.0), record(2.0, 1, 0, 5.0)];
        assert_eq!(best_cell(&records).unwrap().lambda, 0.5);
        assert!(best_cell(&[]).is_none());
    }

    #[test]
    fn grid_covers_every_combination() {
        let spec = SceneSpec {
            rows: 6,
            cols: 5,
            endmembers: 2,
            bands: 8,
            pattern: Pattern::GaussFields,
            smoothness: 2.0,
            coherence: 0.8,
            snr_db: Some(30.0),
            seed: 1,
        };
        let gt = gen_scene(&spec).unwrap();
        let base = UltraConfig { outer_max_iters: 3, ..UltraConfig::default() };
        let records =
            grid_search(&gt.noisy, &gt.endmembers, gt.abundances.tensor(), &[0.0, 0.5], &[1, 2], &[3, 4], &base)
                .unwrap();
        assert_eq!(records.len(), 8);
        assert!(records.iter().all(|r| r.sre_db.is_finite() && r.rmse >= 0.0));
        assert!(grid_search(&gt.noisy, &gt.endmembers, gt.abundances.tensor(), &[], &[1], &[0], &base).is_err());
    }
}
