//! Latent clustered forecast: factorize, cluster the weight rows, forecast
//! latent profiles per cluster, reconstruct.

mod dendrogram;
mod regression;

pub use dendrogram::{
    build_dendrogram, exploring_dendrogram, ClusterPartition, Dendrogram, Merge,
};
pub use regression::{
    exponential_smoothing_forecast, fit_predict_profiles, sliding_window_dataset, RegressorSpec,
};

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::smm::SeriesMatrix;
use crate::solver::{solve_palm, ConstraintProfile, SolverConfig};

/// Configuration of the clustered pipeline.
#[derive(Debug, Clone)]
pub struct LcfConfig<S: Scalar> {
    /// Rank of the global factorization driving the clustering.
    pub rank_global: usize,
    /// Rank of each per-cluster factorization (reduced to the cluster size
    /// when a cluster is smaller).
    pub rank_cluster: usize,
    /// Cluster size bound; `None` defaults to the global rank.
    pub max_cluster_size: Option<usize>,
    pub regressor: RegressorSpec<S>,
    /// Solver settings for both factorizations (semi-normalized program via
    /// PALM); the rank field is overridden per use.
    pub solver_cfg: SolverConfig<S>,
}

impl<S: Scalar> LcfConfig<S> {
    pub fn new(rank_global: usize, rank_cluster: usize, regressor: RegressorSpec<S>) -> Self {
        Self {
            rank_global,
            rank_cluster,
            max_cluster_size: None,
            regressor,
            solver_cfg: SolverConfig::new(rank_global),
        }
    }
}

/// Forecast plus the clustering that produced it.
#[derive(Debug, Clone)]
pub struct LcfReport<S: Scalar> {
    /// N x F forecast, clamped at zero.
    pub forecast: Array2<S>,
    pub partition: ClusterPartition,
    pub rank_global: usize,
    pub rank_cluster: usize,
    pub max_cluster_size: usize,
    /// Forecast cells clamped up to zero.
    pub clamped_cells: usize,
    /// Clusters whose factorization rank was reduced to the cluster size.
    pub reduced_rank_clusters: usize,
}

/// Runs the full clustered pipeline.
///
/// The per-cluster factorizations and forecasts run in parallel; each uses
/// the same derived seed so the result does not depend on scheduling or on
/// the order clusters were emitted.
pub fn lcf_forecast<S: Scalar>(
    m: &SeriesMatrix<S>,
    horizon: usize,
    cfg: &LcfConfig<S>,
) -> Result<LcfReport<S>> {
    cfg.regressor.validate()?;
    if horizon == 0 {
        return Err(Error::Config("horizon must be >= 1".into()));
    }
    if cfg.rank_global == 0 || cfg.rank_cluster == 0 {
        return Err(Error::Config("ranks must be >= 1".into()));
    }
    let d = cfg.max_cluster_size.unwrap_or(cfg.rank_global).max(1);

    // Global semi-normalized factorization; only W0 is kept, as the
    // clustering coordinates.
    let problem = crate::masking::MaskedProblem::unmasked(m.view().to_owned())?;
    let mut global_cfg = cfg.solver_cfg.clone();
    global_cfg.rank = cfg.rank_global;
    let global = solve_palm(&problem, &ConstraintProfile::snnmf(), &global_cfg)?;

    let dendro = build_dendrogram(global.w.view())?;
    let partition = exploring_dendrogram(&dendro, d)?;

    let cluster_seed = cfg.solver_cfg.seed.wrapping_add(1);
    let results: Vec<Result<(Vec<usize>, Array2<S>, bool)>> = partition
        .clusters
        .par_iter()
        .map(|cluster| {
            let sub = m.view().select(Axis(0), cluster);
            let rank = cfg.rank_cluster.min(cluster.len());
            let reduced = rank < cfg.rank_cluster;
            let sub_problem = crate::masking::MaskedProblem::unmasked(sub)?;
            let mut sub_cfg = cfg.solver_cfg.clone();
            sub_cfg.rank = rank;
            sub_cfg.seed = cluster_seed;
            let f = solve_palm(&sub_problem, &ConstraintProfile::snnmf(), &sub_cfg)?;
            let profiles_fc = fit_predict_profiles(f.h.view(), horizon, &cfg.regressor)?;
            Ok((cluster.clone(), f.w.dot(&profiles_fc), reduced))
        })
        .collect();

    let mut forecast = Array2::zeros((m.n_series(), horizon));
    let mut clamped = 0usize;
    let mut reduced_rank_clusters = 0usize;
    for res in results {
        let (rows, block, reduced) = res?;
        if reduced {
            reduced_rank_clusters += 1;
        }
        for (local, &series_idx) in rows.iter().enumerate() {
            for f in 0..horizon {
                let mut v = block[[local, f]];
                if v < S::zero() {
                    clamped += 1;
                    v = S::zero();
                }
                forecast[[series_idx, f]] = v;
            }
        }
    }

    Ok(LcfReport {
        forecast,
        partition,
        rank_global: cfg.rank_global,
        rank_cluster: cfg.rank_cluster,
        max_cluster_size: d,
        clamped_cells: clamped,
        reduced_rank_clusters,
    })
}
