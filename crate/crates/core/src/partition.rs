//! Client partitioning of training data.
//!
//! Three schemes split a dataset across simulated clients:
//!
//! - **per-series**: one client per entity (used by the multi-series
//!   datasets, where clients and series correspond one-to-one);
//! - **Dirichlet-contiguous**: one series cut into consecutive blocks whose
//!   sizes follow a seeded Dirichlet(β) draw — smaller β, more unbalanced;
//! - **equal**: one series cut into consecutive blocks of near-equal size.
//!
//! Test data is never partitioned; evaluation always runs on the full test
//! split.

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetBundle, MultivariateSeries};
use crate::error::{Error, Result};
use crate::rng;

/// A contiguous run of training rows within one entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesSlice {
    pub entity_id: String,
    /// First row (inclusive).
    pub row_start: usize,
    /// Past-the-end row (exclusive).
    pub row_end: usize,
}

impl SeriesSlice {
    /// Number of rows in the slice.
    pub fn len(&self) -> usize {
        self.row_end - self.row_start
    }

    /// True if the slice is empty.
    pub fn is_empty(&self) -> bool {
        self.row_start == self.row_end
    }
}

/// How training rows are divided among clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientAssignment {
    pub n_clients: usize,
    /// Per client, the slices it owns.
    pub assignment: Vec<Vec<SeriesSlice>>,
    /// Per client, its fraction of all training rows.
    pub proportions: Vec<f64>,
}

impl ClientAssignment {
    /// Rows owned by one client.
    pub fn client_rows(&self, client: usize) -> usize {
        self.assignment[client].iter().map(SeriesSlice::len).sum()
    }

    /// Total rows across all clients.
    pub fn total_rows(&self) -> usize {
        (0..self.n_clients).map(|c| self.client_rows(c)).sum()
    }

    /// Verify the core invariants against the entities' true row counts:
    /// slices disjoint and jointly covering every training row, each client
    /// owning at least one row, proportions summing to 1.
    pub fn validate(&self, entity_rows: &[(&str, usize)]) -> Result<()> {
        for (client, slices) in self.assignment.iter().enumerate() {
            if slices.iter().map(SeriesSlice::len).sum::<usize>() == 0 {
                return Err(Error::InfeasiblePartition(format!(
                    "client {client} owns no rows"
                )));
            }
        }
        // Per entity, collect claimed rows and check exact single coverage.
        for &(entity, rows) in entity_rows {
            let mut claimed = vec![false; rows];
            for slices in &self.assignment {
                for s in slices.iter().filter(|s| s.entity_id == entity) {
                    if s.row_end > rows {
                        return Err(Error::InfeasiblePartition(format!(
                            "{entity}: slice reaches row {} of {rows}",
                            s.row_end
                        )));
                    }
                    for r in s.row_start..s.row_end {
                        if claimed[r] {
                            return Err(Error::InfeasiblePartition(format!(
                                "{entity}: row {r} assigned twice"
                            )));
                        }
                        claimed[r] = true;
                    }
                }
            }
            if let Some(gap) = claimed.iter().position(|&c| !c) {
                return Err(Error::InfeasiblePartition(format!(
                    "{entity}: row {gap} unassigned"
                )));
            }
        }
        let sum: f64 = self.proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InfeasiblePartition(format!(
                "proportions sum to {sum}"
            )));
        }
        Ok(())
    }

    /// Plain-text audit table: one `client_id,entity_id,row_start,row_end`
    /// line per slice.
    pub fn to_table_string(&self) -> String {
        let mut out = String::from("client_id,entity_id,row_start,row_end\n");
        for (client, slices) in self.assignment.iter().enumerate() {
            for s in slices {
                out.push_str(&format!(
                    "{client},{},{},{}\n",
                    s.entity_id, s.row_start, s.row_end
                ));
            }
        }
        out
    }
}

/// Partition scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionScheme {
    PerSeries,
    DirichletContiguous,
    Equal,
}

impl std::str::FromStr for PartitionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "per_series" | "per-series" => Ok(PartitionScheme::PerSeries),
            "dirichlet" | "dirichlet_contiguous" => Ok(PartitionScheme::DirichletContiguous),
            "equal" => Ok(PartitionScheme::Equal),
            other => Err(Error::Config(format!("unknown partition scheme '{other}'"))),
        }
    }
}

/// Settings for the seeded partition schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub scheme: PartitionScheme,
    /// Dirichlet concentration; used only by the Dirichlet scheme.
    pub beta: f64,
    pub n_clients: usize,
    pub seed: u64,
}

/// One client per series; client i owns all training rows of series i.
pub fn partition_per_series(bundle: &DatasetBundle) -> ClientAssignment {
    let total: usize = bundle.total_train_rows();
    let assignment: Vec<Vec<SeriesSlice>> = bundle
        .series
        .iter()
        .map(|s| {
            vec![SeriesSlice {
                entity_id: s.entity_id.clone(),
                row_start: 0,
                row_end: s.train.rows(),
            }]
        })
        .collect();
    let proportions = bundle
        .series
        .iter()
        .map(|s| s.train.rows() as f64 / total as f64)
        .collect();
    ClientAssignment {
        n_clients: bundle.series.len(),
        assignment,
        proportions,
    }
}

/// Turn per-client block sizes into contiguous slices over one entity.
fn contiguous_assignment(series: &MultivariateSeries, sizes: &[usize]) -> ClientAssignment {
    let total = series.train.rows();
    let mut assignment = Vec::with_capacity(sizes.len());
    let mut offset = 0usize;
    for &size in sizes {
        assignment.push(vec![SeriesSlice {
            entity_id: series.entity_id.clone(),
            row_start: offset,
            row_end: offset + size,
        }]);
        offset += size;
    }
    debug_assert_eq!(offset, total);
    ClientAssignment {
        n_clients: sizes.len(),
        assignment,
        proportions: sizes.iter().map(|&s| s as f64 / total as f64).collect(),
    }
}

/// Round proportions to integer block sizes over `total` rows: clients
/// 0..n-1 take `round(p_i * total)`, the last client absorbs the rounding
/// residue, and a minimum of one row per client is enforced by stealing
/// single rows from the largest block.
pub fn proportions_to_sizes(proportions: &[f64], total: usize) -> Vec<usize> {
    let n = proportions.len();
    assert!(n >= 1 && total >= n, "need at least one row per client");
    let mut sizes: Vec<i64> = Vec::with_capacity(n);
    let mut used: i64 = 0;
    for &p in &proportions[..n - 1] {
        let s = (p * total as f64).round() as i64;
        sizes.push(s);
        used += s;
    }
    sizes.push(total as i64 - used);

    loop {
        let Some(small) = (0..n).find(|&i| sizes[i] < 1) else { break };
        let largest = (0..n).max_by_key(|&i| sizes[i]).unwrap();
        sizes[largest] -= 1;
        sizes[small] += 1;
    }
    sizes.into_iter().map(|s| s as usize).collect()
}

/// Cut one series into consecutive blocks sized by a seeded Dirichlet(β)
/// draw. The draw normalizes `n_clients` independent Gamma(β, 1) samples
/// taken from the stream `derive(seed, "partition", [])`.
pub fn partition_dirichlet_contiguous(
    series: &MultivariateSeries,
    cfg: &PartitionConfig,
) -> Result<ClientAssignment> {
    let total = series.train.rows();
    let n = cfg.n_clients;
    if n == 0 {
        return Err(Error::Config("n_clients must be positive".into()));
    }
    if n > total {
        return Err(Error::InfeasiblePartition(format!(
            "{n} clients for {total} training rows"
        )));
    }
    if !(cfg.beta > 0.0) {
        return Err(Error::Config(format!("beta must be positive, got {}", cfg.beta)));
    }

    let mut rng = rng::derive(cfg.seed, "partition", &[]);
    let gamma = Gamma::new(cfg.beta, 1.0)
        .map_err(|e| Error::Config(format!("bad Dirichlet concentration: {e}")))?;
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
    let mass: f64 = draws.iter().sum();
    let proportions: Vec<f64> = draws.iter().map(|d| d / mass).collect();

    let sizes = proportions_to_sizes(&proportions, total);
    Ok(contiguous_assignment(series, &sizes))
}

/// Cut one series into consecutive near-equal blocks (size spread ≤ 1).
pub fn partition_equal(series: &MultivariateSeries, n_clients: usize) -> Result<ClientAssignment> {
    let total = series.train.rows();
    if n_clients == 0 {
        return Err(Error::Config("n_clients must be positive".into()));
    }
    if n_clients > total {
        return Err(Error::InfeasiblePartition(format!(
            "{n_clients} clients for {total} training rows"
        )));
    }
    let base = total / n_clients;
    let extra = total % n_clients;
    let sizes: Vec<usize> = (0..n_clients)
        .map(|i| if i < extra { base + 1 } else { base })
        .collect();
    Ok(contiguous_assignment(series, &sizes))
}

/// Dispatch on the configured scheme.
///
/// The block schemes cut a single series; asking for them on a multi-series
/// bundle is a configuration error.
pub fn partition(bundle: &DatasetBundle, cfg: &PartitionConfig) -> Result<ClientAssignment> {
    match cfg.scheme {
        PartitionScheme::PerSeries => Ok(partition_per_series(bundle)),
        PartitionScheme::DirichletContiguous | PartitionScheme::Equal => {
            if bundle.series.len() != 1 {
                return Err(Error::Config(format!(
                    "block partitions apply to single-series datasets, found {} series",
                    bundle.series.len()
                )));
            }
            match cfg.scheme {
                PartitionScheme::DirichletContiguous => {
                    partition_dirichlet_contiguous(&bundle.series[0], cfg)
                }
                _ => partition_equal(&bundle.series[0], cfg.n_clients),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetName;
    use crate::matrix::Matrix;

    fn series(id: &str, rows: usize) -> MultivariateSeries {
        MultivariateSeries {
            entity_id: id.into(),
            train: Matrix::zeros(rows, 2),
            test: Matrix::zeros(2, 2),
            test_labels: vec![0, 1],
        }
    }

    fn bundle(rows: &[usize]) -> DatasetBundle {
        DatasetBundle {
            name: DatasetName::Smd,
            series: rows
                .iter()
                .enumerate()
                .map(|(i, &r)| series(&format!("e{i}"), r))
                .collect(),
            dims: 2,
            normalization_stats: None,
        }
    }

    #[test]
    fn per_series_one_client_per_entity() {
        let b = bundle(&[10, 30, 60]);
        let a = partition_per_series(&b);
        assert_eq!(a.n_clients, 3);
        assert_eq!(a.client_rows(0), 10);
        assert_eq!(a.client_rows(2), 60);
        assert_eq!(a.proportions, vec![0.1, 0.3, 0.6]);
        a.validate(&[("e0", 10), ("e1", 30), ("e2", 60)]).unwrap();
    }

    #[test]
    fn per_series_single_entity_identity() {
        let b = bundle(&[17]);
        let a = partition_per_series(&b);
        assert_eq!(a.n_clients, 1);
        assert_eq!(
            a.assignment[0],
            vec![SeriesSlice {
                entity_id: "e0".into(),
                row_start: 0,
                row_end: 17
            }]
        );
    }

    #[test]
    fn dirichlet_single_client_owns_everything() {
        let s = series("solo", 40);
        let cfg = PartitionConfig {
            scheme: PartitionScheme::DirichletContiguous,
            beta: 0.5,
            n_clients: 1,
            seed: 3,
        };
        let a = partition_dirichlet_contiguous(&s, &cfg).unwrap();
        assert_eq!(a.n_clients, 1);
        assert_eq!(a.assignment[0][0].row_start, 0);
        assert_eq!(a.assignment[0][0].row_end, 40);
    }

    #[test]
    fn dirichlet_blocks_cover_contiguously_and_deterministically() {
        let s = series("solo", 100);
        let cfg = PartitionConfig {
            scheme: PartitionScheme::DirichletContiguous,
            beta: 5.0,
            n_clients: 4,
            seed: 11,
        };
        let a = partition_dirichlet_contiguous(&s, &cfg).unwrap();
        let b = partition_dirichlet_contiguous(&s, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total_rows(), 100);
        a.validate(&[("solo", 100)]).unwrap();
        // Blocks are consecutive.
        let mut offset = 0;
        for slices in &a.assignment {
            assert_eq!(slices.len(), 1);
            assert_eq!(slices[0].row_start, offset);
            offset = slices[0].row_end;
        }
        assert_eq!(offset, 100);
    }

    #[test]
    fn dirichlet_sizes_match_an_independent_dirichlet_sampler() {
        // The same derived stream fed to the library's Dirichlet sampler
        // must reproduce the block proportions drawn internally.
        let s = series("solo", 100);
        let cfg = PartitionConfig {
            scheme: PartitionScheme::DirichletContiguous,
            beta: 5.0,
            n_clients: 4,
            seed: 11,
        };
        let a = partition_dirichlet_contiguous(&s, &cfg).unwrap();

        let mut rng = crate::rng::derive(11, "partition", &[]);
        let dirichlet = rand_distr::Dirichlet::new([5.0, 5.0, 5.0, 5.0]).unwrap();
        let p = dirichlet.sample(&mut rng);
        let sizes = proportions_to_sizes(&p, 100);
        let got: Vec<usize> = (0..4).map(|c| a.client_rows(c)).collect();
        assert_eq!(got, sizes);
    }

    #[test]
    fn dirichlet_infeasible_when_more_clients_than_rows() {
        let s = series("solo", 3);
        let cfg = PartitionConfig {
            scheme: PartitionScheme::DirichletContiguous,
            beta: 0.5,
            n_clients: 4,
            seed: 0,
        };
        assert!(matches!(
            partition_dirichlet_contiguous(&s, &cfg),
            Err(Error::InfeasiblePartition(_))
        ));
    }

    #[test]
    fn dirichlet_enforces_min_one_row_under_tiny_beta() {
        // β = 0.01 concentrates nearly all mass on one client; stealing
        // must still leave every client at least one row.
        for seed in 0..20 {
            let s = series("solo", 50);
            let cfg = PartitionConfig {
                scheme: PartitionScheme::DirichletContiguous,
                beta: 0.01,
                n_clients: 8,
                seed,
            };
            let a = partition_dirichlet_contiguous(&s, &cfg).unwrap();
            assert!((0..8).all(|c| a.client_rows(c) >= 1), "seed {seed}");
            a.validate(&[("solo", 50)]).unwrap();
        }
    }

    #[test]
    fn equal_exact_division() {
        let s = series("solo", 100);
        let a = partition_equal(&s, 4).unwrap();
        assert_eq!((0..4).map(|c| a.client_rows(c)).collect::<Vec<_>>(), vec![25; 4]);
    }

    #[test]
    fn equal_remainder_spread() {
        let s = series("solo", 10);
        let a = partition_equal(&s, 3).unwrap();
        assert_eq!(
            (0..3).map(|c| a.client_rows(c)).collect::<Vec<_>>(),
            vec![4, 3, 3]
        );
    }

    #[test]
    fn equal_singleton_blocks() {
        let s = series("solo", 5);
        let a = partition_equal(&s, 5).unwrap();
        assert!((0..5).all(|c| a.client_rows(c) == 1));
        a.validate(&[("solo", 5)]).unwrap();
    }

    #[test]
    fn random_instances_satisfy_coverage_and_disjointness() {
        use rand::Rng;
        let mut rng = crate::rng::derive(77, "partition-prop", &[]);
        for case in 0..60 {
            let total = rng.random_range(5..400);
            let n = rng.random_range(1..=total.min(12));
            let beta = [0.1, 0.5, 1.0, 5.0][rng.random_range(0..4)];
            let s = series("solo", total);
            let cfg = PartitionConfig {
                scheme: PartitionScheme::DirichletContiguous,
                beta,
                n_clients: n,
                seed: case,
            };
            let a = partition_dirichlet_contiguous(&s, &cfg).unwrap();
            a.validate(&[("solo", total)])
                .unwrap_or_else(|e| panic!("case {case}: {e}"));
            let e = partition_equal(&s, n).unwrap();
            e.validate(&[("solo", total)]).unwrap();
            let max = (0..n).map(|c| e.client_rows(c)).max().unwrap();
            let min = (0..n).map(|c| e.client_rows(c)).min().unwrap();
            assert!(max - min <= 1, "equal spread {max}-{min}");
        }
    }

    #[test]
    fn low_beta_is_more_unbalanced_than_high_beta() {
        // Sample variance of proportions over many draws: β=0.1 ≫ β=5.
        let variance = |beta: f64| -> f64 {
            let mut total = 0.0;
            let mut count = 0usize;
            for seed in 0..200 {
                let s = series("solo", 1000);
                let cfg = PartitionConfig {
                    scheme: PartitionScheme::DirichletContiguous,
                    beta,
                    n_clients: 8,
                    seed: 10_000 + seed,
                };
                let a = partition_dirichlet_contiguous(&s, &cfg).unwrap();
                let mean = 1.0 / 8.0;
                total += a
                    .proportions
                    .iter()
                    .map(|p| (p - mean) * (p - mean))
                    .sum::<f64>();
                count += 8;
            }
            total / count as f64
        };
        assert!(variance(0.1) > variance(5.0));
    }

    #[test]
    fn dispatch_rejects_block_schemes_on_multi_series_bundles() {
        let b = bundle(&[10, 10]);
        let cfg = PartitionConfig {
            scheme: PartitionScheme::Equal,
            beta: 1.0,
            n_clients: 2,
            seed: 0,
        };
        assert!(matches!(partition(&b, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn audit_table_lists_every_slice() {
        let b = bundle(&[4, 6]);
        let a = partition_per_series(&b);
        let table = a.to_table_string();
        assert!(table.starts_with("client_id,entity_id,row_start,row_end\n"));
        assert!(table.contains("0,e0,0,4\n"));
        assert!(table.contains("1,e1,0,6\n"));
    }
}
