use std::cmp::Ordering;

use rayon::prelude::*;

use super::{train_one_vs_all, Hyperparams, LossKind};
use crate::data::{Manifest, Split};
use crate::error::{Error, Result};
use crate::eval::{balanced_mean_ap, BalanceProtocol};
use crate::features::FeatureChannel;
use crate::seed;

const REGULARIZATION_VALUES: [f64; 4] = [0.0, 1e-7, 1e-5, 1e-3];

/// λ1 × λ2 × loss grid over {0, 1e-7, 1e-5, 1e-3}² × {hinge, logistic};
/// remaining fields come from `base`.
pub fn default_grid(base: &Hyperparams) -> Vec<Hyperparams> {
    let mut grid = Vec::with_capacity(32);
    for lambda1 in REGULARIZATION_VALUES {
        for lambda2 in REGULARIZATION_VALUES {
            for loss in [LossKind::Hinge, LossKind::Logistic] {
                grid.push(Hyperparams {
                    lambda1,
                    lambda2,
                    loss,
                    ..*base
                });
            }
        }
    }
    grid
}

/// One configuration's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub hyperparams: Hyperparams,
    /// Validation metric, or the error message if training failed.
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: Hyperparams,
    pub best_metric: f64,
    pub table: Vec<GridRow>,
}

/// `Greater` when `a` should be preferred over `b` at equal metric:
/// larger λ1, then larger λ2, then hinge.
fn tie_preference(a: &Hyperparams, b: &Hyperparams) -> Ordering {
    a.lambda1
        .total_cmp(&b.lambda1)
        .then(a.lambda2.total_cmp(&b.lambda2))
        .then(match (a.loss, b.loss) {
            (LossKind::Hinge, LossKind::Logistic) => Ordering::Greater,
            (LossKind::Logistic, LossKind::Hinge) => Ordering::Less,
            _ => Ordering::Equal,
        })
}

/// Evaluate every configuration with `metric` (in parallel) and return the
/// argmax. Failing configurations are recorded and skipped.
pub fn select_with<F>(grid: &[Hyperparams], metric: F) -> Result<Selection>
where
    F: Fn(&Hyperparams) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(Error::Empty("hyperparameter grid".into()));
    }
    let table: Vec<GridRow> = grid
        .par_iter()
        .map(|h| GridRow {
            hyperparams: *h,
            outcome: metric(h).map_err(|e| e.to_string()),
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in table.iter().enumerate() {
        let Ok(value) = row.outcome else { continue };
        let better = match best {
            None => true,
            Some((j, v)) => {
                value > v || (value == v && tie_preference(&row.hyperparams, &table[j].hyperparams) == Ordering::Greater)
            }
        };
        if better {
            best = Some((i, value));
        }
    }
    match best {
        Some((i, value)) => Ok(Selection {
            best: table[i].hyperparams,
            best_metric: value,
            table,
        }),
        None => Err(Error::Validation(format!(
            "every configuration failed; first error: {}",
            table[0].outcome.as_ref().err().map_or("", String::as_str)
        ))),
    }
}

/// Train on the train split for each configuration and pick the one with the
/// highest class-balanced mean AP on the validation split.
pub fn select_hyperparams(grid: &[Hyperparams], manifest: &Manifest, channel: &FeatureChannel, seed: u64) -> Result<Selection> {
    let val_ids = manifest.ids_in(Some(Split::Val));
    if val_ids.is_empty() {
        return Err(Error::Empty("the validation split is empty".into()));
    }
    let subset_seed = seed::derive_seed(seed, "select:val-subset");
    select_with(grid, |h| {
        let model = train_one_vs_all(manifest, channel, h)?;
        let table = model.score_table(channel, &val_ids)?;
        Ok(balanced_mean_ap(&table, manifest, Some(Split::Val), subset_seed, BalanceProtocol::ClassUniform)?.mean_ap)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem() -> (Manifest, FeatureChannel) {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut records = Vec::new();
        let mut rows = Vec::new();
        for i in 0..300 {
            let class = if i % 2 == 0 { "a" } else { "b" };
            let id = format!("r{i:04}");
            let mut r = ImageRecord::new(id.clone(), "x.png", &[class]);
            r.split = [Split::Train, Split::Train, Split::Train, Split::Val, Split::Test][i % 5];
            records.push(r);
            let sign = if class == "a" { 1.0 } else { -1.0 };
            let x: Vec<f64> = (0..8).map(|j| if j < 2 { 0.6 * sign } else { 0.0 } + rng.random_range(-1.0..1.0)).collect();
            rows.push((id, x));
        }
        let m = Manifest::new(vec!["a".into(), "b".into()], records, "t").unwrap();
        (m, FeatureChannel::from_rows("f", 8, rows).unwrap())
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid(&Hyperparams::default());
        assert_eq!(g.len(), 32);
        assert_eq!(g.iter().filter(|h| h.loss == LossKind::Logistic).count(), 16);
    }

    #[test]
    fn grid_of_one_returns_it() {
        let (m, ch) = problem();
        let h = Hyperparams {
            lambda1: 1e-4,
            ..Default::default()
        };
        let s = select_hyperparams(&[h], &m, &ch, 0).unwrap();
        assert_eq!(s.best, h);
        assert_eq!(s.table.len(), 1);
    }

    #[test]
    fn over_regularized_config_loses() {
        let (m, ch) = problem();
        let grid = [
            Hyperparams {
                lambda2: 1e6,
                ..Default::default()
            },
            Hyperparams {
                lambda2: 1e-6,
                ..Default::default()
            },
        ];
        let s = select_hyperparams(&grid, &m, &ch, 0).unwrap();
        assert_eq!(s.best.lambda2, 1e-6, "{:?}", s.table);
    }

    #[test]
    fn table_has_one_row_per_config() {
        let (m, ch) = problem();
        let grid = default_grid(&Hyperparams {
            epochs: 2,
            ..Default::default()
        });
        assert_eq!(select_hyperparams(&grid, &m, &ch, 0).unwrap().table.len(), 32);
    }

    #[test]
    fn ties_prefer_sparser_then_hinge_then_grid_order() {
        let base = Hyperparams::default();
        let grid = [
            Hyperparams { lambda1: 0.0, ..base },
            Hyperparams {
                lambda1: 0.1,
                loss: LossKind::Logistic,
                ..base
            },
            Hyperparams { lambda1: 0.1, ..base },
            Hyperparams {
                lambda1: 0.1,
                seed: 5,
                ..base
            },
        ];
        let s = select_with(&grid, |_| Ok(0.5)).unwrap();
        assert_eq!(s.best, grid[2]);
        let s = select_with(&grid[..2], |_| Ok(0.5)).unwrap();
        assert_eq!(s.best, grid[1]);
    }

    #[test]
    fn failures_do_not_abort_the_sweep() {
        let grid = [Hyperparams::default(), Hyperparams { lambda1: 1.0, ..Default::default() }];
        let s = select_with(&grid, |h| if h.lambda1 > 0.0 { Err(Error::Empty("x".into())) } else { Ok(0.1) }).unwrap();
        assert_eq!(s.best, grid[0]);
        assert!(s.table[1].outcome.is_err());
        assert!(select_with(&grid, |_| Err(Error::Empty("x".into()))).is_err());
        assert!(select_with(&[], |_| Ok(0.0)).is_err());
    }
}
