//! Cross-granularity contrastive alignment.
//!
//! The sentence state `h_cls` is pulled towards the mean of its own table
//! cells (`h_pos`) and pushed away from the pooled tables of the other
//! sentences in the batch:
//!
//! ```text
//! L = mean_neg max(0, m + d(h_cls, h_pos) - d(h_cls, h_neg))
//! ```

use rand::RngCore;

use crate::error::{Error, Result};
use crate::nn;
use crate::table::RelationTable;
use crate::tensor::{ParamStore, Real, Tape, Var};

pub const PROJ_PATH: &str = "contrastive.proj";

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveConfig {
    pub margin: f64,
    pub enabled: bool,
    pub d_table: usize,
    pub d_model: usize,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            margin: 1.0,
            enabled: true,
            d_table: 64,
            d_model: 64,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        Ok(())
    }

    /// Whether pooled tables need an affine map into the encoder space.
    pub fn needs_projection(&self) -> bool {
        self.d_table != self.d_model
    }
}

pub fn init<T: Real>(cfg: &ContrastiveConfig, store: &mut ParamStore<T>, rng: &mut dyn RngCore) -> Result<()> {
    cfg.validate()?;
    if cfg.needs_projection() {
        nn::init_linear(store, PROJ_PATH, cfg.d_table, cfg.d_model, rng)?;
    }
    Ok(())
}

/// Mean over all `n²` cells, shape `[d_table]`.
pub fn pool_positive<T: Real>(tape: &mut Tape<T>, table: &RelationTable) -> Result<Var> {
    let flat = tape.reshape(table.values, &[table.n * table.n, table.d])?;
    tape.mean_rows(flat)
}

/// Maps a pooled table vector into the sentence-state space.
pub fn project<T: Real>(
    cfg: &ContrastiveConfig,
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    h: Var,
) -> Result<Var> {
    if cfg.needs_projection() {
        nn::linear(tape, store, PROJ_PATH, h)
    } else {
        Ok(h)
    }
}

/// Margin hinge averaged over `negatives`; zero when there are none.
pub fn contrastive_loss<T: Real>(
    tape: &mut Tape<T>,
    h_cls: Var,
    h_pos: Var,
    negatives: &[Var],
    margin: f64,
) -> Result<Var> {
    if negatives.is_empty() {
        return tape.constant(&[], vec![T::zero()]);
    }
    let d_pos = tape.distance(h_cls, h_pos)?;
    let mut total: Option<Var> = None;
    for &neg in negatives {
        let d_neg = tape.distance(h_cls, neg)?;
        let gap = tape.sub(d_pos, d_neg)?;
        let gap = tape.add_scalar(gap, T::of(margin));
        let hinge = tape.relu(gap);
        total = Some(match total {
            Some(t) => tape.add(t, hinge)?,
            None => hinge,
        });
    }
    let total = total.expect("non-empty negatives");
    Ok(tape.scale(total, T::of(1.0 / negatives.len() as f64)))
}

/// Every batch member except `index`, in batch order.
pub fn batch_negatives<V: Copy>(batch: &[V], index: usize) -> Result<Vec<V>> {
    if index >= batch.len() {
        return Err(Error::Domain(format!("index {index} outside batch of {}", batch.len())));
    }
    Ok(batch
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != index)
        .map(|(_, &v)| v)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loss(cls: &[f64], pos: &[f64], negs: &[&[f64]], m: f64) -> f64 {
        let mut t = Tape::new();
        let d = cls.len();
        let c = t.constant(&[d], cls.to_vec()).unwrap();
        let p = t.constant(&[d], pos.to_vec()).unwrap();
        let n: Vec<Var> = negs.iter().map(|v| t.constant(&[d], v.to_vec()).unwrap()).collect();
        let l = contrastive_loss(&mut t, c, p, &n, m).unwrap();
        t.scalar(l)
    }

    #[test]
    fn hand_computed_cases() {
        assert_eq!(loss(&[0.0, 0.0], &[3.0, 4.0], &[&[0.0, 1.0]], 1.0), 5.0);
        assert_eq!(loss(&[1.0, 1.0], &[1.0, 1.0], &[&[1.0, 3.0]], 1.0), 0.0);
        assert_eq!(loss(&[0.2, 0.7], &[1.5, -2.0], &[&[1.5, -2.0]], 1.0), 1.0);
        assert_eq!(loss(&[0.2, 0.7], &[1.5, -2.0], &[], 1.0), 0.0);
        // average of hinges 5 and 0
        assert_eq!(loss(&[0.0, 0.0], &[3.0, 4.0], &[&[0.0, 1.0], &[0.0, 9.0]], 1.0), 2.5);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut t = Tape::<f64>::new();
        let c = t.constant(&[2], vec![0.0; 2]).unwrap();
        let p = t.constant(&[3], vec![0.0; 3]).unwrap();
        assert!(matches!(contrastive_loss(&mut t, c, p, &[p], 1.0), Err(Error::Shape { .. })));
    }

    fn table(t: &mut Tape<f64>, n: usize, d: usize, data: Vec<f64>) -> RelationTable {
        RelationTable {
            values: t.constant(&[n, n, d], data).unwrap(),
            n,
            d,
        }
    }

    #[test]
    fn pooling_cases() {
        let mut t = Tape::new();
        let constant = table(&mut t, 3, 2, [0.5, -1.0].repeat(9));
        let p = pool_positive(&mut t, &constant).unwrap();
        assert_eq!(t.value(p), &[0.5, -1.0]);

        let single = table(&mut t, 1, 2, vec![4.0, 2.0]);
        let p = pool_positive(&mut t, &single).unwrap();
        assert_eq!(t.value(p), &[4.0, 2.0]);

        let x = Tensor::<f64>::uniform(&[3, 3, 2], 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        let random = table(&mut t, 3, 2, x.data().to_vec());
        let p = pool_positive(&mut t, &random).unwrap();
        for k in 0..2 {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += x.data()[(i * 3 + j) * 2 + k];
                }
            }
            assert!((t.value(p)[k] - acc / 9.0).abs() < 1e-6);
        }
    }

    #[test]
    fn negatives_are_set_difference() {
        assert!(batch_negatives(&[7], 0).unwrap().is_empty());
        assert_eq!(batch_negatives(&[10, 11, 12, 13], 2).unwrap(), vec![10, 11, 13]);
        assert!(batch_negatives(&[1, 2], 2).is_err());
        let batch: Vec<usize> = (0..5).collect();
        let mut counts = [0; 5];
        for i in 0..5 {
            for v in batch_negatives(&batch, i).unwrap() {
                counts[v] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c == 4));
    }

    #[test]
    fn projection_registered_only_when_dims_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::<f32>::new();
        init(&ContrastiveConfig::default(), &mut store, &mut rng).unwrap();
        assert!(store.is_empty());
        let cfg = ContrastiveConfig {
            d_table: 6,
            d_model: 4,
            ..ContrastiveConfig::default()
        };
        init(&cfg, &mut store, &mut rng).unwrap();
        assert_eq!(store.get("contrastive.proj.weight").unwrap().shape(), &[6, 4]);
        let bad = ContrastiveConfig {
            margin: 0.0,
            ..ContrastiveConfig::default()
        };
        assert!(init(&bad, &mut ParamStore::<f32>::new(), &mut rng).is_err());
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 3)
    }

    proptest! {
        #[test]
        fn loss_is_non_negative(c in vec3(), p in vec3(), n in vec3(), m in 0.01f64..3.0) {
            prop_assert!(loss(&c, &p, &[&n], m) >= 0.0);
        }

        #[test]
        fn rotation_invariant(c in vec3(), p in vec3(), n in vec3(), theta in 0.0f64..std::f64::consts::TAU) {
            let rot = |v: &[f64]| {
                let (s, co) = theta.sin_cos();
                vec![co * v[0] - s * v[1], s * v[0] + co * v[1], v[2]]
            };
            let a = loss(&c, &p, &[&n], 1.0);
            let b = loss(&rot(&c), &rot(&p), &[&rot(&n)], 1.0);
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
