//! Pairwise hinge training over preference triples.

use alloc::vec::Vec;

use crate::rng::Rng;
use crate::tensor::{Optimizer, OptimizerKind, Tape};

use super::{MatchError, Matcher};

/// One preference: the positive document outranks the negative one for the
/// query.
#[derive(Debug, Clone, Copy)]
pub struct Triple<'a> {
    pub query: &'a [u32],
    pub positive: &'a [u32],
    pub negative: &'a [u32],
}

#[derive(Debug, Clone)]
pub struct TrainHyper {
    pub epochs: usize,
    pub rate: f64,
    pub margin: f64,
    pub batch: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 10,
            rate: 0.01,
            margin: 1.0,
            batch: 16,
            seed: 42,
            optimizer: OptimizerKind::AdaptiveMoment,
        }
    }
}

/// Minimizes mean hinge loss `max(0, margin - s(q, d+) + s(q, d-))` over the
/// triples. Returns the per-epoch mean loss trace. Training order reshuffles
/// each epoch from `hyper.seed`; everything is deterministic given the seed.
///
/// Gradients of a batch are averaged; triples already beating the margin
/// contribute no gradient, and a batch with zero loss skips its optimizer
/// step entirely, so a fully-satisfied dataset leaves parameters untouched.
/// The OOV embedding row is pinned to zero by erasing its gradient.
pub fn train_pairwise<M: Matcher>(
    model: &mut M,
    triples: &[Triple<'_>],
    hyper: &TrainHyper,
) -> Result<Vec<f64>, MatchError> {
    assert!(hyper.batch >= 1, "batch must be at least 1");
    if triples.is_empty() {
        return Err(MatchError::NoPairs);
    }
    let mut optimizer = Optimizer::new(hyper.optimizer, hyper.rate);
    let mut rng = Rng::from_seed(hyper.seed);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut trace = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hyper.batch) {
            model.store_mut().zero_grads();
            let scale = 1.0 / chunk.len() as f64;
            let mut any_gradient = false;
            for &i in chunk {
                let t = &triples[i];
                let (loss_value, grads) = {
                    let mut tape = Tape::new(model.store());
                    let pos = model.build_score(&mut tape, t.query, t.positive)?;
                    let neg = model.build_score(&mut tape, t.query, t.negative)?;
                    let loss = tape.hinge(pos, neg, hyper.margin)?;
                    let value = tape.scalar_value(loss);
                    if value > 0.0 {
                        (value, Some(tape.backward(loss, scale)?))
                    } else {
                        (value, None)
                    }
                };
                if !loss_value.is_finite() {
                    return Err(MatchError::NonFiniteLoss { epoch });
                }
                epoch_loss += loss_value;
                if let Some(g) = grads {
                    model.store_mut().accumulate(&g);
                    any_gradient = true;
                }
            }
            if any_gradient {
                let embed = model.embedding_param();
                let dim = model.store().value(embed).shape()[1];
                for g in &mut model.store_mut().grad_mut(embed).data_mut()[..dim] {
                    *g = 0.0;
                }
                optimizer.step(model.store_mut())?;
            }
        }
        if !epoch_loss.is_finite() {
            return Err(MatchError::NonFiniteLoss { epoch });
        }
        trace.push(epoch_loss / triples.len() as f64);
    }
    if !model.store().values_finite() {
        return Err(MatchError::NonFiniteLoss { epoch: hyper.epochs });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matchers::{IntConfig, IntModel, SimilarityKind};
    use crate::tensor::OptimizerKind;

    fn tiny_model(seed: u64) -> IntModel {
        let mut rng = Rng::from_seed(seed);
        let config = IntConfig {
            embed_dim: 6,
            channels: 2,
            kernel: 3,
            grid: (2, 3),
            hidden: 4,
            similarity: SimilarityKind::Cosine,
            row_pooling: false,
            max_doc_len: 32,
        };
        IntModel::new(20, config, &mut rng)
    }

    #[test]
    fn satisfied_margin_means_zero_loss_and_frozen_params() {
        let mut model = tiny_model(1);
        // Margin 0 with identical positive and negative: hinge is
        // max(0, 0 - s + s) = 0 for every triple.
        let q = [1u32, 2, 3];
        let d = [4u32, 5, 6, 7];
        let triples = [Triple { query: &q, positive: &d, negative: &d }];
        let before: Vec<f64> = model
            .store()
            .iter()
            .flat_map(|(_, p)| p.value.data().to_vec())
            .collect();
        let trace = train_pairwise(
            &mut model,
            &triples,
            &TrainHyper {
                epochs: 3,
                rate: 0.1,
                margin: 0.0,
                batch: 1,
                seed: 7,
                optimizer: OptimizerKind::PlainSgd,
            },
        )
        .unwrap();
        assert_eq!(trace, alloc::vec![0.0, 0.0, 0.0]);
        let after: Vec<f64> = model
            .store()
            .iter()
            .flat_map(|(_, p)| p.value.data().to_vec())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn same_seed_gives_bitwise_identical_loss_trace() {
        let q = [1u32, 2];
        let pos = [1u32, 2, 5, 6, 1, 2, 9, 10];
        let neg = [7u32, 8, 9, 10, 11, 12, 13, 14];
        let triples = [
            Triple { query: &q, positive: &pos, negative: &neg },
            Triple { query: &q, positive: &pos, negative: &neg },
            Triple { query: &q, positive: &pos, negative: &neg },
        ];
        let hyper = TrainHyper { epochs: 4, rate: 0.05, batch: 2, seed: 11, ..TrainHyper::default() };
        let mut m1 = tiny_model(2);
        let mut m2 = tiny_model(2);
        let t1 = train_pairwise(&mut m1, &triples, &hyper).unwrap();
        let t2 = train_pairwise(&mut m2, &triples, &hyper).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn empty_triples_is_an_error() {
        let mut model = tiny_model(3);
        let err = train_pairwise(&mut model, &[], &TrainHyper::default()).unwrap_err();
        assert!(matches!(err, MatchError::NoPairs));
    }

    #[test]
    fn oov_embedding_row_stays_zero_through_training() {
        let mut model = tiny_model(4);
        let q = [1u32, 2];
        let pos = [1u32, 2, 0, 6, 1, 2];
        let neg = [7u32, 8, 0, 10, 11, 12];
        let triples = [Triple { query: &q, positive: &pos, negative: &neg }];
        train_pairwise(
            &mut model,
            &triples,
            &TrainHyper { epochs: 5, ..TrainHyper::default() },
        )
        .unwrap();
        let table = model.embedding_table();
        assert!(table.row(0).iter().all(|&v| v == 0.0));
    }
}
