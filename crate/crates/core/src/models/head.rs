use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LossKind, ModelError, Result};
use crate::datasets::Target;

/// `z = W x + b` with `W` stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradient of a loss with respect to a [`LinearHead`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Weights drawn from N(0, 0.02²), zero bias.
    pub fn init(inputs: usize, outputs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        let weights = (0..inputs * outputs)
            .map(|_| normal.sample(&mut rng))
            .collect();
        Self {
            weights,
            ..Self::zeros(inputs, outputs)
        }
    }

    pub fn from_parts(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != inputs * outputs {
            return Err(ModelError::DimensionMismatch {
                what: "head weights",
                expected: inputs * outputs,
                got: weights.len(),
            });
        }
        if bias.len() != outputs {
            return Err(ModelError::DimensionMismatch {
                what: "head bias",
                expected: outputs,
                got: bias.len(),
            });
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(ModelError::DimensionMismatch {
                what: "encoder output",
                expected: self.inputs,
                got: x.len(),
            });
        }
        Ok(self
            .weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect())
    }

    pub fn zero_grad(&self) -> HeadGrad {
        HeadGrad {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mean binary cross-entropy of sigmoid(`z`) against 0/1 targets `y`.
pub fn bce_with_logits(z: &[f64], y: &[f64]) -> f64 {
    let total: f64 = z
        .iter()
        .zip(y)
        .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
        .sum();
    total / z.len() as f64
}

/// Cross-entropy of softmax(`z`) against class `y`.
pub fn cross_entropy(z: &[f64], y: usize) -> f64 {
    log_sum_exp(z) - z[y]
}

/// Batch-mean loss and its gradient for one head over feature rows.
///
/// Binary cross-entropy averages over every (row, output) cell; cross-entropy
/// averages over rows.
pub fn loss_and_grad(
    head: &LinearHead,
    rows: &[&[f64]],
    targets: &[&Target],
    loss: LossKind,
) -> Result<(f64, HeadGrad)> {
    if rows.len() != targets.len() {
        return Err(ModelError::DimensionMismatch {
            what: "targets",
            expected: rows.len(),
            got: targets.len(),
        });
    }
    let mut grad = head.zero_grad();
    let mut total = 0.0;
    let scale = match loss {
        LossKind::BinaryCrossEntropy => 1.0 / (rows.len() * head.outputs) as f64,
        LossKind::CrossEntropy => 1.0 / rows.len() as f64,
    };
    for (x, t) in rows.iter().zip(targets) {
        let z = head.forward(x)?;
        let dz: Vec<f64> = match (loss, t) {
            (LossKind::BinaryCrossEntropy, Target::MultiHot(y)) => {
                check_len(y.len(), head.outputs)?;
                total += bce_with_logits(&z, y) * head.outputs as f64;
                z.iter().zip(y).map(|(&z, &y)| sigmoid(z) - y).collect()
            }
            (LossKind::CrossEntropy, Target::Index(y)) => {
                if *y >= head.outputs {
                    return Err(ModelError::DimensionMismatch {
                        what: "class index bound",
                        expected: head.outputs,
                        got: *y,
                    });
                }
                total += cross_entropy(&z, *y);
                let mut p = softmax(&z);
                p[*y] -= 1.0;
                p
            }
            (loss, _) => {
                return Err(ModelError::InvalidConfig(format!(
                    "{loss} does not match the target encoding"
                )))
            }
        };
        for (j, d) in dz.iter().enumerate() {
            let d = d * scale;
            grad.bias[j] += d;
            let row = &mut grad.weights[j * head.inputs..(j + 1) * head.inputs];
            for (g, v) in row.iter_mut().zip(x.iter()) {
                *g += d * v;
            }
        }
    }
    Ok((total * scale, grad))
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch {
            what: "target vector",
            expected,
            got,
        })
    }
}

/// Indices whose score reaches `tau` (inclusive).
pub fn predict_multilabel(scores: &[f64], tau: f64) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= tau)
        .map(|(j, _)| j)
        .collect()
}

/// Index of the largest score; ties go to the smallest index.
pub fn predict_singlelabel(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] || scores[best].is_nan() && !s.is_nan() {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_and_argmax_examples() {
        assert_eq!(predict_multilabel(&[0.7, 0.5, 0.49], 0.5), [0, 1]);
        assert!(predict_multilabel(&[0.1; 4], 0.5).is_empty());
        assert_eq!(predict_multilabel(&[0.9; 3], 0.5), [0, 1, 2]);
        assert_eq!(predict_singlelabel(&[0.1, 0.8, 0.1]), 1);
        assert_eq!(predict_singlelabel(&[0.5, 0.5]), 0);
        assert_eq!(predict_singlelabel(&[0.25; 4]), 0);
        assert_eq!(predict_singlelabel(&[f64::NAN, 0.1]), 1);
    }

    #[test]
    fn zero_head_scores_half() {
        let head = LinearHead::zeros(4, 15);
        let z = head.forward(&[0.3, -1.0, 2.0, 0.0]).unwrap();
        assert_eq!(z.len(), 15);
        assert!(z.iter().all(|&v| sigmoid(v) == 0.5));
        assert!(head.forward(&[0.0; 3]).is_err());
    }

    #[test]
    fn stable_losses() {
        assert!((bce_with_logits(&[0.0], &[1.0]) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_with_logits(&[800.0, -800.0], &[1.0, 0.0]).abs() < 1e-12);
        assert!((bce_with_logits(&[-800.0], &[1.0]) - 800.0).abs() < 1e-9);
        assert!((cross_entropy(&[1000.0, 0.0], 1) - 1000.0).abs() < 1e-9);
        assert!((cross_entropy(&[0.0, 0.0, 0.0], 2) - 3f64.ln()).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }

    #[test]
    fn mismatched_loss_target() {
        let head = LinearHead::zeros(2, 2);
        let t = Target::Index(0);
        assert!(loss_and_grad(&head, &[&[1.0, 0.0]], &[&t], LossKind::BinaryCrossEntropy).is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(z in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn raising_tau_never_adds_labels(
            scores in proptest::collection::vec(0.0f64..=1.0, 0..20),
            a in 0.01f64..0.99, b in 0.01f64..0.99,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = predict_multilabel(&scores, hi);
            let large = predict_multilabel(&scores, lo);
            prop_assert!(small.iter().all(|j| large.contains(j)));
        }

        #[test]
        fn argmax_invariant_under_monotone_maps(scores in proptest::collection::vec(-5.0f64..5.0, 1..20)) {
            let base = predict_singlelabel(&scores);
            let cubed: Vec<f64> = scores.iter().map(|s| s * s * s + 3.0 * s).collect();
            let squashed: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
            let soft = softmax(&scores);
            prop_assert_eq!(predict_singlelabel(&cubed), base);
            prop_assert_eq!(predict_singlelabel(&squashed), base);
            prop_assert_eq!(predict_singlelabel(&soft), base);
        }
    }
}
