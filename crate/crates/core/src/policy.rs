//! The per-domain policy: a linear scoring kernel shared across feature
//! rows followed by a masked softmax, trained with stacked log-probability
//! gradients.
//!
//! The input / convolution / softmax / output layering reduces to
//! `score_k = omega . v_k + bias` and `p_k = exp(score_k) / sum_j exp(score_j)`
//! over the masked-in rows; that is what [`forward`] computes.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::ParseError;
use crate::features::FeatureMatrix;
use crate::substrate::{content_lines, NodeId};

pub const FEATURES: usize = 4;
pub const DEFAULT_ALPHA: f64 = 0.005;
/// Initial weights are drawn from `U[-INIT_SCALE, INIT_SCALE]`.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("every row is masked out")]
    NoCandidates,
    #[error("mask has {mask} entries but the matrix has {rows} rows")]
    MaskLength { mask: usize, rows: usize },
    #[error("row {0} is masked out")]
    MaskedOut(usize),
    #[error("non-finite parameter update: omega {omega:?} reward {reward} gradient {gradient:?}")]
    NonFinite {
        omega: [f64; FEATURES],
        reward: f64,
        gradient: [f64; FEATURES],
    },
    #[error("learning rate must be positive and finite, got {0}")]
    BadAlpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyParameters {
    pub omega: [f64; FEATURES],
    pub bias: f64,
    pub alpha: f64,
}

impl PolicyParameters {
    /// Weights uniform in `[-0.1, 0.1]`, zero bias.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> Self {
        let mut omega = [0.0; FEATURES];
        for w in &mut omega {
            *w = rng.random_range(-INIT_SCALE..=INIT_SCALE);
        }
        Self {
            omega,
            bias: 0.0,
            alpha,
        }
    }

    pub fn score(&self, features: &[f64; FEATURES]) -> f64 {
        dot(&self.omega, features) + self.bias
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().all(|w| w.is_finite()) && self.bias.is_finite() && self.alpha.is_finite()
    }
}

fn dot(a: &[f64; FEATURES], b: &[f64; FEATURES]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax over the masked-in rows of a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDistribution {
    pub node_order: Vec<NodeId>,
    pub probabilities: Vec<f64>,
    /// Matrix row of each entry of `node_order`.
    pub rows: Vec<usize>,
}

impl NodeDistribution {
    pub fn probability_of(&self, node: NodeId) -> f64 {
        self.node_order
            .iter()
            .position(|&n| n == node)
            .map_or(0.0, |i| self.probabilities[i])
    }
}

pub fn forward(
    params: &PolicyParameters,
    fm: &FeatureMatrix,
    mask: &[bool],
) -> Result<NodeDistribution, PolicyError> {
    if mask.len() != fm.len() {
        return Err(PolicyError::MaskLength {
            mask: mask.len(),
            rows: fm.len(),
        });
    }
    let rows: Vec<usize> = (0..fm.len()).filter(|&r| mask[r]).collect();
    if rows.is_empty() {
        return Err(PolicyError::NoCandidates);
    }
    let scores: Vec<f64> = rows
        .iter()
        .map(|&r| params.score(&fm.rows[r].as_array()))
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(NodeDistribution {
        node_order: rows.iter().map(|&r| fm.node_order[r]).collect(),
        probabilities: exps.iter().map(|e| e / total).collect(),
        rows,
    })
}

/// Draws a node proportionally to its probability.
pub fn sample_node<R: Rng + ?Sized>(dist: &NodeDistribution, rng: &mut R) -> NodeId {
    let mut u: f64 = rng.random();
    for (node, p) in dist.node_order.iter().zip(&dist.probabilities) {
        if u < *p {
            return *node;
        }
        u -= p;
    }
    // Rounding left u just above the cumulative sum.
    *dist.node_order.last().expect("distribution is never empty")
}

/// Highest-probability node; ties go to the smallest node id.
pub fn argmax_node(dist: &NodeDistribution) -> NodeId {
    let mut best = 0;
    for i in 1..dist.node_order.len() {
        let (p, bp) = (dist.probabilities[i], dist.probabilities[best]);
        if p > bp || (p == bp && dist.node_order[i] < dist.node_order[best]) {
            best = i;
        }
    }
    dist.node_order[best]
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogProbGradient {
    pub d_omega: [f64; FEATURES],
    pub d_bias: f64,
}

/// Gradient of `log p(chosen_row)` with respect to the parameters:
/// `v_chosen - sum_j p_j v_j` for omega and zero for the bias, which
/// cancels in the softmax.
pub fn log_prob_gradient(
    params: &PolicyParameters,
    fm: &FeatureMatrix,
    mask: &[bool],
    chosen_row: usize,
) -> Result<LogProbGradient, PolicyError> {
    if !mask.get(chosen_row).copied().unwrap_or(false) {
        return Err(PolicyError::MaskedOut(chosen_row));
    }
    let dist = forward(params, fm, mask)?;
    Ok(gradient_from(&dist, fm, chosen_row))
}

/// [`log_prob_gradient`] for a distribution already computed by [`forward`].
pub fn gradient_from(dist: &NodeDistribution, fm: &FeatureMatrix, chosen_row: usize) -> LogProbGradient {
    let mut d_omega = fm.rows[chosen_row].as_array();
    for (&row, &p) in dist.rows.iter().zip(&dist.probabilities) {
        let v = fm.rows[row].as_array();
        for (g, x) in d_omega.iter_mut().zip(v) {
            *g -= p * x;
        }
    }
    LogProbGradient {
        d_omega,
        d_bias: 0.0,
    }
}

/// Stacked gradients awaiting a batch update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradientAccumulator {
    pub d_omega: [f64; FEATURES],
    pub d_bias: f64,
    pub sample_count: usize,
}

impl GradientAccumulator {
    pub fn add(&mut self, grad: &LogProbGradient) {
        self.add_scaled(grad, 1.0);
    }

    pub fn add_scaled(&mut self, grad: &LogProbGradient, weight: f64) {
        for (acc, g) in self.d_omega.iter_mut().zip(grad.d_omega) {
            *acc += weight * g;
        }
        self.d_bias += weight * grad.d_bias;
        self.sample_count += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.sample_count == 0
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// `omega += alpha * reward * acc.d_omega`, then clears the accumulator.
/// On a non-finite result nothing changes.
pub fn apply_update(
    params: &mut PolicyParameters,
    acc: &mut GradientAccumulator,
    reward: f64,
) -> Result<(), PolicyError> {
    let scale = params.alpha * reward;
    let mut omega = params.omega;
    for (w, g) in omega.iter_mut().zip(acc.d_omega) {
        *w += scale * g;
    }
    let bias = params.bias + scale * acc.d_bias;
    if !(omega.iter().all(|w| w.is_finite()) && bias.is_finite()) {
        return Err(PolicyError::NonFinite {
            omega: params.omega,
            reward,
            gradient: acc.d_omega,
        });
    }
    params.omega = omega;
    params.bias = bias;
    acc.reset();
    Ok(())
}

/// Writes one `AGENT` section per edge domain, every float with 17
/// significant digits.
pub fn save_params<W: Write>(agents: &[(u32, PolicyParameters)], sink: &mut W) -> std::io::Result<()> {
    for (domain, p) in agents {
        writeln!(sink, "AGENT {domain}")?;
        write_section(p, sink)?;
    }
    Ok(())
}

pub(crate) fn write_section<W: Write>(p: &PolicyParameters, sink: &mut W) -> std::io::Result<()> {
    writeln!(
        sink,
        "OMEGA {:.16e} {:.16e} {:.16e} {:.16e}",
        p.omega[0], p.omega[1], p.omega[2], p.omega[3]
    )?;
    writeln!(sink, "BIAS {:.16e}", p.bias)?;
    writeln!(sink, "ALPHA {:.16e}", p.alpha)
}

pub fn load_params<R: BufRead>(source: R) -> Result<Vec<(u32, PolicyParameters)>, ParseError> {
    let lines = content_lines(source)?;
    let mut iter = lines.iter();
    let mut agents = Vec::new();
    while let Some((line, text)) = iter.next() {
        let domain = match text.split_whitespace().collect::<Vec<_>>()[..] {
            ["AGENT", id] => id
                .parse::<u32>()
                .map_err(|_| ParseError::new(*line, format!("invalid agent id `{id}`")))?,
            _ => return Err(ParseError::new(*line, "expected `AGENT <domain_id>`")),
        };
        if agents.iter().any(|(d, _)| *d == domain) {
            return Err(ParseError::new(*line, format!("duplicate agent {domain}")));
        }
        let params = read_section(&mut iter, *line)?;
        agents.push((domain, params));
    }
    Ok(agents)
}

pub(crate) fn read_section<'a, I>(iter: &mut I, header_line: usize) -> Result<PolicyParameters, ParseError>
where
    I: Iterator<Item = &'a (usize, String)>,
{
    let mut next = |keyword: &str, arity: usize| -> Result<Vec<f64>, ParseError> {
        let (line, text) = iter
            .next()
            .ok_or_else(|| ParseError::new(header_line, format!("missing {keyword} line")))?;
        let mut parts = text.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(ParseError::new(*line, format!("expected {keyword}")));
        }
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ParseError::new(*line, format!("invalid number `{p}`")))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != arity {
            return Err(ParseError::new(
                *line,
                format!("{keyword} expects {arity} values, found {}", values.len()),
            ));
        }
        Ok(values)
    };
    let omega = next("OMEGA", FEATURES)?;
    let bias = next("BIAS", 1)?[0];
    let alpha = next("ALPHA", 1)?[0];
    if alpha <= 0.0 {
        return Err(ParseError::new(header_line, "ALPHA must be positive"));
    }
    Ok(PolicyParameters {
        omega: [omega[0], omega[1], omega[2], omega[3]],
        bias,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: &[[f64; 4]]) -> FeatureMatrix {
        FeatureMatrix {
            rows: rows.iter().map(|r| FeatureVector::from_array(*r)).collect(),
            node_order: (0..rows.len()).collect(),
            normalized: false,
        }
    }

    fn params(omega: [f64; 4]) -> PolicyParameters {
        PolicyParameters {
            omega,
            bias: 0.0,
            alpha: DEFAULT_ALPHA,
        }
    }

    #[test]
    fn equal_rows_are_uniform() {
        let fm = matrix(&[[1.0, 2.0, 3.0, 4.0]; 2]);
        let d = forward(&params([0.3, -0.2, 0.1, 0.05]), &fm, &[true, true]).unwrap();
        assert_eq!(d.probabilities, vec![0.5, 0.5]);
    }

    #[test]
    fn closed_form_two_thirds() {
        let fm = matrix(&[[2f64.ln(), 0.0, 0.0, 0.0], [0.0; 4]]);
        let d = forward(&params([1.0, 0.0, 0.0, 0.0]), &fm, &[true, true]).unwrap();
        assert!((d.probabilities[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.probabilities[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mask_renormalizes() {
        let fm = matrix(&[[1.0, 0.0, 0.0, 0.0], [5.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0]]);
        let d = forward(&params([1.0, 0.0, 0.0, 0.0]), &fm, &[true, false, true]).unwrap();
        assert_eq!(d.node_order, vec![0, 2]);
        assert!((d.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(d.probability_of(1), 0.0);
        assert_eq!(
            forward(&params([0.0; 4]), &fm, &[false; 3]),
            Err(PolicyError::NoCandidates)
        );
        assert!(matches!(
            forward(&params([0.0; 4]), &fm, &[true]),
            Err(PolicyError::MaskLength { .. })
        ));
    }

    #[test]
    fn large_scores_do_not_overflow() {
        let fm = matrix(&[[1000.0, 0.0, 0.0, 0.0], [999.0, 0.0, 0.0, 0.0]]);
        let d = forward(&params([1.0, 0.0, 0.0, 0.0]), &fm, &[true, true]).unwrap();
        assert!(d.probabilities.iter().all(|p| p.is_finite()));
        assert!((d.probabilities[0] - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn selection_modes() {
        let one = NodeDistribution {
            node_order: vec![7],
            probabilities: vec![1.0],
            rows: vec![0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_node(&one, &mut rng), 7);
        assert_eq!(argmax_node(&one), 7);

        let d = NodeDistribution {
            node_order: vec![3, 4, 5],
            probabilities: vec![0.2, 0.5, 0.3],
            rows: vec![0, 1, 2],
        };
        assert_eq!(argmax_node(&d), 4);
        let tie = NodeDistribution {
            node_order: vec![3, 4],
            probabilities: vec![0.5, 0.5],
            rows: vec![0, 1],
        };
        assert_eq!(argmax_node(&tie), 3);
    }

    #[test]
    fn sampling_frequencies_are_binomial() {
        // Binomial(10^4, 0.5): sd = 50, so 3 sd = 150 and 5000 +- 300 is generous.
        let d = NodeDistribution {
            node_order: vec![0, 1],
            probabilities: vec![0.5, 0.5],
            rows: vec![0, 1],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let zeros = (0..10_000).filter(|_| sample_node(&d, &mut rng) == 0).count();
        assert!((4700..=5300).contains(&zeros), "{zeros}");
    }

    #[test]
    fn gradient_closed_forms() {
        let fm = matrix(&[[1.0, 2.0, 3.0, 4.0]]);
        let g = log_prob_gradient(&params([0.5; 4]), &fm, &[true], 0).unwrap();
        assert_eq!(g.d_omega, [0.0; 4]);

        let v1 = [1.0, 2.0, 0.0, 4.0];
        let v2 = [3.0, 0.0, 2.0, 2.0];
        // Zero weights give p = (0.5, 0.5).
        let fm = matrix(&[v1, v2]);
        let g = log_prob_gradient(&params([0.0; 4]), &fm, &[true, true], 0).unwrap();
        for k in 0..4 {
            assert!((g.d_omega[k] - (v1[k] - v2[k]) / 2.0).abs() < 1e-15);
        }
        assert_eq!(g.d_bias, 0.0);
        assert_eq!(
            log_prob_gradient(&params([0.0; 4]), &fm, &[true, false], 1),
            Err(PolicyError::MaskedOut(1))
        );
    }

    #[test]
    fn apply_update_arithmetic() {
        let mut p = params([0.0; 4]);
        let mut acc = GradientAccumulator::default();
        acc.add(&LogProbGradient {
            d_omega: [1.0, 0.0, 0.0, 0.0],
            d_bias: 0.0,
        });
        let before = p;
        apply_update(&mut p, &mut acc.clone(), 0.0).unwrap();
        assert_eq!(p, before);
        apply_update(&mut p, &mut acc, 2.0).unwrap();
        assert!((p.omega[0] - 0.01).abs() < 1e-15);
        assert!(acc.is_empty());
    }

    #[test]
    fn split_batches_equal_one_batch() {
        let grads = [
            LogProbGradient {
                d_omega: [0.5, -1.0, 0.25, 2.0],
                d_bias: 0.0,
            },
            LogProbGradient {
                d_omega: [-0.125, 0.5, 1.0, -0.75],
                d_bias: 0.0,
            },
        ];
        let mut whole = params([0.1, 0.2, 0.3, 0.4]);
        let mut split = whole;
        let mut acc = GradientAccumulator::default();
        grads.iter().for_each(|g| acc.add(g));
        apply_update(&mut whole, &mut acc, 3.0).unwrap();
        for g in &grads {
            let mut acc = GradientAccumulator::default();
            acc.add(g);
            apply_update(&mut split, &mut acc, 3.0).unwrap();
        }
        for k in 0..4 {
            assert!((whole.omega[k] - split.omega[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_update_is_rejected() {
        let mut p = params([0.0; 4]);
        let mut acc = GradientAccumulator::default();
        acc.add(&LogProbGradient {
            d_omega: [f64::MAX, 0.0, 0.0, 0.0],
            d_bias: 0.0,
        });
        let before = p;
        let err = apply_update(&mut p, &mut acc, f64::MAX).unwrap_err();
        assert!(matches!(err, PolicyError::NonFinite { .. }));
        assert_eq!(p, before);
        assert!(!acc.is_empty());
    }

    #[test]
    fn params_round_trip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let agents: Vec<_> = (0..3)
            .map(|d| {
                let mut p = PolicyParameters::random(&mut rng, 0.005);
                p.bias = rng.random::<f64>() * 1e-7;
                (d, p)
            })
            .collect();
        let mut buf = Vec::new();
        save_params(&agents, &mut buf).unwrap();
        let back = load_params(buf.as_slice()).unwrap();
        for ((d1, p1), (d2, p2)) in agents.iter().zip(&back) {
            assert_eq!(d1, d2);
            for k in 0..4 {
                assert_eq!(p1.omega[k].to_bits(), p2.omega[k].to_bits());
            }
            assert_eq!(p1.alpha.to_bits(), p2.alpha.to_bits());
            assert_eq!(p1.bias.to_bits(), p2.bias.to_bits());
        }
    }

    #[test]
    fn fresh_init_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = PolicyParameters::random(&mut rng, DEFAULT_ALPHA);
            assert!(p.omega.iter().all(|w| w.abs() <= INIT_SCALE));
            assert_eq!((p.bias, p.alpha), (0.0, DEFAULT_ALPHA));
        }
    }

    #[test]
    fn load_errors() {
        let err = load_params("AGENT 0\nOMEGA 1 2 3\nBIAS 0\nALPHA 0.1\n".as_bytes()).unwrap_err();
        assert!(err.message.contains("expects 4 values"), "{err}");
        assert_eq!(err.line, 2);
        assert!(load_params("OMEGA 1 2 3 4\n".as_bytes()).is_err());
        assert!(load_params("AGENT 0\nOMEGA 1 2 3 4\nBIAS 0\n".as_bytes()).is_err());
        assert!(load_params("AGENT 0\nOMEGA 1 2 3 4\nBIAS 0\nALPHA 0\n".as_bytes()).is_err());
    }

    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest, Strategy};

    fn instance() -> impl Strategy<Value = (Vec<[f64; 4]>, Vec<bool>, [f64; 4], f64)> {
        (1usize..=10).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::array::uniform4(0.0f64..=1.0), n),
                prop::collection::vec(any::<bool>(), n),
                prop::array::uniform4(-5.0f64..=5.0),
                -100.0f64..=100.0,
            )
        })
    }

    proptest! {
        #[test]
        fn softmax_invariants((rows, mut mask, omega, shift) in instance()) {
            mask[0] = true;
            let fm = matrix(&rows);
            let p = params(omega);
            let d = forward(&p, &fm, &mask).unwrap();
            prop_assert!((d.probabilities.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(d.rows.iter().all(|&r| mask[r]));
            prop_assert!(d.probabilities.iter().all(|&x| x > 0.0));

            let shifted = forward(&PolicyParameters { bias: shift, ..p }, &fm, &mask).unwrap();
            for (a, b) in d.probabilities.iter().zip(&shifted.probabilities) {
                prop_assert!((a - b).abs() <= 1e-12);
            }

            let mut expected = [0.0; 4];
            for (i, &row) in d.rows.iter().enumerate() {
                let g = gradient_from(&d, &fm, row);
                prop_assert_eq!(g.d_bias, 0.0);
                for k in 0..4 {
                    expected[k] += d.probabilities[i] * g.d_omega[k];
                }
            }
            prop_assert!(expected.iter().all(|x| x.abs() <= 1e-9));
        }
    }
}
