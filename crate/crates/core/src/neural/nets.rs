//! Actor and critic networks built on the set encoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Dense, EncoderConfig, ObsBatch, SetEncoder, RELU_GAIN};
use super::params::{ParamId, ParamSet};
use super::tape::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Gain of the final policy layer; keeps the initial policy close to uniform.
pub const POLICY_OUT_GAIN: f64 = 0.01;
/// Initial value of the state-independent log standard deviation.
pub const INIT_LOG_STD: f64 = -std::f64::consts::LN_2;
/// Lower bound added to the softplus standard deviation of the value head.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// Diagonal Gaussian over `dim` continuous actions.
    Gaussian { dim: usize },
    /// Diagonal Gaussian plus a two-way continue/stop categorical.
    GaussianStop { dim: usize },
    /// Fixed-size categorical.
    Categorical { n: usize },
    /// One score per zone, computed from that zone's encoding and the pooled
    /// encoder output.
    ZoneScores,
}

#[derive(Clone, Debug)]
enum Head {
    Gaussian { mean: Dense, log_std: ParamId },
    GaussianStop { mean: Dense, log_std: ParamId, stop: Dense },
    Categorical { logits: Dense },
    ZoneScores { hidden: Dense, out: Dense },
}

/// Raw actor outputs on a tape.
#[derive(Clone, Copy, Debug)]
pub enum ActorOut {
    Gaussian { mean: Var, log_std: Var },
    GaussianStop { mean: Var, log_std: Var, stop_logits: Var },
    Logits(Var),
}

#[derive(Clone, Debug)]
pub struct ActorNet {
    pub kind: HeadKind,
    encoder: SetEncoder,
    hidden: Dense,
    head: Head,
}

impl ActorNet {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        encoder: EncoderConfig,
        hidden_width: usize,
        kind: HeadKind,
        rng: &mut R,
    ) -> Self {
        let enc = SetEncoder::new(params, &format!("{name}.enc"), encoder, rng);
        let in_dim = enc.config.output_dim();
        let hidden = Dense::new(params, &format!("{name}.hidden"), in_dim, hidden_width, RELU_GAIN, rng);
        let log_std = |params: &mut ParamSet, dim: usize| {
            params.add(format!("{name}.log_std"), Tensor::from_elem((1, dim), INIT_LOG_STD))
        };
        let head = match kind {
            HeadKind::Gaussian { dim } => Head::Gaussian {
                mean: Dense::new(params, &format!("{name}.mean"), hidden_width, dim, POLICY_OUT_GAIN, rng),
                log_std: log_std(params, dim),
            },
            HeadKind::GaussianStop { dim } => Head::GaussianStop {
                mean: Dense::new(params, &format!("{name}.mean"), hidden_width, dim, POLICY_OUT_GAIN, rng),
                log_std: log_std(params, dim),
                stop: Dense::new(params, &format!("{name}.stop"), hidden_width, 2, POLICY_OUT_GAIN, rng),
            },
            HeadKind::Categorical { n } => Head::Categorical {
                logits: Dense::new(params, &format!("{name}.logits"), hidden_width, n, POLICY_OUT_GAIN, rng),
            },
            HeadKind::ZoneScores => {
                let zone_dim = enc.config.f_hidden[1];
                Head::ZoneScores {
                    hidden: Dense::new(
                        params,
                        &format!("{name}.score_hidden"),
                        zone_dim + hidden_width,
                        hidden_width,
                        RELU_GAIN,
                        rng,
                    ),
                    out: Dense::new(params, &format!("{name}.score"), hidden_width, 1, POLICY_OUT_GAIN, rng),
                }
            }
        };
        ActorNet {
            kind,
            encoder: enc,
            hidden,
            head,
        }
    }

    pub fn encoder(&self) -> &SetEncoder {
        &self.encoder
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, batch: &ObsBatch) -> Result<ActorOut> {
        let enc = self.encoder.forward(tape, params, batch)?;
        let h = self.hidden.forward_relu(tape, params, enc.output);
        Ok(match &self.head {
            Head::Gaussian { mean, log_std } => ActorOut::Gaussian {
                mean: mean.forward(tape, params, h),
                log_std: tape.param(params, *log_std),
            },
            Head::GaussianStop { mean, log_std, stop } => ActorOut::GaussianStop {
                mean: mean.forward(tape, params, h),
                log_std: tape.param(params, *log_std),
                stop_logits: stop.forward(tape, params, h),
            },
            Head::Categorical { logits } => ActorOut::Logits(logits.forward(tape, params, h)),
            Head::ZoneScores { hidden, out } => {
                let k = batch
                    .uniform_zone_count()
                    .ok_or_else(|| Error::Shape("zone scores need equal zone counts".into()))?;
                let context = tape.repeat_rows(h, batch.counts.clone());
                let joined = tape.concat_cols(enc.zone_features, context);
                let s = hidden.forward_relu(tape, params, joined);
                let scores = out.forward(tape, params, s);
                ActorOut::Logits(tape.reshape(scores, batch.len(), k))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    /// Scalar value estimate.
    Point,
    /// Gaussian over returns: mean and softplus standard deviation.
    Distribution,
}

#[derive(Clone, Copy, Debug)]
pub struct CriticOut {
    /// `[n, 1]`
    pub mean: Var,
    /// `[n, 1]`, strictly positive. Present for [`ValueKind::Distribution`].
    pub std: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct CriticNet {
    pub kind: ValueKind,
    encoder: SetEncoder,
    hidden: Dense,
    out: Dense,
}

impl CriticNet {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        encoder: EncoderConfig,
        hidden_width: usize,
        kind: ValueKind,
        rng: &mut R,
    ) -> Self {
        let enc = SetEncoder::new(params, &format!("{name}.enc"), encoder, rng);
        let hidden = Dense::new(params, &format!("{name}.hidden"), enc.config.output_dim(), hidden_width, RELU_GAIN, rng);
        let outputs = match kind {
            ValueKind::Point => 1,
            ValueKind::Distribution => 2,
        };
        let out = Dense::new(params, &format!("{name}.value"), hidden_width, outputs, 1.0, rng);
        CriticNet {
            kind,
            encoder: enc,
            hidden,
            out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, batch: &ObsBatch) -> Result<CriticOut> {
        let enc = self.encoder.forward(tape, params, batch)?;
        let h = self.hidden.forward_relu(tape, params, enc.output);
        let raw = self.out.forward(tape, params, h);
        Ok(match self.kind {
            ValueKind::Point => CriticOut { mean: raw, std: None },
            ValueKind::Distribution => {
                let mean = tape.slice_cols(raw, 0, 1);
                let pre = tape.slice_cols(raw, 1, 2);
                let sp = tape.softplus(pre);
                let std = tape.add_scalar(sp, SIGMA_FLOOR);
                CriticOut { mean, std: Some(std) }
            }
        })
    }

    /// Mean predictions as plain numbers.
    pub fn predict(&self, params: &ParamSet, batch: &ObsBatch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, params, batch)?;
        Ok(tape.value(out.mean).iter().copied().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(n: usize, k: usize, seed: u64) -> ObsBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..7).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let zs: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| (0..k).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
            .collect();
        ObsBatch::new(xs.iter().map(Vec::as_slice).zip(zs.iter().map(Vec::as_slice))).unwrap()
    }

    #[test]
    fn head_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = batch(4, 5, 1);
        for (kind, cols) in [
            (HeadKind::Gaussian { dim: 2 }, 2),
            (HeadKind::Categorical { n: 5 }, 5),
            (HeadKind::ZoneScores, 5),
        ] {
            let mut p = ParamSet::new();
            let net = ActorNet::new(&mut p, "a", EncoderConfig::new(7, 3, 16), 16, kind, &mut rng);
            let mut t = Tape::new();
            let out = net.forward(&mut t, &p, &b).unwrap();
            let v = match out {
                ActorOut::Gaussian { mean, .. } => mean,
                ActorOut::Logits(l) => l,
                ActorOut::GaussianStop { .. } => unreachable!(),
            };
            assert_eq!(t.value(v).dim(), (4, cols));
        }
    }

    #[test]
    fn distribution_sigma_strictly_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ParamSet::new();
        let net = CriticNet::new(&mut p, "c", EncoderConfig::new(7, 3, 8), 8, ValueKind::Distribution, &mut rng);
        // Push the raw sigma output far negative.
        let ids: Vec<_> = p.ids().filter(|&id| p.name(id) == "c.value.bias").collect();
        p.get_mut(ids[0])[[0, 1]] = -1e4;
        let b = batch(6, 3, 2);
        let mut t = Tape::new();
        let out = net.forward(&mut t, &p, &b).unwrap();
        assert!(t.value(out.std.unwrap()).iter().all(|&s| s > 0.0));
    }

    #[test]
    fn zone_scores_follow_zone_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamSet::new();
        let net = ActorNet::new(&mut p, "z", EncoderConfig::new(7, 3, 16), 16, HeadKind::ZoneScores, &mut rng);
        let b = batch(1, 6, 4);
        let mut t = Tape::new();
        let ActorOut::Logits(l) = net.forward(&mut t, &p, &b).unwrap() else { unreachable!() };
        let base: Vec<f64> = t.value(l).iter().copied().collect();

        // Swap zones 0 and 4 in the input: scores swap accordingly.
        let mut zi = b.zone_input.clone();
        let r0 = zi.row(0).to_owned();
        let r4 = zi.row(4).to_owned();
        zi.row_mut(0).assign(&r4);
        zi.row_mut(4).assign(&r0);
        let swapped = ObsBatch { zone_input: zi, ..b };
        let mut t = Tape::new();
        let ActorOut::Logits(l) = net.forward(&mut t, &p, &swapped).unwrap() else { unreachable!() };
        let s: Vec<f64> = t.value(l).iter().copied().collect();
        assert!((s[0] - base[4]).abs() < 1e-12 && (s[4] - base[0]).abs() < 1e-12);
        assert!((s[2] - base[2]).abs() < 1e-12);
    }
}
