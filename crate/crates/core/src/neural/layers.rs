use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{uniform_fan_in, ParamId, ParamSet};
use super::tape::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

/// Affine layer `x W + b` with `W: [in, out]`, `b: [1, out]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let w = params.add(format!("{name}.weight"), uniform_fan_in(rng, in_dim, out_dim, gain));
        let b = params.add(format!("{name}.bias"), Tensor::zeros((1, out_dim)));
        Dense { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Var {
        let w = tape.param(params, self.w);
        let b = tape.param(params, self.b);
        let xw = tape.matmul(x, w);
        tape.add(xw, b)
    }

    pub fn forward_relu(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Var {
        let y = self.forward(tape, params, x);
        tape.relu(y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub global_dim: usize,
    pub zone_dim: usize,
    /// Widths of the two hidden layers of the per-zone network `f`.
    pub f_hidden: [usize; 2],
    /// Width of the single hidden layer of the aggregator `g`.
    pub g_hidden: usize,
}

impl EncoderConfig {
    pub fn new(global_dim: usize, zone_dim: usize, width: usize) -> Self {
        EncoderConfig {
            global_dim,
            zone_dim,
            f_hidden: [width, width],
            g_hidden: width,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.g_hidden
    }
}

/// A batch of set-structured observations. Zone rows are stored already
/// joined with their sample's global vector, i.e. `concat(x, z_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsBatch {
    pub global: Tensor,
    pub zone_input: Tensor,
    pub offsets: Rc<[usize]>,
    pub counts: Rc<[usize]>,
}

impl ObsBatch {
    pub fn new<'a, I>(samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], &'a [Vec<f64>])>,
    {
        let samples: Vec<_> = samples.into_iter().collect();
        let Some(&(g0, z0)) = samples.first() else {
            return Err(Error::Shape("empty observation batch".into()));
        };
        let gd = g0.len();
        let zd = z0.first().map(Vec::len).ok_or_else(|| Error::Shape("observation with no zones".into()))?;
        let total: usize = samples.iter().map(|(_, z)| z.len()).sum();
        let mut global = Vec::with_capacity(samples.len() * gd);
        let mut zone_input = Vec::with_capacity(total * (gd + zd));
        let mut offsets = Vec::with_capacity(samples.len() + 1);
        let mut counts = Vec::with_capacity(samples.len());
        offsets.push(0);
        for (g, zs) in &samples {
            if g.len() != gd {
                return Err(Error::Shape(format!("global dim {} != {gd}", g.len())));
            }
            if zs.is_empty() {
                return Err(Error::Shape("observation with no zones".into()));
            }
            global.extend_from_slice(g);
            for z in zs.iter() {
                if z.len() != zd {
                    return Err(Error::Shape(format!("zone dim {} != {zd}", z.len())));
                }
                zone_input.extend_from_slice(g);
                zone_input.extend_from_slice(z);
            }
            offsets.push(offsets.last().unwrap() + zs.len());
            counts.push(zs.len());
        }
        Ok(ObsBatch {
            global: Tensor::from_shape_vec((samples.len(), gd), global).expect("global shape"),
            zone_input: Tensor::from_shape_vec((total, gd + zd), zone_input).expect("zone shape"),
            offsets: offsets.into(),
            counts: counts.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.global.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn global_dim(&self) -> usize {
        self.global.ncols()
    }

    pub fn zone_dim(&self) -> usize {
        self.zone_input.ncols() - self.global.ncols()
    }

    /// Zone count when every sample has the same number of zones.
    pub fn uniform_zone_count(&self) -> Option<usize> {
        let first = *self.counts.first()?;
        self.counts.iter().all(|&c| c == first).then_some(first)
    }
}

/// Order-invariant encoder: per-zone network `f` over `concat(x, z_i)`,
/// mean pooling across zones, then aggregator `g` over `concat(pooled, x)`.
#[derive(Clone, Debug)]
pub struct SetEncoder {
    pub config: EncoderConfig,
    f: [Dense; 2],
    g: Dense,
}

pub struct EncoderOutput {
    /// `f` output per zone row, `[sum K, f_hidden[1]]`.
    pub zone_features: Var,
    /// Mean-pooled zone features, `[n, f_hidden[1]]`.
    pub pooled: Var,
    /// Encoder output, `[n, g_hidden]`.
    pub output: Var,
}

impl SetEncoder {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, config: EncoderConfig, rng: &mut R) -> Self {
        let input = config.global_dim + config.zone_dim;
        let f0 = Dense::new(params, &format!("{name}.f0"), input, config.f_hidden[0], RELU_GAIN, rng);
        let f1 = Dense::new(params, &format!("{name}.f1"), config.f_hidden[0], config.f_hidden[1], RELU_GAIN, rng);
        let g = Dense::new(
            params,
            &format!("{name}.g"),
            config.f_hidden[1] + config.global_dim,
            config.g_hidden,
            RELU_GAIN,
            rng,
        );
        SetEncoder { config, f: [f0, f1], g }
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, batch: &ObsBatch) -> Result<EncoderOutput> {
        if batch.global_dim() != self.config.global_dim || batch.zone_dim() != self.config.zone_dim {
            return Err(Error::Shape(format!(
                "encoder expects global {} / zone {}, batch has {} / {}",
                self.config.global_dim,
                self.config.zone_dim,
                batch.global_dim(),
                batch.zone_dim()
            )));
        }
        let zin = tape.constant(batch.zone_input.clone());
        let h = self.f[0].forward_relu(tape, params, zin);
        let zone_features = self.f[1].forward_relu(tape, params, h);
        let pooled = tape.segment_mean(zone_features, batch.offsets.clone());
        let x = tape.constant(batch.global.clone());
        let joined = tape.concat_cols(pooled, x);
        let output = self.g.forward_relu(tape, params, joined);
        Ok(EncoderOutput {
            zone_features,
            pooled,
            output,
        })
    }

    /// Encodes a single observation.
    pub fn encode(&self, params: &ParamSet, x: &[f64], zones: &[Vec<f64>]) -> Result<Vec<f64>> {
        let batch = ObsBatch::new([(x, zones)])?;
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, params, &batch)?;
        Ok(tape.value(out.output).iter().copied().collect())
    }
}
