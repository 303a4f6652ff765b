//! Skill classifiers for DIAYN and a detector for collapsed skills.

use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::neural::{
    categorical_log_prob, full_mask, ActorNet, ActorOut, EncoderConfig, HeadKind, MaskedCategorical, ParamSet, Tape,
};
use crate::ppo::{adam_step, batch_of, AdamState};
use crate::sim::Observation;

/// Set-encoder classifier predicting the active skill from an observation.
#[derive(Clone, Debug)]
pub struct SkillClassifier {
    pub params: ParamSet,
    pub net: ActorNet,
    pub adam: AdamState,
    pub skills: usize,
    pub lr: f64,
    pub minibatch_size: usize,
}

impl SkillClassifier {
    pub fn new<R: Rng + ?Sized>(encoder: EncoderConfig, width: usize, skills: usize, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let net = ActorNet::new(&mut params, "classifier", encoder, width, HeadKind::Categorical { n: skills }, rng);
        let adam = AdamState::new(&params);
        SkillClassifier {
            params,
            net,
            adam,
            skills,
            lr: 3e-4,
            minibatch_size: 1600,
        }
    }

    /// `log q(skill | obs)` per pair.
    pub fn log_probs(&self, obs: &[&Observation], skills: &[usize]) -> Result<Vec<f64>> {
        if obs.len() != skills.len() {
            return Err(Error::Shape("observations and skills differ in length".into()));
        }
        let batch = batch_of(obs.iter().copied())?;
        let mut tape = Tape::new();
        let ActorOut::Logits(l) = self.net.forward(&mut tape, &self.params, &batch)? else {
            unreachable!("categorical head");
        };
        let logits = tape.value(l);
        skills
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let c = MaskedCategorical::unmasked(&logits.row(i).to_vec())?;
                Ok(c.log_prob(z))
            })
            .collect()
    }

    /// Mean cross-entropy on the pairs at `idx`, on the tape.
    pub fn loss(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        obs: &[Observation],
        labels: &[usize],
        idx: &[usize],
    ) -> Result<crate::neural::Var> {
        let batch = batch_of(idx.iter().map(|&i| &obs[i]))?;
        let ActorOut::Logits(l) = self.net.forward(tape, params, &batch)? else {
            unreachable!("categorical head");
        };
        let acts: Rc<[usize]> = idx.iter().map(|&i| labels[i]).collect();
        let lp = categorical_log_prob(tape, l, full_mask(idx.len(), self.skills), acts);
        let m = tape.mean(lp);
        Ok(tape.neg(m))
    }
}

/// One epoch of shuffled minibatch cross-entropy descent. Returns the mean
/// minibatch loss.
pub fn diayn_classifier_update<R: Rng + ?Sized>(
    classifier: &mut SkillClassifier,
    obs: &[Observation],
    labels: &[usize],
    rng: &mut R,
) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::InvalidArgument("empty classifier batch".into()));
    }
    if obs.len() != labels.len() {
        return Err(Error::Shape("observations and labels differ in length".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&z| z >= classifier.skills) {
        return Err(Error::InvalidArgument(format!("skill label {bad} out of range")));
    }
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut count = 0;
    for chunk in order.chunks(classifier.minibatch_size) {
        let grads = {
            let mut tape = Tape::new();
            let l = classifier.loss(&mut tape, &classifier.params, obs, labels, chunk)?;
            total += tape.scalar(l);
            tape.backward(l, &classifier.params)
        };
        adam_step(&mut classifier.params, &grads, &mut classifier.adam, classifier.lr, Some(0.5))?;
        count += 1;
    }
    Ok(total / count as f64)
}

/// One-way ANOVA p-value for equal means across groups. Groups with fewer
/// than one sample are ignored; returns 1 when there is no between-group or
/// within-group variation to test.
pub fn anova_p_value(groups: &[Vec<f64>]) -> f64 {
    let groups: Vec<&Vec<f64>> = groups.iter().filter(|g| !g.is_empty()).collect();
    let k = groups.len();
    let n: usize = groups.iter().map(|g| g.len()).sum();
    if k < 2 || n <= k {
        return 1.0;
    }
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in &groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    if ssb == 0.0 {
        return 1.0;
    }
    if ssw == 0.0 {
        return 0.0;
    }
    let (d1, d2) = ((k - 1) as f64, (n - k) as f64);
    let f = (ssb / d1) / (ssw / d2);
    match FisherSnedecor::new(d1, d2) {
        Ok(dist) => 1.0 - dist.cdf(f),
        Err(_) => 1.0,
    }
}

/// True when per-skill segment rewards are statistically indistinguishable
/// at level `alpha`.
pub fn skills_collapsed(segments: &[(usize, f64)], skills: usize, alpha: f64) -> bool {
    let mut groups = vec![Vec::new(); skills];
    for &(z, r) in segments {
        if z < skills {
            groups[z].push(r);
        }
    }
    anova_p_value(&groups) >= alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random_obs(rng: &mut ChaCha8Rng) -> Observation {
        Observation {
            global: (0..7).map(|_| rng.random_range(-1.0..1.0)).collect(),
            zones: (0..4).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        }
    }

    #[test]
    fn overfits_a_single_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = SkillClassifier::new(EncoderConfig::new(7, 3, 16), 16, 5, &mut rng);
        c.lr = 1e-2;
        let o = random_obs(&mut rng);
        let obs = vec![o.clone(); 8];
        let labels = vec![3; 8];
        for _ in 0..300 {
            diayn_classifier_update(&mut c, &obs, &labels, &mut rng).unwrap();
        }
        let p = c.log_probs(&[&o], &[3]).unwrap()[0].exp();
        assert!(p > 0.99, "{p}");
    }

    #[test]
    fn random_labels_approach_uniform_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = SkillClassifier::new(EncoderConfig::new(7, 3, 16), 16, 5, &mut rng);
        c.lr = 3e-3;
        c.minibatch_size = 200;
        let obs: Vec<Observation> = (0..2000).map(|_| random_obs(&mut rng)).collect();
        let labels: Vec<usize> = (0..2000).map(|_| rng.random_range(0..5)).collect();
        let mut last = 0.0;
        for _ in 0..15 {
            last = diayn_classifier_update(&mut c, &obs, &labels, &mut rng).unwrap();
        }
        assert!((last - 5f64.ln()).abs() < 0.05, "{last}");
    }

    #[test]
    fn classifier_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut c = SkillClassifier::new(EncoderConfig::new(7, 3, 10), 10, 5, &mut rng);
        for v in c.params.values_mut() {
            v.mapv_inplace(|x| x + rng.random_range(-0.05..0.05));
        }
        let obs: Vec<Observation> = (0..20).map(|_| random_obs(&mut rng)).collect();
        let labels: Vec<usize> = (0..20).map(|_| rng.random_range(0..5)).collect();
        let idx: Vec<usize> = (0..20).collect();
        let r = grad_check(&c.params, 1e-5, 300, &mut rng, |t, p| c.loss(t, p, &obs, &labels, &idx)).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn bad_batches_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = SkillClassifier::new(EncoderConfig::new(7, 3, 8), 8, 5, &mut rng);
        assert!(diayn_classifier_update(&mut c, &[], &[], &mut rng).is_err());
        let o = random_obs(&mut rng);
        assert!(diayn_classifier_update(&mut c, &[o], &[5], &mut rng).is_err());
    }

    #[test]
    fn anova_detects_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let same: Vec<(usize, f64)> = (0..500).map(|i| (i % 5, noise.sample(&mut rng))).collect();
        assert!(skills_collapsed(&same, 5, 0.01));
        let shifted: Vec<(usize, f64)> = (0..500).map(|i| (i % 5, noise.sample(&mut rng) + (i % 5) as f64)).collect();
        assert!(!skills_collapsed(&shifted, 5, 0.01));
        assert_eq!(anova_p_value(&[vec![1.0, 1.0], vec![1.0, 1.0]]), 1.0);
        assert_eq!(anova_p_value(&[vec![1.0, 1.0], vec![2.0, 2.0]]), 0.0);
    }
}
