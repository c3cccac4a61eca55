//! Synthetic regions, features and interactions with planted structure.
//!
//! Each region gets a positive latent factor vector. Its features are noisy
//! functions of those factors and each catalog item prefers one factor, so
//! regions with similar features tend to adopt similar items.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::analysis::{PatternCategory, PatternTaxonomy};
use crate::error::{Error, Result};
use crate::ingest::{FeatureRecord, FeatureSchema, FeatureValue, ValueKind};
use crate::interactions::{InteractionMatrix, Vocab};
use crate::model::softmax_in_place;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_regions: usize,
    pub num_items: usize,
    pub num_latent_factors: usize,
    /// Mean interactions per region.
    pub interactions_per_region: f64,
    /// Probability that a draw ignores the planted preferences.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_regions: 2596,
            num_items: 94,
            num_latent_factors: 6,
            interactions_per_region: 3.0,
            noise_rate: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_regions == 0 || self.num_items == 0 || self.num_latent_factors == 0 {
            return Err(Error::Config("region, item and factor counts must be positive".into()));
        }
        if !(self.interactions_per_region >= 1.0 && self.interactions_per_region.is_finite()) {
            return Err(Error::Config(format!(
                "interactions per region must be at least 1, got {}",
                self.interactions_per_region
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!("noise rate {} outside [0, 1]", self.noise_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub records: Vec<FeatureRecord>,
    pub interactions: InteractionMatrix,
    pub users: Vocab,
    pub items: Vocab,
    pub taxonomy: PatternTaxonomy,
    /// Latent factor vector of each region.
    pub factors: Vec<Vec<f64>>,
    /// Preferred factor of each item.
    pub item_factor: Vec<usize>,
}

const FACTOR_SHARPNESS: f64 = 2.0;
const PREFERENCE_SCALE: f64 = 8.0;
const CONTINUOUS_NOISE: f64 = 0.3;
const LABEL_NOISE: f64 = 0.35;

pub fn region_name(u: usize) -> String {
    format!("R{u:04}")
}

pub fn item_name(i: usize) -> String {
    format!("P{i:03}")
}

/// Generates a dataset over the standard 29-feature schema.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    generate_with_schema(cfg, &FeatureSchema::standard())
}

pub fn generate_with_schema(cfg: &SynthConfig, schema: &FeatureSchema) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let nf = cfg.num_latent_factors;

    let factors: Vec<Vec<f64>> = (0..cfg.num_regions)
        .map(|_| {
            let mut z: Vec<f64> = (0..nf).map(|_| FACTOR_SHARPNESS * normal.sample(&mut rng)).collect();
            softmax_in_place(&mut z);
            z
        })
        .collect();

    let item_factor: Vec<usize> = (0..cfg.num_items).map(|i| i % nf).collect();
    let strength: Vec<f64> = (0..cfg.num_items).map(|_| rng.random_range(0.5..1.5)).collect();

    let records = features(&factors, schema, &mut rng);

    let mut interactions = InteractionMatrix::new(cfg.num_regions, cfg.num_items);
    let extra = (cfg.interactions_per_region > 1.0)
        .then(|| Poisson::new(cfg.interactions_per_region - 1.0).expect("positive rate"));
    for (u, f) in factors.iter().enumerate() {
        let n = 1 + extra.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        let n = n.min(cfg.num_items);
        let mut weights: Vec<f64> = (0..cfg.num_items)
            .map(|i| PREFERENCE_SCALE * f[item_factor[i]] * strength[i])
            .collect();
        softmax_in_place(&mut weights);
        let mut taken = vec![false; cfg.num_items];
        for _ in 0..n {
            let i = if rng.random_bool(cfg.noise_rate) {
                let free = taken.iter().filter(|t| !**t).count();
                let k = rng.random_range(0..free);
                (0..cfg.num_items).filter(|&i| !taken[i]).nth(k).expect("free item")
            } else {
                let total: f64 = (0..cfg.num_items).filter(|&i| !taken[i]).map(|i| weights[i]).sum();
                let mut x = rng.random_range(0.0..total);
                let mut pick = None;
                for i in (0..cfg.num_items).filter(|&i| !taken[i]) {
                    pick = Some(i);
                    if x < weights[i] {
                        break;
                    }
                    x -= weights[i];
                }
                pick.expect("free item")
            };
            taken[i] = true;
            interactions.insert(u, i)?;
        }
    }

    let users = Vocab::from_names((0..cfg.num_regions).map(region_name))?;
    let items = Vocab::from_names((0..cfg.num_items).map(item_name))?;
    let mut taxonomy = PatternTaxonomy::new();
    for i in 0..cfg.num_items {
        taxonomy.insert(item_name(i), PatternCategory::ALL[i % PatternCategory::ALL.len()])?;
    }
    Ok(SyntheticData {
        records,
        interactions,
        users,
        items,
        taxonomy,
        factors,
        item_factor,
    })
}

fn features(factors: &[Vec<f64>], schema: &FeatureSchema, rng: &mut ChaCha8Rng) -> Vec<FeatureRecord> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let nf = factors.first().map_or(1, Vec::len);
    struct Plan {
        mix: Vec<f64>,
        offset: f64,
        scale: f64,
        labels: usize,
        label_of_factor: Vec<usize>,
        prefix: String,
    }
    let plans: Vec<Plan> = schema
        .features()
        .iter()
        .map(|f| {
            let labels = rng.random_range(3..=8);
            Plan {
                mix: (0..nf).map(|_| normal.sample(rng)).collect(),
                offset: rng.random_range(0.0..100.0),
                scale: rng.random_range(1.0..50.0),
                labels,
                label_of_factor: (0..nf).map(|_| rng.random_range(0..labels)).collect(),
                prefix: f
                    .relation
                    .rsplit('.')
                    .next()
                    .unwrap_or(&f.relation)
                    .to_lowercase(),
            }
        })
        .collect();

    factors
        .iter()
        .enumerate()
        .map(|(u, fac)| {
            let values = schema
                .features()
                .iter()
                .zip(&plans)
                .map(|(f, plan)| match f.kind {
                    ValueKind::Continuous => {
                        let signal: f64 = plan.mix.iter().zip(fac).map(|(a, b)| a * b).sum();
                        let x = plan.offset + plan.scale * (signal + CONTINUOUS_NOISE * normal.sample(rng));
                        FeatureValue::Continuous((x * 1000.0).round() / 1000.0)
                    }
                    ValueKind::Discrete => {
                        let pick = |rng: &mut ChaCha8Rng| {
                            if rng.random_bool(LABEL_NOISE) {
                                rng.random_range(0..plan.labels)
                            } else {
                                let k = (0..nf)
                                    .map(|k| (k, fac[k] + 0.1 * normal.sample(rng)))
                                    .max_by(|a, b| a.1.total_cmp(&b.1))
                                    .map_or(0, |(k, _)| k);
                                plan.label_of_factor[k]
                            }
                        };
                        let mut labels = vec![pick(rng)];
                        if f.multi_valued && rng.random_bool(0.4) {
                            let extra = pick(rng);
                            if extra != labels[0] {
                                labels.push(extra);
                            }
                        }
                        FeatureValue::Discrete(
                            labels.into_iter().map(|l| format!("{}{}", plan.prefix, l)).collect(),
                        )
                    }
                })
                .collect();
            FeatureRecord {
                region: region_name(u),
                values,
            }
        })
        .collect()
}
