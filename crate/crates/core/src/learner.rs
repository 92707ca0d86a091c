//! The EFC-ML learner (antecedent evolution plus correlation-regularized
//! consequents), the common streaming-model interface and the checkpoint
//! document.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::antecedent::{
    evolution_check, evolve_antecedent, evolve_rule_masked, merge_check_with, merge_rules,
    tolerance_radius, update_winner, EvolutionKind, EvolutionOutcome,
};
use crate::baselines::{ChainModel, OneVsRestModel};
use crate::consequent::{incremental_step, prior_precision, reanchor_with, BatchStats, PreparedFit};
use crate::error::{check_dim, Error, Result};
use crate::ingest::Sample;
use crate::linalg::spd_inverse;
use crate::rulebase::{regressor, LearnConfig, RuleBase};

pub const DOCUMENT_SCHEMA: &str = "efcml-model";
pub const DOCUMENT_VERSION: u32 = 1;

/// A batch row as real-valued inputs and targets.
pub type Row = (Vec<f64>, Vec<f64>);

pub fn rows_of(samples: &[Sample]) -> Vec<Row> {
    samples
        .iter()
        .map(|s| (s.x.clone(), s.labels_f64()))
        .collect()
}

/// Common interface of all stream classifiers.
pub trait StreamLearner: Send + Sync {
    fn method(&self) -> &'static str;
    fn predict(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn learn(&mut self, x: &[f64], y: &[u8]) -> Result<()>;
    /// Update with only the labels flagged in `mask`; `y` holds fill values
    /// for the others.
    fn learn_partial(&mut self, _x: &[f64], _y: &[f64], _mask: &[bool]) -> Result<()> {
        Err(Error::Unsupported("partial annotation"))
    }
    fn rule_count(&self) -> usize;
    fn merge_count(&self) -> usize;
    fn is_frozen(&self) -> bool {
        false
    }
    fn to_document(&self) -> ModelDocument;
}

/// Antecedent structure learned from an initial batch together with the
/// per-rule weighted statistics; consequents for any `(α, β)` follow from it
/// without another pass.
#[derive(Debug, Clone)]
pub struct InitialStructure {
    pub rb: RuleBase,
    pub stats: Vec<BatchStats>,
    prepared: Vec<PreparedRule>,
}

#[derive(Debug, Clone)]
struct PreparedRule {
    fit: PreparedFit,
    precision: DMatrix<f64>,
    inv_hessian: DMatrix<f64>,
}

impl InitialStructure {
    pub fn build(p: usize, k: usize, cfg: &LearnConfig, rows: &[Row]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset(0));
        }
        let mut rb = RuleBase::new(p, k, cfg.clone())?;
        let zs: Vec<Vec<f64>> = rows
            .iter()
            .map(|(x, y)| {
                check_dim(p, x.len())?;
                check_dim(k, y.len())?;
                Ok(x.iter().chain(y).cloned().collect())
            })
            .collect::<Result<_>>()?;
        for z in &zs {
            rb.tracker.observe(z);
        }
        for z in &zs {
            let changed = if rb.rules.is_empty() {
                evolve_antecedent(&mut rb, z)?
            } else {
                let check = evolution_check(&rb, z)?;
                if check.fires {
                    evolve_antecedent(&mut rb, z)?
                } else {
                    update_winner(&mut rb, check.win, z)?;
                    check.win
                }
            };
            if rb.config.merging {
                if let Some((i, j)) = merge_check_with(&rb, changed) {
                    merge_rules(&mut rb, i, j)?;
                }
            }
        }

        let n = rows.len();
        let r = DMatrix::from_fn(n, p + 1, |i, j| if j == p { 1.0 } else { rows[i].0[j] });
        let y = DMatrix::from_fn(n, k, |i, c| rows[i].1[c]);
        let psi: Vec<Vec<f64>> = rows
            .iter()
            .map(|(x, _)| rb.normalized_activations(x))
            .collect::<Result<_>>()?;
        let stats: Vec<BatchStats> = (0..rb.rules.len())
            .map(|i| {
                let q: Vec<f64> = psi.iter().map(|w| w[i]).collect();
                BatchStats::from_data(&r, &y, &q)
            })
            .collect::<Result<_>>()?;
        let prepared = stats
            .iter()
            .map(|s| {
                let precision = prior_precision(&s.hessian, cfg);
                Ok(PreparedRule {
                    fit: PreparedFit::new(s)?,
                    inv_hessian: spd_inverse(&precision).ok_or(Error::SingularHessian)?,
                    precision,
                })
            })
            .collect::<Result<_>>()?;
        Ok(InitialStructure { rb, stats, prepared })
    }

    /// Consequent matrices of every rule for the given penalty weights.
    pub fn consequents(&self, alpha: f64, beta: f64) -> Result<Vec<DMatrix<f64>>> {
        let cfg = LearnConfig {
            alpha,
            beta,
            ..self.rb.config.clone()
        };
        cfg.validate()?;
        self.stats
            .iter()
            .zip(&self.prepared)
            .map(|(stats, prep)| Ok(prep.fit.fit(stats, &cfg)?.w))
            .collect()
    }

    /// Trained model for the given penalty weights.
    pub fn finish(&self, alpha: f64, beta: f64) -> Result<EfcMl> {
        let mut rb = self.rb.clone();
        rb.config.alpha = alpha;
        rb.config.beta = beta;
        rb.config.validate()?;
        let cfg = rb.config.clone();
        for ((rule, stats), prep) in rb.rules.iter_mut().zip(&self.stats).zip(&self.prepared) {
            let fit = prep.fit.fit(stats, &cfg)?;
            rule.consequents = fit.w;
            rule.info_matrix = stats.info.clone();
            rule.hessian = stats.hessian.clone();
            rule.wsum_y_sq = stats.y_sq;
            rule.weight_sum = stats.weight_sum;
            rule.wmean_y = stats.wmean.clone();
            rule.wvar_y = stats.wvar.clone();
            rule.wcov_y = stats.wcov.clone();
            rule.anti_corr = stats.anti_correlation();
            reanchor_with(rule, &prep.precision, prep.inv_hessian.clone());
        }
        Ok(EfcMl { rb })
    }
}

/// Evolving multi-label fuzzy classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfcMl {
    pub rb: RuleBase,
}

impl EfcMl {
    /// An untrained model; the first learned sample creates the first rule.
    pub fn new(p: usize, k: usize, cfg: LearnConfig) -> Result<Self> {
        Ok(EfcMl {
            rb: RuleBase::new(p, k, cfg)?,
        })
    }

    /// Batch training on the initial rows with `cfg`.
    pub fn train(p: usize, k: usize, cfg: &LearnConfig, rows: &[Row]) -> Result<Self> {
        InitialStructure::build(p, k, cfg, rows)?.finish(cfg.alpha, cfg.beta)
    }

    pub fn config(&self) -> &LearnConfig {
        &self.rb.config
    }

    /// One sample-wise update. `mask` flags annotated labels; `y` must hold
    /// fill values for the rest.
    pub fn learn_masked(
        &mut self,
        x: &[f64],
        y: &[f64],
        mask: Option<&[bool]>,
    ) -> Result<EvolutionOutcome> {
        let rb = &mut self.rb;
        check_dim(rb.p, x.len())?;
        check_dim(rb.k, y.len())?;
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("sample"));
        }
        let z: Vec<f64> = x.iter().chain(y).cloned().collect();
        rb.tracker.observe(&z);

        if rb.rules.is_empty() {
            let idx = evolve_rule_masked(rb, x, y, mask)?;
            return Ok(EvolutionOutcome {
                kind: EvolutionKind::Evolved(idx),
                min_distance: 0.0,
                threshold: tolerance_radius(rb.config.fac, rb.dim(), 1, rb.config.m),
            });
        }

        let check = evolution_check(rb, &z)?;
        let (changed, mut kind, fresh) = if check.fires {
            let idx = evolve_rule_masked(rb, x, y, mask)?;
            (idx, EvolutionKind::Evolved(idx), Some(idx))
        } else {
            update_winner(rb, check.win, &z)?;
            (check.win, EvolutionKind::Updated(check.win), None)
        };

        let psi = rb.normalized_activations(x)?;
        let cfg = rb.config.clone();
        for (i, rule) in rb.rules.iter_mut().enumerate() {
            if Some(i) != fresh {
                incremental_step(rule, x, y, psi[i], &cfg, mask)?;
            }
        }

        if cfg.merging {
            if let Some((i, j)) = merge_check_with(rb, changed) {
                let removed = if rb.rules[j].support > rb.rules[i].support { i } else { j };
                let kept = merge_rules(rb, i, j)?;
                kind = EvolutionKind::Merged { kept, removed };
            }
        }
        Ok(EvolutionOutcome {
            kind,
            min_distance: check.ma_win,
            threshold: check.r_win,
        })
    }

    /// Unsupervised trace drop ratio of every rule for `x`.
    pub fn trace_drop_ratios(&self, x: &[f64]) -> Result<Vec<f64>> {
        let psi = self.rb.normalized_activations(x)?;
        let r: DVector<f64> = regressor(x);
        Ok(self
            .rb
            .rules
            .iter()
            .zip(psi)
            .map(|(rule, w)| {
                crate::consequent::trace_drop(&rule.inv_hessian, &r, w) / rule.inv_hessian.trace()
            })
            .collect())
    }
}

impl StreamLearner for EfcMl {
    fn method(&self) -> &'static str {
        "efcml"
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.rb.predict_continuous(x)
    }

    fn learn(&mut self, x: &[f64], y: &[u8]) -> Result<()> {
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        self.learn_masked(x, &yf, None).map(|_| ())
    }

    fn learn_partial(&mut self, x: &[f64], y: &[f64], mask: &[bool]) -> Result<()> {
        self.learn_masked(x, y, Some(mask)).map(|_| ())
    }

    fn rule_count(&self) -> usize {
        self.rb.len()
    }

    fn merge_count(&self) -> usize {
        self.rb.merges
    }

    fn to_document(&self) -> ModelDocument {
        ModelDocument::new("efcml", false, None, vec![self.rb.clone()])
    }
}

/// Prediction-only wrapper; updates are ignored.
#[derive(Debug, Clone)]
pub struct Frozen<M>(pub M);

impl<M: StreamLearner> StreamLearner for Frozen<M> {
    fn method(&self) -> &'static str {
        self.0.method()
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.predict(x)
    }

    fn learn(&mut self, _x: &[f64], _y: &[u8]) -> Result<()> {
        Ok(())
    }

    fn learn_partial(&mut self, _x: &[f64], _y: &[f64], _mask: &[bool]) -> Result<()> {
        Ok(())
    }

    fn rule_count(&self) -> usize {
        self.0.rule_count()
    }

    fn merge_count(&self) -> usize {
        self.0.merge_count()
    }

    fn is_frozen(&self) -> bool {
        true
    }

    fn to_document(&self) -> ModelDocument {
        ModelDocument {
            frozen: true,
            ..self.0.to_document()
        }
    }
}

impl StreamLearner for Box<dyn StreamLearner> {
    fn method(&self) -> &'static str {
        (**self).method()
    }
    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).predict(x)
    }
    fn learn(&mut self, x: &[f64], y: &[u8]) -> Result<()> {
        (**self).learn(x, y)
    }
    fn learn_partial(&mut self, x: &[f64], y: &[f64], mask: &[bool]) -> Result<()> {
        (**self).learn_partial(x, y, mask)
    }
    fn rule_count(&self) -> usize {
        (**self).rule_count()
    }
    fn merge_count(&self) -> usize {
        (**self).merge_count()
    }
    fn is_frozen(&self) -> bool {
        (**self).is_frozen()
    }
    fn to_document(&self) -> ModelDocument {
        (**self).to_document()
    }
}

/// Wraps `model` so that it no longer learns; already frozen models are
/// returned unchanged.
pub fn freeze(model: Box<dyn StreamLearner>) -> Box<dyn StreamLearner> {
    if model.is_frozen() {
        model
    } else {
        Box::new(Frozen(model))
    }
}

/// Versioned JSON checkpoint of any model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema: String,
    pub version: u32,
    pub method: String,
    pub frozen: bool,
    /// Label order of chain links.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_order: Option<Vec<usize>>,
    pub rulebases: Vec<RuleBase>,
}

impl ModelDocument {
    pub fn new(
        method: &str,
        frozen: bool,
        chain_order: Option<Vec<usize>>,
        rulebases: Vec<RuleBase>,
    ) -> Self {
        ModelDocument {
            schema: DOCUMENT_SCHEMA.to_string(),
            version: DOCUMENT_VERSION,
            method: method.to_string(),
            frozen,
            chain_order,
            rulebases,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.schema != DOCUMENT_SCHEMA || doc.version != DOCUMENT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model document {} v{}",
                doc.schema, doc.version
            )));
        }
        Ok(doc)
    }

    /// Rebuilds the model described by the document.
    pub fn into_model(self) -> Result<Box<dyn StreamLearner>> {
        let frozen = self.frozen;
        let model: Box<dyn StreamLearner> = match self.method.as_str() {
            "efcml" => {
                let rb = self
                    .rulebases
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::InvalidConfig("document without rule base".into()))?;
                Box::new(EfcMl { rb })
            }
            "ovr" => Box::new(OneVsRestModel::from_members(
                self.rulebases.into_iter().map(|rb| EfcMl { rb }).collect(),
            )?),
            "chain" => {
                let order = self
                    .chain_order
                    .ok_or_else(|| Error::InvalidConfig("chain document without order".into()))?;
                Box::new(ChainModel::from_links(
                    self.rulebases.into_iter().map(|rb| EfcMl { rb }).collect(),
                    order,
                )?)
            }
            other => {
                return Err(Error::InvalidConfig(format!("unknown method `{other}`")));
            }
        };
        Ok(if frozen { freeze(model) } else { model })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_cluster_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<Row> {
        (0..n)
            .map(|i| {
                let side = i % 2 == 0;
                let c = if side { 0.0 } else { 3.0 };
                let x = vec![c + rng.random_range(-0.3..0.3), c + rng.random_range(-0.3..0.3)];
                let y = vec![f64::from(u8::from(side)), f64::from(u8::from(!side))];
                (x, y)
            })
            .collect()
    }

    #[test]
    fn batch_training_separates_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let rows = two_cluster_rows(&mut rng, 80);
        let model = EfcMl::train(2, 2, &LearnConfig::default(), &rows).unwrap();
        assert!(model.rule_count() >= 1);
        let hits = rows
            .iter()
            .filter(|(x, y)| {
                let crisp = crate::rulebase::predict_crisp(&model.predict(x).unwrap());
                crisp.iter().zip(y).all(|(&a, &b)| f64::from(a) == b)
            })
            .count();
        assert!(hits >= 76, "{hits}");
    }

    #[test]
    fn stream_learning_from_scratch() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows = two_cluster_rows(&mut rng, 200);
        let mut model = EfcMl::new(2, 2, LearnConfig::default()).unwrap();
        for (x, y) in &rows {
            let yb: Vec<u8> = y.iter().map(|&v| v as u8).collect();
            model.learn(x, &yb).unwrap();
        }
        let p = model.predict(&[0.0, 0.0]).unwrap();
        assert!(p[0] > 0.5 && p[1] < 0.5, "{p:?}");
        let p = model.predict(&[3.0, 3.0]).unwrap();
        assert!(p[0] < 0.5 && p[1] > 0.5, "{p:?}");
    }

    #[test]
    fn shared_structure_matches_direct_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let rows = two_cluster_rows(&mut rng, 60);
        let cfg = LearnConfig {
            alpha: 0.01,
            beta: 0.5,
            ..LearnConfig::default()
        };
        let direct = EfcMl::train(2, 2, &cfg, &rows).unwrap();
        let shared = InitialStructure::build(2, 2, &LearnConfig::default(), &rows)
            .unwrap()
            .finish(0.01, 0.5)
            .unwrap();
        assert_eq!(direct, shared);
    }

    #[test]
    fn document_round_trip_and_freeze() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rows = two_cluster_rows(&mut rng, 40);
        let model: Box<dyn StreamLearner> =
            Box::new(EfcMl::train(2, 2, &LearnConfig::default(), &rows).unwrap());
        let json = model.to_document().to_json().unwrap();
        let back = ModelDocument::from_json(&json).unwrap().into_model().unwrap();
        assert_eq!(back.to_document().to_json().unwrap(), json);

        let mut frozen = freeze(freeze(back));
        assert!(frozen.is_frozen());
        let before = frozen.to_document().to_json().unwrap();
        for (x, y) in &rows {
            let yb: Vec<u8> = y.iter().map(|&v| v as u8).collect();
            frozen.learn(x, &yb).unwrap();
        }
        assert_eq!(frozen.to_document().to_json().unwrap(), before);
        let doc = frozen.to_document();
        assert!(doc.frozen);
        assert!(ModelDocument::from_json(&doc.to_json().unwrap())
            .unwrap()
            .into_model()
            .unwrap()
            .is_frozen());
    }

    #[test]
    fn rejects_wrong_schema() {
        let doc = ModelDocument::new("efcml", false, None, vec![]);
        let text = doc.to_json().unwrap().replace("efcml-model", "other");
        assert!(ModelDocument::from_json(&text).is_err());
    }
}
