//! Multi-output Takagi–Sugeno rule structures and inference.
//!
//! Rules live in the product space `z = (x, y)` of dimension `p + K`; inference
//! restricts every Gaussian to its leading `p` coordinates. Consequents are
//! `(p+1) × K` with the intercept in the last row, matching the regressor
//! `r = [x₁ … x_p, 1]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::ingest::FeatureRange;
use crate::linalg::{quad_form_leading, serde_matrix, serde_vector};

/// Raw activations are never smaller than this before normalization.
pub const ACTIVATION_FLOOR: f64 = 1e-300;

/// How the incremental solver obtains `RᵀQR`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HessianSource {
    /// Invert the maintained inverse Hessian `P`.
    #[default]
    InverseOfP,
    /// Use the accumulated weighted scatter `Σ ψ r rᵀ` plus the start prior.
    ZeroMeanStatistics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    /// Lasso weight.
    pub alpha: f64,
    /// Correlation weight.
    pub beta: f64,
    /// Vigilance factor of the evolution criterion.
    pub fac: f64,
    /// Tolerance exponent of the evolution criterion.
    pub m: f64,
    /// Fraction of the observed range used for new-rule spreads.
    pub eps_fraction: f64,
    /// Floor of the running standard deviation, as a fraction of the range.
    pub sigma_floor_fraction: f64,
    pub thresh2: f64,
    pub thresh3: f64,
    pub budget: f64,
    pub max_prox_iters: usize,
    pub incremental_prox_iters: usize,
    pub prox_tol: f64,
    /// Maximum step halvings per proximal iteration.
    pub max_halvings: usize,
    /// `ω` in `P₀ = ω·I`.
    pub p0_scale: f64,
    /// Two rules merge when each center lies within this multiple of the
    /// other rule's tolerance radius.
    pub merge_kappa: f64,
    pub merging: bool,
    /// Pseudo-count of the birth covariance; `None` means `p + K`.
    pub cov_prior_weight: Option<f64>,
    pub hessian_source: HessianSource,
    /// Threshold adaptation rate of the active learner.
    pub adapt_eta: f64,
    pub adapt_min: f64,
    pub adapt_max: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            alpha: 0.0,
            beta: 0.0,
            fac: 0.5,
            m: 4.0,
            eps_fraction: 0.01,
            sigma_floor_fraction: 1e-3,
            thresh2: 0.6,
            thresh3: 0.075,
            budget: 1.0,
            max_prox_iters: 50,
            incremental_prox_iters: 1,
            prox_tol: 1e-8,
            max_halvings: 8,
            p0_scale: 1000.0,
            merge_kappa: 1.0,
            merging: true,
            cov_prior_weight: None,
            hessian_source: HessianSource::InverseOfP,
            adapt_eta: 0.01,
            adapt_min: 0.2,
            adapt_max: 2.0,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be a finite value >= 0");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a finite value >= 0");
        }
        if !(self.fac > 0.0 && self.fac.is_finite()) {
            return bad("fac must be positive");
        }
        if !(self.eps_fraction > 0.0 && self.eps_fraction < 1.0) {
            return bad("eps_fraction must lie in (0, 1)");
        }
        if !(self.thresh2 > 0.5 && self.thresh2 < 1.0) {
            return bad("thresh2 must lie in (0.5, 1)");
        }
        if !(self.thresh3 > 0.0) {
            return bad("thresh3 must be positive");
        }
        if !(self.budget > 0.0 && self.budget <= 1.0) {
            return bad("budget must lie in (0, 1]");
        }
        if !(self.p0_scale > 0.0) {
            return bad("p0_scale must be positive");
        }
        if !(self.adapt_min > 0.0 && self.adapt_min <= 1.0 && self.adapt_max >= 1.0) {
            return bad("adaptation clamp must contain 1");
        }
        if let Some(w) = self.cov_prior_weight {
            if !(w >= 1.0) {
                return bad("cov_prior_weight must be >= 1");
            }
        }
        Ok(())
    }
}

/// One fuzzy rule with its per-rule learning state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    #[serde(with = "serde_vector")]
    pub center: DVector<f64>,
    #[serde(with = "serde_matrix")]
    pub inv_cov: DMatrix<f64>,
    pub support: usize,
    #[serde(with = "serde_matrix")]
    pub consequents: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub inv_hessian: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub info_matrix: DMatrix<f64>,
    #[serde(with = "serde_vector")]
    pub wmean_y: DVector<f64>,
    #[serde(with = "serde_vector")]
    pub wvar_y: DVector<f64>,
    #[serde(with = "serde_matrix")]
    pub wcov_y: DMatrix<f64>,
    pub weight_sum: f64,
    /// `Σ ψ ‖y‖²`.
    pub wsum_y_sq: f64,
    /// `Σ ψ r rᵀ` without the start prior.
    #[serde(with = "serde_matrix")]
    pub hessian: DMatrix<f64>,
    /// `P⁻¹W − info` at the last (re)initialization; keeps the RFWLS point
    /// stationary for the proximal objective.
    #[serde(with = "serde_matrix")]
    pub anchor: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub anti_corr: DMatrix<f64>,
    /// Persistent step multiplier of the proximal loop.
    pub step_scale: f64,
    #[serde(skip, default = "empty_vector")]
    pub(crate) lip_guess: DVector<f64>,
}

fn empty_vector() -> DVector<f64> {
    DVector::zeros(0)
}

impl Rule {
    /// A rule centered at `center` with empty statistics and `P = ω·I`.
    pub fn new(
        center: DVector<f64>,
        inv_cov: DMatrix<f64>,
        consequents: DMatrix<f64>,
        p0_scale: f64,
    ) -> Result<Rule> {
        let n_reg = consequents.nrows();
        let k = consequents.ncols();
        if n_reg == 0 || k == 0 {
            return Err(Error::InvalidConfig("consequents must be non-empty".into()));
        }
        check_dim(n_reg - 1 + k, center.len())?;
        check_dim(center.len(), inv_cov.nrows())?;
        check_dim(center.len(), inv_cov.ncols())?;
        let anchor = &consequents / p0_scale;
        Ok(Rule {
            center,
            inv_cov,
            support: 1,
            inv_hessian: DMatrix::identity(n_reg, n_reg) * p0_scale,
            info_matrix: DMatrix::zeros(n_reg, k),
            wmean_y: DVector::zeros(k),
            wvar_y: DVector::zeros(k),
            wcov_y: DMatrix::zeros(k, k),
            weight_sum: 0.0,
            wsum_y_sq: 0.0,
            hessian: DMatrix::zeros(n_reg, n_reg),
            anchor,
            anti_corr: DMatrix::from_element(k, k, 1.0),
            step_scale: 1.0,
            lip_guess: DVector::zeros(0),
            consequents,
        })
    }

    /// Number of input features.
    pub fn p(&self) -> usize {
        self.consequents.nrows() - 1
    }

    /// Number of labels.
    pub fn k(&self) -> usize {
        self.consequents.ncols()
    }

    /// Output of the rule's hyperplanes at `x`.
    pub fn local_output(&self, x: &[f64]) -> DVector<f64> {
        local_output_of(&self.consequents, x)
    }

    /// Diagonal of the inverse covariance restricted to the inputs.
    pub fn input_precisions(&self) -> Vec<f64> {
        (0..self.p()).map(|j| self.inv_cov[(j, j)]).collect()
    }

    pub(crate) fn input_quad_form(&self, x: &[f64]) -> f64 {
        quad_form_leading(&self.inv_cov, &self.center, x, x.len())
    }
}

/// Regressor `[x₁ … x_p, 1]`.
pub fn regressor(x: &[f64]) -> DVector<f64> {
    let mut r = DVector::from_element(x.len() + 1, 1.0);
    r.rows_mut(0, x.len()).copy_from_slice(x);
    r
}

/// Gaussian membership of `x` in the input-space part of `rule`.
pub fn activation(rule: &Rule, x: &[f64]) -> Result<f64> {
    check_dim(rule.p(), x.len())?;
    Ok((-0.5 * rule.input_quad_form(x)).exp().max(ACTIVATION_FLOOR))
}

/// Mahalanobis distance of `z` to the rule center over all stored coordinates.
pub fn mahalanobis(rule: &Rule, z: &[f64]) -> Result<f64> {
    check_dim(rule.center.len(), z.len())?;
    Ok(quad_form_leading(&rule.inv_cov, &rule.center, z, z.len()).sqrt())
}

/// Componentwise `ŷ ≥ 0.5`.
pub fn predict_crisp(yhat: &[f64]) -> Vec<u8> {
    yhat.iter().map(|&v| u8::from(v >= 0.5)).collect()
}

/// Running min/max plus mean/variance of every product-space coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordTracker {
    pub ranges: Vec<FeatureRange>,
    pub count: usize,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    /// Coordinates at and beyond this index are labels with a fixed unit range.
    pub label_offset: usize,
}

impl CoordTracker {
    pub fn new(p: usize, k: usize) -> Self {
        let d = p + k;
        CoordTracker {
            ranges: vec![FeatureRange::point(0.0); d],
            count: 0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
            label_offset: p,
        }
    }

    pub fn observe(&mut self, z: &[f64]) {
        if self.count == 0 {
            self.ranges = z.iter().map(|&v| FeatureRange::point(v)).collect();
        } else {
            for (r, &v) in self.ranges.iter_mut().zip(z) {
                r.min = r.min.min(v);
                r.max = r.max.max(v);
            }
        }
        self.count += 1;
        let n = self.count as f64;
        for (j, &v) in z.iter().enumerate() {
            let delta = v - self.mean[j];
            self.mean[j] += delta / n;
            self.m2[j] += delta * (v - self.mean[j]);
        }
    }

    /// Coordinate range used for spreads; labels span 1, zero widths map to 1.
    pub fn range(&self, j: usize) -> f64 {
        if j >= self.label_offset {
            return 1.0;
        }
        let w = self.ranges[j].width();
        if w > 0.0 {
            w
        } else {
            1.0
        }
    }

    pub fn std(&self, j: usize) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2[j] / (self.count - 1) as f64).sqrt()
        }
    }
}

/// Ordered rule collection plus configuration and coordinate statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBase {
    pub rules: Vec<Rule>,
    pub p: usize,
    pub k: usize,
    pub config: LearnConfig,
    pub tracker: CoordTracker,
    /// Number of merges performed so far.
    pub merges: usize,
}

impl RuleBase {
    pub fn new(p: usize, k: usize, config: LearnConfig) -> Result<Self> {
        config.validate()?;
        if k == 0 {
            return Err(Error::InvalidConfig("at least one label is required".into()));
        }
        Ok(RuleBase {
            rules: Vec::new(),
            p,
            k,
            config,
            tracker: CoordTracker::new(p, k),
            merges: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Dimension of the clustered product space.
    pub fn dim(&self) -> usize {
        self.p + self.k
    }

    /// Normalized activations `Ψ`, computed relative to the strongest rule so
    /// that far-away samples do not collapse to an all-floor vector.
    pub fn normalized_activations(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.p, x.len())?;
        if self.rules.is_empty() {
            return Err(Error::InvalidConfig("rule base has no rules".into()));
        }
        let logs: Vec<f64> = self
            .rules
            .iter()
            .map(|r| -0.5 * r.input_quad_form(x))
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = logs
            .iter()
            .map(|&l| (l - top).exp().max(ACTIVATION_FLOOR))
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|v| v / total).collect())
    }

    pub fn predict_continuous(&self, x: &[f64]) -> Result<Vec<f64>> {
        let psi = self.normalized_activations(x)?;
        let mut out = vec![0.0; self.k];
        for (rule, w) in self.rules.iter().zip(&psi) {
            for (o, v) in out.iter_mut().zip(rule.local_output(x).iter()) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.rules.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index,
                len: self.rules.len(),
            })
        }
    }

    pub(crate) fn prior_weight(&self) -> f64 {
        self.config
            .cov_prior_weight
            .unwrap_or(self.dim() as f64)
    }
}

/// `Wᵀ [x; 1]` for a `(p+1) × K` consequent matrix with the intercept last.
pub fn local_output_of(w: &DMatrix<f64>, x: &[f64]) -> DVector<f64> {
    let p = w.nrows() - 1;
    DVector::from_fn(w.ncols(), |c, _| {
        let mut acc = w[(p, c)];
        for j in 0..p {
            acc += w[(j, c)] * x[j];
        }
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rule_1d(c: f64, prec: f64) -> Rule {
        let center = DVector::from_vec(vec![c, 0.0]);
        let inv_cov = DMatrix::from_diagonal(&DVector::from_vec(vec![prec, 1.0]));
        Rule::new(center, inv_cov, DMatrix::zeros(2, 1), 1000.0).unwrap()
    }

    fn base_with(rules: Vec<Rule>) -> RuleBase {
        let p = rules[0].p();
        let k = rules[0].k();
        let mut rb = RuleBase::new(p, k, LearnConfig::default()).unwrap();
        rb.rules = rules;
        rb
    }

    #[test]
    fn activation_examples() {
        let r = rule_1d(0.0, 1.0);
        assert_eq!(activation(&r, &[0.0]).unwrap(), 1.0);
        assert_relative_eq!(activation(&r, &[2.0]).unwrap(), 0.135_335_283_236_612_7, epsilon = 1e-15);

        let center = DVector::zeros(3);
        let inv_cov = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 1.0]));
        let r2 = Rule::new(center, inv_cov, DMatrix::zeros(3, 1), 1000.0).unwrap();
        assert_relative_eq!(activation(&r2, &[1.0, 1.0]).unwrap(), (-2.5f64).exp(), epsilon = 1e-15);
        assert!(matches!(activation(&r2, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn normalized_activation_examples() {
        let rb = base_with(vec![rule_1d(0.0, 1.0)]);
        assert_eq!(rb.normalized_activations(&[3.0]).unwrap(), vec![1.0]);

        let rb = base_with(vec![rule_1d(0.5, 2.0), rule_1d(0.5, 2.0)]);
        assert_eq!(rb.normalized_activations(&[-7.0]).unwrap(), vec![0.5, 0.5]);

        let rb = base_with(vec![rule_1d(0.0, 1.0), rule_1d(2.0, 1.0)]);
        let psi = rb.normalized_activations(&[0.0]).unwrap();
        assert_relative_eq!(psi[0], 1.0 / (1.0 + (-2.0f64).exp()), epsilon = 1e-15);
        assert_relative_eq!(psi[0], 0.8808, epsilon = 1e-4);
    }

    #[test]
    fn far_samples_keep_a_proper_distribution() {
        let rb = base_with(vec![rule_1d(0.0, 1.0), rule_1d(2.0, 1.0)]);
        let psi = rb.normalized_activations(&[1e6]).unwrap();
        assert_eq!(psi[1], 1.0);
        assert!(psi[0] > 0.0 && psi[0] <= ACTIVATION_FLOOR);
    }

    #[test]
    fn prediction_examples() {
        let mut r = rule_1d(0.0, 1.0);
        r.consequents[(1, 0)] = 1.0;
        let rb = base_with(vec![r.clone()]);
        assert_eq!(rb.predict_continuous(&[42.0]).unwrap(), vec![1.0]);

        r.consequents[(0, 0)] = 0.25;
        r.consequents[(1, 0)] = 0.5;
        let rb = base_with(vec![r]);
        assert_relative_eq!(rb.predict_continuous(&[2.0]).unwrap()[0], 1.0, epsilon = 1e-15);

        let mut a = rule_1d(0.0, 1.0);
        a.consequents[(1, 0)] = 1.0;
        let b = rule_1d(2.0, 1.0);
        let rb = base_with(vec![a, b]);
        assert_relative_eq!(rb.predict_continuous(&[0.0]).unwrap()[0], 0.8808, epsilon = 1e-4);
    }

    #[test]
    fn crisp_threshold() {
        assert_eq!(predict_crisp(&[0.5]), vec![1]);
        assert_eq!(predict_crisp(&[0.49, 0.51]), vec![0, 1]);
        assert_eq!(predict_crisp(&[-0.2, 1.3]), vec![0, 1]);
    }

    #[test]
    fn mahalanobis_examples() {
        let r = rule_1d(0.0, 4.0);
        assert_eq!(mahalanobis(&r, &[0.0, 0.0]).unwrap(), 0.0);
        assert_relative_eq!(mahalanobis(&r, &[1.0, 0.0]).unwrap(), 2.0, epsilon = 1e-15);
        assert!(mahalanobis(&r, &[1.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(LearnConfig::default().validate().is_ok());
        let cfg = LearnConfig {
            thresh2: 0.5,
            ..LearnConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = LearnConfig {
            budget: 0.0,
            ..LearnConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    fn arb_rule(p: usize, k: usize) -> impl Strategy<Value = Rule> {
        let d = p + k;
        (
            prop::collection::vec(-2.0..2.0f64, d),
            prop::collection::vec(0.1..5.0f64, d),
            prop::collection::vec(-1.0..1.0f64, (p + 1) * k),
        )
            .prop_map(move |(c, prec, w)| {
                Rule::new(
                    DVector::from_vec(c),
                    DMatrix::from_diagonal(&DVector::from_vec(prec)),
                    DMatrix::from_vec(p + 1, k, w),
                    1000.0,
                )
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn psi_sums_to_one(rules in prop::collection::vec(arb_rule(2, 2), 1..6),
                           x in prop::collection::vec(-50.0..50.0f64, 2)) {
            let rb = base_with(rules);
            let psi = rb.normalized_activations(&x).unwrap();
            prop_assert!((psi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(psi.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn prediction_ignores_rule_order(rules in prop::collection::vec(arb_rule(2, 2), 2..6),
                                         x in prop::collection::vec(-3.0..3.0f64, 2)) {
            let fwd = base_with(rules.clone()).predict_continuous(&x).unwrap();
            let mut rev = rules;
            rev.reverse();
            let bwd = base_with(rev).predict_continuous(&x).unwrap();
            for (a, b) in fwd.iter().zip(&bwd) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn single_rule_is_its_hyperplanes(rule in arb_rule(3, 2),
                                          x in prop::collection::vec(-3.0..3.0f64, 3)) {
            let direct = rule.local_output(&x);
            let rb = base_with(vec![rule]);
            let pred = rb.predict_continuous(&x).unwrap();
            for c in 0..2 {
                prop_assert!((pred[c] - direct[c]).abs() < 1e-12);
            }
        }

        #[test]
        fn negligible_rule_never_flips_crisp(rules in prop::collection::vec(arb_rule(1, 2), 1..4),
                                             x in -1.0..1.0f64) {
            let rb = base_with(rules.clone());
            let before = predict_crisp(&rb.predict_continuous(&[x]).unwrap());
            let mut far = rules[0].clone();
            far.center[0] = 1e200;
            far.consequents.fill(1e3);
            let mut with_far = rules;
            with_far.push(far);
            let after = predict_crisp(&base_with(with_far).predict_continuous(&[x]).unwrap());
            prop_assert_eq!(before, after);
        }

        #[test]
        fn identity_metric_is_euclidean(z in prop::collection::vec(-5.0..5.0f64, 3)) {
            let r = Rule::new(DVector::zeros(3), DMatrix::identity(3, 3), DMatrix::zeros(2, 2), 1000.0).unwrap();
            let eucl = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((mahalanobis(&r, &z).unwrap() - eucl).abs() < 1e-12);
        }
    }
}
