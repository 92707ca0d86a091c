//! Budgeted online active learning: novelty, output uncertainty and
//! parameter instability criteria with a hard budget gate and adaptive
//! thresholds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::antecedent::tolerance_radius;
use crate::error::Result;
use crate::learner::EfcMl;
use crate::rulebase::{LearnConfig, RuleBase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    LabelsBased,
    SamplesBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Novelty,
    OutputUncertainty,
    ParamInstability,
    Random,
}

impl Trigger {
    pub fn name(self) -> &'static str {
        match self {
            Trigger::Novelty => "novelty",
            Trigger::OutputUncertainty => "output_uncertainty",
            Trigger::ParamInstability => "param_instability",
            Trigger::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Full,
    Partial(Vec<usize>),
    None,
}

impl Verdict {
    pub fn is_selected(&self) -> bool {
        !matches!(self, Verdict::None)
    }
}

/// Outcome for one stream sample. A fired criterion that the budget gate
/// rejected keeps its trigger with verdict `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub verdict: Verdict,
    pub trigger: Vec<Trigger>,
    /// Spent fraction after this sample.
    pub spend_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetState {
    pub mode: BudgetMode,
    pub budget: f64,
    /// Labels per sample.
    pub k: usize,
    /// Seen units: samples or labels depending on the mode.
    pub seen: usize,
    /// Selected units.
    pub selected: usize,
    /// Threshold adaptation factor `s`.
    pub adapt: f64,
    pub eta: f64,
    pub adapt_min: f64,
    pub adapt_max: f64,
}

impl BudgetState {
    pub fn new(mode: BudgetMode, budget: f64, k: usize, cfg: &LearnConfig) -> Self {
        BudgetState {
            mode,
            budget,
            k,
            seen: 0,
            selected: 0,
            adapt: 1.0,
            eta: cfg.adapt_eta,
            adapt_min: cfg.adapt_min,
            adapt_max: cfg.adapt_max,
        }
    }

    /// Units added to `seen` per sample.
    pub fn unit(&self) -> usize {
        match self.mode {
            BudgetMode::SamplesBased => 1,
            BudgetMode::LabelsBased => self.k,
        }
    }

    pub fn spent_fraction(&self) -> f64 {
        if self.seen == 0 {
            0.0
        } else {
            self.selected as f64 / self.seen as f64
        }
    }
}

/// `(selected + cost)/(seen + unit) ≤ budget`.
pub fn gate(budget: &BudgetState, decision_cost: usize) -> bool {
    let num = (budget.selected + decision_cost) as f64;
    let den = (budget.seen + budget.unit()) as f64;
    num / den <= budget.budget
}

/// Shrinks `s` after a selection and grows it otherwise, within the clamp.
pub fn adapt_thresholds(budget: &mut BudgetState, selected: bool) {
    let factor = if selected {
        1.0 - budget.eta
    } else {
        1.0 + budget.eta
    };
    budget.adapt = (budget.adapt * factor).clamp(budget.adapt_min, budget.adapt_max);
}

/// Input-space evolution criterion.
pub fn novelty_criterion(rb: &RuleBase, x: &[f64]) -> bool {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rb.rules.iter().enumerate() {
        let d = r.input_quad_form(x).sqrt();
        if best.is_none_or(|b| d < b.1) {
            best = Some((i, d));
        }
    }
    match best {
        None => true,
        Some((win, ma)) => {
            ma > tolerance_radius(rb.config.fac, rb.p, rb.rules[win].support, rb.config.m)
        }
    }
}

/// Labels whose output lies strictly inside `(1−b, b)`,
/// `b = 0.5 + (thresh2 − 0.5)·s`.
pub fn output_uncertainty(yhat: &[f64], thresh2: f64, s: f64) -> Vec<usize> {
    let b = (0.5 + (thresh2 - 0.5) * s).clamp(0.5 + f64::EPSILON, 1.0 - f64::EPSILON);
    (0..yhat.len())
        .filter(|&j| yhat[j] < b && yhat[j] > 1.0 - b)
        .collect()
}

/// Largest relative trace drop of any rule's `P` exceeds `thresh3/s`.
/// Works on scratch values; the model is not modified.
pub fn param_instability(model: &EfcMl, x: &[f64], thresh3: f64, s: f64) -> Result<bool> {
    let worst = model
        .trace_drop_ratios(x)?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(worst > thresh3 / s)
}

/// Applies the criteria in precedence order, gates the candidate against
/// the budget and adapts the thresholds.
pub fn select(model: &EfcMl, x: &[f64], budget: &mut BudgetState) -> Result<SelectionDecision> {
    let rb = &model.rb;
    let cfg = &rb.config;
    let s = budget.adapt;
    let full_cost = budget.unit();

    let candidate: Option<(Verdict, Trigger, usize)> = if novelty_criterion(rb, x) {
        Some((Verdict::Full, Trigger::Novelty, full_cost))
    } else {
        let uncertain = output_uncertainty(&model.rb.predict_continuous(x)?, cfg.thresh2, s);
        if !uncertain.is_empty() {
            Some(match budget.mode {
                BudgetMode::LabelsBased => {
                    let cost = uncertain.len();
                    (Verdict::Partial(uncertain), Trigger::OutputUncertainty, cost)
                }
                BudgetMode::SamplesBased => (Verdict::Full, Trigger::OutputUncertainty, 1),
            })
        } else if param_instability(model, x, cfg.thresh3, s)? {
            Some((Verdict::Full, Trigger::ParamInstability, full_cost))
        } else {
            None
        }
    };
    Ok(settle(budget, candidate))
}

/// Uniform random selection with probability `budget`, gated like [`select`].
pub fn select_random<R: Rng>(budget: &mut BudgetState, rng: &mut R) -> SelectionDecision {
    let candidate = rng
        .random_bool(budget.budget.clamp(0.0, 1.0))
        .then(|| (Verdict::Full, Trigger::Random, budget.unit()));
    settle(budget, candidate)
}

fn settle(budget: &mut BudgetState, candidate: Option<(Verdict, Trigger, usize)>) -> SelectionDecision {
    let (verdict, trigger) = match candidate {
        Some((verdict, trigger, cost)) if gate(budget, cost) => {
            budget.selected += cost;
            (verdict, vec![trigger])
        }
        Some((_, trigger, _)) => (Verdict::None, vec![trigger]),
        None => (Verdict::None, Vec::new()),
    };
    budget.seen += budget.unit();
    adapt_thresholds(budget, verdict.is_selected());
    SelectionDecision {
        verdict,
        trigger,
        spend_after: budget.spent_fraction(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rulebase::Rule;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn state(mode: BudgetMode, budget: f64, k: usize) -> BudgetState {
        BudgetState::new(mode, budget, k, &LearnConfig::default())
    }

    fn model_with_rule(p: usize, k: usize, center: &[f64], support: usize) -> EfcMl {
        let mut m = EfcMl::new(p, k, LearnConfig::default()).unwrap();
        let d = p + k;
        let mut r = Rule::new(
            DVector::from_column_slice(center),
            DMatrix::identity(d, d),
            DMatrix::zeros(p + 1, k),
            1000.0,
        )
        .unwrap();
        r.support = support;
        m.rb.rules.push(r);
        m
    }

    #[test]
    fn gate_examples() {
        let mut b = state(BudgetMode::SamplesBased, 0.1, 3);
        b.seen = 100;
        b.selected = 9;
        assert!(gate(&b, 1));
        b.selected = 10;
        assert!(!gate(&b, 1));
        let mut full = state(BudgetMode::SamplesBased, 1.0, 3);
        full.seen = 7;
        full.selected = 7;
        assert!(gate(&full, 1));
    }

    #[test]
    fn adaptation_examples() {
        let mut b = state(BudgetMode::SamplesBased, 0.1, 1);
        for _ in 0..100 {
            adapt_thresholds(&mut b, false);
        }
        assert_eq!(b.adapt, 2.0);
        let mut b = state(BudgetMode::SamplesBased, 0.1, 1);
        adapt_thresholds(&mut b, true);
        adapt_thresholds(&mut b, false);
        assert!((b.adapt - 0.99 * 1.01).abs() < 1e-15);
    }

    #[test]
    fn uncertainty_examples() {
        assert_eq!(output_uncertainty(&[0.5], 0.6, 1.0), vec![0]);
        assert!(output_uncertainty(&[0.05, 0.95], 0.6, 1.0).is_empty());
        assert_eq!(output_uncertainty(&[0.45, 0.61], 0.6, 1.0), vec![0]);
        assert_eq!(output_uncertainty(&[0.45, 0.61], 0.6, 2.0), vec![0, 1]);
    }

    #[test]
    fn novelty_examples() {
        let m = model_with_rule(1, 1, &[0.0, 1.0], 5);
        assert!(!novelty_criterion(&m.rb, &[0.0]));
        let r = tolerance_radius(m.rb.config.fac, 1, 5, 4.0);
        assert!(novelty_criterion(&m.rb, &[10.0 * r]));
    }

    #[test]
    fn novelty_flips_once_along_a_ray() {
        let m = model_with_rule(2, 1, &[0.0, 0.0, 0.0], 4);
        let flips = (0..400)
            .map(|i| novelty_criterion(&m.rb, &[i as f64 * 0.05, i as f64 * 0.02]))
            .collect::<Vec<_>>()
            .windows(2)
            .filter(|w| w[0] != w[1])
            .count();
        assert_eq!(flips, 1);
    }

    #[test]
    fn instability_examples() {
        let fresh = model_with_rule(1, 1, &[0.0, 0.0], 1);
        assert!(param_instability(&fresh, &[0.1], 0.075, 1.0).unwrap());
        let mut mature = fresh.clone();
        let rule = &mut mature.rb.rules[0];
        rule.inv_hessian = DMatrix::identity(2, 2) * 1e-4;
        assert!(!param_instability(&mature, &[0.1], 0.075, 1.0).unwrap());
        assert_eq!(LearnConfig::default().thresh3, 0.075);
    }

    #[test]
    fn select_compositions() {
        let mut m = model_with_rule(1, 6, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 50);
        m.rb.rules[0].inv_hessian = DMatrix::identity(2, 2) * 1e-6;
        let mut b = state(BudgetMode::LabelsBased, 1.0, 6);
        let quiet = select(&m, &[0.0], &mut b).unwrap();
        assert_eq!(quiet.verdict, Verdict::None);
        assert!(quiet.trigger.is_empty());

        for c in [2, 5] {
            m.rb.rules[0].consequents[(1, c)] = 0.5;
        }
        let partial = select(&m, &[0.0], &mut b).unwrap();
        assert_eq!(partial.verdict, Verdict::Partial(vec![2, 5]));
        assert_eq!(partial.trigger, vec![Trigger::OutputUncertainty]);
        assert_eq!(b.selected, 2);

        let novel = select(&m, &[1e6], &mut b).unwrap();
        assert_eq!(novel.verdict, Verdict::Full);
        assert_eq!(novel.trigger, vec![Trigger::Novelty]);

        let mut s = state(BudgetMode::SamplesBased, 1.0, 6);
        let full = select(&m, &[0.0], &mut s).unwrap();
        assert_eq!(full.verdict, Verdict::Full);
    }

    #[test]
    fn selection_is_deterministic() {
        let m = model_with_rule(1, 1, &[0.0, 0.0], 3);
        let mut a = state(BudgetMode::SamplesBased, 0.5, 1);
        let mut b = a.clone();
        for i in 0..50 {
            let x = [i as f64 * 0.3 - 7.0];
            assert_eq!(select(&m, &x, &mut a).unwrap(), select(&m, &x, &mut b).unwrap());
        }
    }

    proptest! {
        #[test]
        fn budget_never_overshoots(budget in 0.01..1.0f64, labels in prop::collection::vec(any::<bool>(), 1..300),
                                   costs in prop::collection::vec(1usize..=4, 300), partial in any::<bool>()) {
            let mode = if partial { BudgetMode::LabelsBased } else { BudgetMode::SamplesBased };
            let mut b = state(mode, budget, 4);
            for (i, want) in labels.into_iter().enumerate() {
                let cost = if partial { costs[i] } else { 1 };
                let cand = want.then_some((Verdict::Full, Trigger::Novelty, cost));
                settle(&mut b, cand);
                prop_assert!(b.spent_fraction() <= budget);
                prop_assert!(b.adapt >= 0.2 && b.adapt <= 2.0);
            }
        }
    }
}
