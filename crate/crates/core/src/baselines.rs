//! Comparison methods: one-versus-rest evolving classifiers and classifier
//! chaining, both built from single-output EFC-ML members trained with plain
//! RFWLS consequents.

use crate::error::{check_dim, Error, Result};
use crate::learner::{EfcMl, ModelDocument, Row, StreamLearner};
use crate::rulebase::{predict_crisp, LearnConfig};

/// Member configuration: no Lasso and no correlation term.
fn plain(cfg: &LearnConfig) -> LearnConfig {
    LearnConfig {
        alpha: 0.0,
        beta: 0.0,
        ..cfg.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneVsRestModel {
    pub members: Vec<EfcMl>,
}

impl OneVsRestModel {
    pub fn train(p: usize, k: usize, cfg: &LearnConfig, rows: &[Row]) -> Result<Self> {
        let cfg = plain(cfg);
        let members = (0..k)
            .map(|c| {
                let proj: Vec<Row> = rows.iter().map(|(x, y)| (x.clone(), vec![y[c]])).collect();
                EfcMl::train(p, 1, &cfg, &proj)
            })
            .collect::<Result<_>>()?;
        Ok(OneVsRestModel { members })
    }

    /// Untrained members that start learning from the first sample.
    pub fn empty(p: usize, k: usize, cfg: &LearnConfig) -> Result<Self> {
        let members = (0..k)
            .map(|_| EfcMl::new(p, 1, plain(cfg)))
            .collect::<Result<_>>()?;
        Ok(OneVsRestModel { members })
    }

    pub fn from_members(members: Vec<EfcMl>) -> Result<Self> {
        let p = members
            .first()
            .map(|m| m.rb.p)
            .ok_or_else(|| Error::InvalidConfig("one-versus-rest needs members".into()))?;
        for m in &members {
            check_dim(1, m.rb.k)?;
            check_dim(p, m.rb.p)?;
        }
        Ok(OneVsRestModel { members })
    }

    /// Continuous and crisp outputs.
    pub fn predict_both(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<u8>)> {
        let yhat = self.predict(x)?;
        let crisp = predict_crisp(&yhat);
        Ok((yhat, crisp))
    }
}

impl StreamLearner for OneVsRestModel {
    fn method(&self) -> &'static str {
        "ovr"
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.members
            .iter()
            .map(|m| Ok(m.predict(x)?[0]))
            .collect()
    }

    fn learn(&mut self, x: &[f64], y: &[u8]) -> Result<()> {
        check_dim(self.members.len(), y.len())?;
        for (m, &label) in self.members.iter_mut().zip(y) {
            m.learn(x, &[label])?;
        }
        Ok(())
    }

    fn rule_count(&self) -> usize {
        self.members.iter().map(|m| m.rule_count()).sum()
    }

    fn merge_count(&self) -> usize {
        self.members.iter().map(|m| m.merge_count()).sum()
    }

    fn to_document(&self) -> ModelDocument {
        ModelDocument::new(
            "ovr",
            false,
            None,
            self.members.iter().map(|m| m.rb.clone()).collect(),
        )
    }
}

/// Classifier chain; link `c` predicts label `order[c]` from the features
/// and the labels `order[..c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    pub links: Vec<EfcMl>,
    pub order: Vec<usize>,
}

fn augmented(x: &[f64], previous: impl Iterator<Item = f64>) -> Vec<f64> {
    x.iter().cloned().chain(previous).collect()
}

fn check_order(order: &[usize], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    check_dim(k, order.len())?;
    for &c in order {
        if c >= k || seen[c] {
            return Err(Error::InvalidConfig(format!(
                "chain order {order:?} is not a permutation of 0..{k}"
            )));
        }
        seen[c] = true;
    }
    Ok(())
}

impl ChainModel {
    /// Trains the links with the true labels of earlier links as inputs.
    pub fn train(
        p: usize,
        k: usize,
        cfg: &LearnConfig,
        rows: &[Row],
        order: Option<Vec<usize>>,
    ) -> Result<Self> {
        let order = order.unwrap_or_else(|| (0..k).collect());
        check_order(&order, k)?;
        let cfg = plain(cfg);
        let links = (0..k)
            .map(|c| {
                let proj: Vec<Row> = rows
                    .iter()
                    .map(|(x, y)| {
                        let input = augmented(x, order[..c].iter().map(|&l| y[l]));
                        (input, vec![y[order[c]]])
                    })
                    .collect();
                EfcMl::train(p + c, 1, &cfg, &proj)
            })
            .collect::<Result<_>>()?;
        Ok(ChainModel { links, order })
    }

    pub fn empty(p: usize, k: usize, cfg: &LearnConfig, order: Option<Vec<usize>>) -> Result<Self> {
        let order = order.unwrap_or_else(|| (0..k).collect());
        check_order(&order, k)?;
        let links = (0..k)
            .map(|c| EfcMl::new(p + c, 1, plain(cfg)))
            .collect::<Result<_>>()?;
        Ok(ChainModel { links, order })
    }

    pub fn from_links(links: Vec<EfcMl>, order: Vec<usize>) -> Result<Self> {
        check_order(&order, links.len())?;
        let p = links
            .first()
            .map(|l| l.rb.p)
            .ok_or_else(|| Error::InvalidConfig("chain needs links".into()))?;
        for (c, l) in links.iter().enumerate() {
            check_dim(p + c, l.rb.p)?;
            check_dim(1, l.rb.k)?;
        }
        Ok(ChainModel { links, order })
    }

    /// Input width of every link.
    pub fn link_inputs(&self) -> Vec<usize> {
        self.links.iter().map(|l| l.rb.p).collect()
    }

    pub fn predict_both(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<u8>)> {
        let yhat = self.predict(x)?;
        let crisp = predict_crisp(&yhat);
        Ok((yhat, crisp))
    }
}

impl StreamLearner for ChainModel {
    fn method(&self) -> &'static str {
        "chain"
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let k = self.links.len();
        let mut out = vec![0.0; k];
        let mut input = x.to_vec();
        for (c, link) in self.links.iter().enumerate() {
            let v = link.predict(&input)?[0];
            out[self.order[c]] = v;
            input.push(if v >= 0.5 { 1.0 } else { 0.0 });
        }
        Ok(out)
    }

    fn learn(&mut self, x: &[f64], y: &[u8]) -> Result<()> {
        check_dim(self.links.len(), y.len())?;
        let mut input = x.to_vec();
        for (c, link) in self.links.iter_mut().enumerate() {
            let target = y[self.order[c]];
            link.learn(&input, &[target])?;
            input.push(f64::from(target));
        }
        Ok(())
    }

    fn rule_count(&self) -> usize {
        self.links.iter().map(|l| l.rule_count()).sum()
    }

    fn merge_count(&self) -> usize {
        self.links.iter().map(|l| l.merge_count()).sum()
    }

    fn to_document(&self) -> ModelDocument {
        ModelDocument::new(
            "chain",
            false,
            Some(self.order.clone()),
            self.links.iter().map(|l| l.rb.clone()).collect(),
        )
    }
}
