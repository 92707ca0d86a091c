//! Evolving antecedent structure: the rule-evolution criterion, rule birth,
//! winner update by rank-one inverse-covariance recursion, and rule merging.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::consequent::{anti_correlation, incremental_step};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{max_eigenvalue, spd_inverse, symmetrize};
use crate::rulebase::{mahalanobis, Rule, RuleBase};

/// Conditioning bound of the scaled inverse covariance.
pub const PRECISION_CEILING: f64 = 1e8;
/// Variance added per squared range unit when the ceiling is hit.
pub const COVARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvolutionKind {
    Evolved(usize),
    Updated(usize),
    Merged { kept: usize, removed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionOutcome {
    pub kind: EvolutionKind,
    pub min_distance: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionCheck {
    pub win: usize,
    pub ma_win: f64,
    pub r_win: f64,
    pub fires: bool,
}

/// `fac · d^(1/√2) / (1 − 1/(k+1))^m`.
pub fn tolerance_radius(fac: f64, dim: usize, support: usize, m: f64) -> f64 {
    let k = support as f64;
    fac * (dim as f64).powf(std::f64::consts::FRAC_1_SQRT_2) / (1.0 - 1.0 / (k + 1.0)).powf(m)
}

/// Nearest rule to `z` (lowest index on ties) with its distance.
fn nearest(rules: &[Rule], z: &[f64]) -> Result<(usize, f64)> {
    let mut best = (0, f64::INFINITY);
    for (i, r) in rules.iter().enumerate() {
        let d = mahalanobis(r, z)?;
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}

pub fn evolution_check(rb: &RuleBase, z: &[f64]) -> Result<EvolutionCheck> {
    check_dim(rb.dim(), z.len())?;
    if rb.rules.is_empty() {
        return Err(Error::InvalidConfig("rule base has no rules".into()));
    }
    let (win, ma_win) = nearest(&rb.rules, z)?;
    let r_win = tolerance_radius(rb.config.fac, rb.dim(), rb.rules[win].support, rb.config.m);
    Ok(EvolutionCheck {
        win,
        ma_win,
        r_win,
        fires: ma_win > r_win,
    })
}

/// Diagonal inverse covariance of a newborn rule.
pub fn birth_precision(rb: &RuleBase) -> DMatrix<f64> {
    let cfg = &rb.config;
    let diag = DVector::from_fn(rb.dim(), |j, _| {
        let range = rb.tracker.range(j);
        let eps = cfg.eps_fraction * range;
        let sigma = rb.tracker.std(j).max(cfg.sigma_floor_fraction * range);
        1.0 / (eps * sigma)
    });
    DMatrix::from_diagonal(&diag)
}

/// Appends a rule centered at `(x, y)` and trains its consequents on that
/// sample with full weight. Returns the new rule's index.
pub fn evolve_rule(rb: &mut RuleBase, x: &[f64], y: &[f64]) -> Result<usize> {
    evolve_rule_masked(rb, x, y, None)
}

pub(crate) fn evolve_rule_masked(
    rb: &mut RuleBase,
    x: &[f64],
    y: &[f64],
    mask: Option<&[bool]>,
) -> Result<usize> {
    check_dim(rb.p, x.len())?;
    check_dim(rb.k, y.len())?;
    let z: Vec<f64> = x.iter().chain(y).cloned().collect();
    let consequents = if rb.rules.is_empty() {
        DMatrix::zeros(rb.p + 1, rb.k)
    } else {
        let (near, _) = nearest(&rb.rules, &z)?;
        rb.rules[near].consequents.clone()
    };
    let mut rule = Rule::new(
        DVector::from_vec(z),
        birth_precision(rb),
        consequents,
        rb.config.p0_scale,
    )?;
    incremental_step(&mut rule, x, y, 1.0, &rb.config, mask)?;
    rb.rules.push(rule);
    Ok(rb.rules.len() - 1)
}

/// Adds an antecedent-only rule (consequents left at zero).
pub(crate) fn evolve_antecedent(rb: &mut RuleBase, z: &[f64]) -> Result<usize> {
    check_dim(rb.dim(), z.len())?;
    let rule = Rule::new(
        DVector::from_column_slice(z),
        birth_precision(rb),
        DMatrix::zeros(rb.p + 1, rb.k),
        rb.config.p0_scale,
    )?;
    rb.rules.push(rule);
    Ok(rb.rules.len() - 1)
}

/// Moves the winner's center toward `z` and updates its inverse covariance
/// with the Sherman–Morrison form of
/// `Σₙ = ((n₀+n−2)·Σₙ₋₁ + (n−1)/n · uuᵀ) / (n₀+n−1)`, `u = z − c_old`.
pub fn update_winner(rb: &mut RuleBase, win: usize, z: &[f64]) -> Result<()> {
    rb.check_index(win)?;
    check_dim(rb.dim(), z.len())?;
    let n0 = rb.prior_weight();
    let ranges: Vec<f64> = (0..rb.dim()).map(|j| rb.tracker.range(j)).collect();
    let rule = &mut rb.rules[win];
    rule.support += 1;
    let n = rule.support as f64;
    let u = DVector::from_fn(z.len(), |j, _| z[j] - rule.center[j]);
    rule.center.axpy(1.0 / n, &u, 1.0);

    let a = (n0 + n - 2.0) / (n0 + n - 1.0);
    let b = (n - 1.0) / (n * (n0 + n - 1.0));
    let ratio = b / a;
    let siu = &rule.inv_cov * &u;
    let denom = 1.0 + ratio * u.dot(&siu);
    rule.inv_cov.ger(-ratio / denom, &siu, &siu, 1.0);
    rule.inv_cov /= a;
    symmetrize(&mut rule.inv_cov);
    guard_precision(&mut rule.inv_cov, &ranges);
    Ok(())
}

/// Adds `COVARIANCE_FLOOR·range²` to the implied covariance when the
/// range-scaled precision exceeds `PRECISION_CEILING`.
fn guard_precision(inv_cov: &mut DMatrix<f64>, ranges: &[f64]) {
    let scaled_trace: f64 = (0..ranges.len())
        .map(|j| inv_cov[(j, j)] * ranges[j] * ranges[j])
        .sum();
    if scaled_trace <= PRECISION_CEILING {
        return;
    }
    let scaled = DMatrix::from_fn(ranges.len(), ranges.len(), |i, j| {
        inv_cov[(i, j)] * ranges[i] * ranges[j]
    });
    if max_eigenvalue(&scaled) <= PRECISION_CEILING {
        return;
    }
    if let Some(mut cov) = spd_inverse(inv_cov) {
        for (j, r) in ranges.iter().enumerate() {
            cov[(j, j)] += COVARIANCE_FLOOR * r * r;
        }
        if let Some(inv) = spd_inverse(&cov) {
            *inv_cov = inv;
        }
    }
}

/// Both directional distances between the centers of rules `i` and `k`.
pub fn pair_distances(rb: &RuleBase, i: usize, k: usize) -> Result<(f64, f64)> {
    rb.check_index(i)?;
    rb.check_index(k)?;
    let (ri, rk) = (&rb.rules[i], &rb.rules[k]);
    Ok((
        mahalanobis(ri, rk.center.as_slice())?,
        mahalanobis(rk, ri.center.as_slice())?,
    ))
}

/// Each center lies within `κ` times the other rule's tolerance radius.
/// Returns the larger of the two distance-to-radius ratios.
fn overlapping(rb: &RuleBase, i: usize, k: usize) -> Option<f64> {
    let (dik, dki) = pair_distances(rb, i, k).ok()?;
    let cfg = &rb.config;
    let radius = |r: usize| {
        cfg.merge_kappa * tolerance_radius(cfg.fac, rb.dim(), rb.rules[r].support, cfg.m)
    };
    let ratio = (dik / radius(i)).max(dki / radius(k));
    (ratio <= 1.0).then_some(ratio)
}

/// The overlapping pair with the smallest distance, if any.
pub fn merge_check(rb: &RuleBase) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..rb.rules.len() {
        for k in (i + 1)..rb.rules.len() {
            if let Some(d) = overlapping(rb, i, k) {
                if best.is_none_or(|b| d < b.2) {
                    best = Some((i, k, d));
                }
            }
        }
    }
    best.map(|(i, k, _)| (i, k))
}

/// Like [`merge_check`] but only for pairs containing rule `idx`.
pub fn merge_check_with(rb: &RuleBase, idx: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for other in (0..rb.rules.len()).filter(|&o| o != idx) {
        let (i, k) = (idx.min(other), idx.max(other));
        if let Some(d) = overlapping(rb, i, k) {
            if best.is_none_or(|b| d < b.2) {
                best = Some((i, k, d));
            }
        }
    }
    best.map(|(i, k, _)| (i, k))
}

/// `W_i + k_k/(k_i+k_k) · ρ · (W_k − W_i)`.
pub fn merge_consequents(
    w_i: &DMatrix<f64>,
    w_k: &DMatrix<f64>,
    support_i: usize,
    support_k: usize,
    rho: f64,
) -> DMatrix<f64> {
    let share = support_k as f64 / (support_i + support_k) as f64;
    w_i + (w_k - w_i) * (share * rho)
}

/// Mean over labels of `1 − angle/π` between the hyperplane normals.
pub fn consequent_similarity(w_i: &DMatrix<f64>, w_k: &DMatrix<f64>) -> f64 {
    let p = w_i.nrows() - 1;
    let k = w_i.ncols();
    let mut total = 0.0;
    for c in 0..k {
        let (mut dot, mut ni, mut nk) = (1.0, 1.0, 1.0);
        for j in 0..p {
            dot += w_i[(j, c)] * w_k[(j, c)];
            ni += w_i[(j, c)] * w_i[(j, c)];
            nk += w_k[(j, c)] * w_k[(j, c)];
        }
        let cos = (dot / (ni * nk).sqrt()).clamp(-1.0, 1.0);
        total += 1.0 - cos.acos() / std::f64::consts::PI;
    }
    total / k as f64
}

/// `1` when the consequents are at least as similar as the antecedents,
/// `0` for contradictory rules.
pub fn consistency(w_i: &DMatrix<f64>, w_k: &DMatrix<f64>, center_distance: f64) -> f64 {
    let s_ante = (-0.5 * center_distance * center_distance).exp();
    if consequent_similarity(w_i, w_k) >= s_ante {
        1.0
    } else {
        0.0
    }
}

/// Fuses rules `i` and `k` into the one with larger support (`i` on ties).
/// Returns the index of the fused rule after removal.
pub fn merge_rules(rb: &mut RuleBase, i: usize, k: usize) -> Result<usize> {
    rb.check_index(i)?;
    rb.check_index(k)?;
    if i == k {
        return Err(Error::InvalidConfig("cannot merge a rule with itself".into()));
    }
    let (keep, gone) = if rb.rules[k].support > rb.rules[i].support {
        (k, i)
    } else {
        (i, k)
    };
    let (dik, dki) = pair_distances(rb, keep, gone)?;
    let omega = rb.config.p0_scale;
    let removed = rb.rules.remove(gone);
    let keep = if gone < keep { keep - 1 } else { keep };
    let rule = &mut rb.rules[keep];

    let rho = consistency(&rule.consequents, &removed.consequents, dik.max(dki));
    rule.consequents = merge_consequents(
        &rule.consequents,
        &removed.consequents,
        rule.support,
        removed.support,
        rho,
    );

    let total = (rule.support + removed.support) as f64;
    let (wa, wb) = (rule.support as f64 / total, removed.support as f64 / total);
    let cov_a = spd_inverse(&rule.inv_cov).ok_or(Error::SingularHessian)?;
    let cov_b = spd_inverse(&removed.inv_cov).ok_or(Error::SingularHessian)?;
    let delta = &rule.center - &removed.center;
    let cov = cov_a * wa + cov_b * wb + &delta * delta.transpose() * (wa * wb);
    rule.inv_cov = spd_inverse(&cov).ok_or(Error::SingularHessian)?;
    rule.center = &rule.center * wa + &removed.center * wb;
    rule.support += removed.support;

    let (sa, sb) = (rule.weight_sum, removed.weight_sum);
    let s = sa + sb;
    if s > 0.0 {
        let dm = &removed.wmean_y - &rule.wmean_y;
        rule.wcov_y += &removed.wcov_y + &dm * dm.transpose() * (sa * sb / s);
        symmetrize(&mut rule.wcov_y);
        rule.wvar_y = rule.wcov_y.diagonal();
        rule.wmean_y = (&rule.wmean_y * sa + &removed.wmean_y * sb) / s;
    }
    rule.weight_sum = s;
    rule.wsum_y_sq += removed.wsum_y_sq;
    rule.info_matrix += &removed.info_matrix;
    rule.hessian += &removed.hessian;
    rule.anti_corr = anti_correlation(&rule.wvar_y, &rule.wcov_y);

    let n_reg = rule.consequents.nrows();
    let prior = DMatrix::<f64>::identity(n_reg, n_reg) / omega;
    let prec_a = spd_inverse(&rule.inv_hessian).unwrap_or_else(|| &rule.hessian + &prior);
    let prec_b = spd_inverse(&removed.inv_hessian).unwrap_or_else(|| &removed.hessian + &prior);
    let mut prec = prec_a + prec_b - &prior;
    symmetrize(&mut prec);
    rule.inv_hessian = match spd_inverse(&prec) {
        Some(p) => p,
        None => {
            prec = &rule.hessian + &prior;
            spd_inverse(&prec).ok_or(Error::SingularHessian)?
        }
    };
    rule.anchor = &prec * &rule.consequents - &rule.info_matrix;
    rule.step_scale = 1.0;
    rb.merges += 1;
    Ok(keep)
}
