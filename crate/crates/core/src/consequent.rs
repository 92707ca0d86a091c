//! Consequent learning under the three-term objective
//!
//! ```text
//! J(W) = ½‖(Y − WᵀRᵀ)√Q‖²_F + α‖W₁..ₚ‖₁ + (β/2)·tr(A WᵀW)
//! ```
//!
//! solved by proximal gradient: a batch solver started from weighted least
//! squares, and a single-pass solver that follows RFWLS with one proximal
//! correction per sample.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{eigen_range, max_eigenvalue, power_max_eigenvalue, spd_inverse, symmetrize};
use crate::rulebase::{regressor, HessianSource, LearnConfig, Rule, ACTIVATION_FLOOR};

/// Variances below this are treated as zero when forming correlations.
pub const VARIANCE_FLOOR: f64 = 1e-12;
/// Condition number above which the start solution is ridge-regularized.
pub const RIDGE_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub wls: f64,
    pub lasso: f64,
    pub corr: f64,
    pub total: f64,
}

/// Weighted correlation coefficient of two label columns.
pub fn weighted_correlation(yc: &[f64], yd: &[f64], weights: &[f64]) -> Result<f64> {
    check_dim(yc.len(), yd.len())?;
    check_dim(yc.len(), weights.len())?;
    let s: f64 = weights.iter().sum();
    if yc.is_empty() || !(s > 0.0) {
        return Ok(0.0);
    }
    let mc = yc.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / s;
    let md = yd.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / s;
    let (mut vc, mut vd, mut cov) = (0.0, 0.0, 0.0);
    for i in 0..yc.len() {
        let (a, b) = (yc[i] - mc, yd[i] - md);
        vc += weights[i] * a * a;
        vd += weights[i] * b * b;
        cov += weights[i] * a * b;
    }
    Ok(correlation_from(cov, vc, vd))
}

fn correlation_from(cov: f64, var_c: f64, var_d: f64) -> f64 {
    if var_c < VARIANCE_FLOOR || var_d < VARIANCE_FLOOR {
        0.0
    } else {
        (cov / (var_c * var_d).sqrt()).clamp(-1.0, 1.0)
    }
}

/// `a_cd = 1 − corr_cd` from unnormalized weighted (co)variances.
pub fn anti_correlation(wvar: &DVector<f64>, wcov: &DMatrix<f64>) -> DMatrix<f64> {
    let k = wvar.len();
    DMatrix::from_fn(k, k, |c, d| {
        1.0 - correlation_from(wcov[(c, d)], wvar[c], wvar[d])
    })
}

/// `x − t`, `x + t` or `0`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Entrywise soft threshold; the last (intercept) row passes through.
pub fn soft_threshold_matrix(x: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let last = x.nrows().saturating_sub(1);
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        if i == last {
            x[(i, j)]
        } else {
            soft_threshold(x[(i, j)], t)
        }
    })
}

/// `H·W − info + β·W·A`.
pub fn gradient(
    w: &DMatrix<f64>,
    hessian: &DMatrix<f64>,
    info: &DMatrix<f64>,
    a: &DMatrix<f64>,
    beta: f64,
) -> Result<DMatrix<f64>> {
    check_dim(hessian.ncols(), w.nrows())?;
    check_dim(w.shape().0 * w.shape().1, info.len())?;
    check_dim(w.ncols(), a.nrows())?;
    let mut g = hessian * w - info;
    if beta != 0.0 {
        g += (w * a) * beta;
    }
    Ok(g)
}

/// `sqrt(λmax(H) + λmax(βA))`.
pub fn lipschitz(hessian: &DMatrix<f64>, a: &DMatrix<f64>, beta: f64) -> Result<f64> {
    let corr = if beta == 0.0 {
        0.0
    } else {
        max_eigenvalue(&(a * beta))
    };
    lipschitz_from(max_eigenvalue(hessian), corr)
}

fn lipschitz_from(lambda_h: f64, lambda_a: f64) -> Result<f64> {
    let lip = (lambda_h + lambda_a.max(0.0)).sqrt();
    if lip.is_finite() {
        Ok(lip.max(f64::MIN_POSITIVE))
    } else {
        Err(Error::NonFiniteInput("Lipschitz constant"))
    }
}

fn lasso_norm(w: &DMatrix<f64>) -> f64 {
    let rows = w.nrows().saturating_sub(1);
    w.rows(0, rows).iter().map(|v| v.abs()).sum()
}

/// Quadratic-plus-penalty objective in sufficient-statistics form:
/// `½c − tr(Wᵀ lin) + ½tr(WᵀHW) + (β/2)tr(AWᵀW) + α‖W₁..ₚ‖₁`.
struct Problem<'a> {
    hessian: &'a DMatrix<f64>,
    lin: &'a DMatrix<f64>,
    a: &'a DMatrix<f64>,
    constant: f64,
    alpha: f64,
    beta: f64,
}

impl Problem<'_> {
    fn terms(&self, w: &DMatrix<f64>) -> ObjectiveTerms {
        let hw = self.hessian * w;
        let wls = 0.5 * self.constant - w.dot(self.lin) + 0.5 * w.dot(&hw);
        let corr = if self.beta == 0.0 {
            0.0
        } else {
            0.5 * self.beta * w.dot(&(w * self.a))
        };
        let lasso = self.alpha * lasso_norm(w);
        ObjectiveTerms {
            wls,
            lasso,
            corr,
            total: wls + lasso + corr,
        }
    }

    fn gradient(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = self.hessian * w - self.lin;
        if self.beta != 0.0 {
            g += (w * self.a) * self.beta;
        }
        g
    }
}

struct ProxOutcome {
    w: DMatrix<f64>,
    iterations: usize,
}

/// Proximal gradient with step `scale/lip`; rejected steps halve `scale`,
/// which persists across calls.
fn proximal_loop(
    prob: &Problem<'_>,
    w0: DMatrix<f64>,
    lip: f64,
    scale: &mut f64,
    cfg: &LearnConfig,
    max_iters: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> ProxOutcome {
    let mut w = w0;
    let mut j = prob.terms(&w).total;
    if let Some(t) = trace.as_deref_mut() {
        t.push(j);
    }
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let g = prob.gradient(&w);
        let mut accepted = None;
        for halving in 0..=cfg.max_halvings {
            let step = *scale / lip;
            let cand = soft_threshold_matrix(&(&w - &g * step), prob.alpha * step);
            let jc = prob.terms(&cand).total;
            if jc <= j {
                accepted = Some((cand, jc, halving == 0));
                break;
            }
            if (&cand - &w).norm() < cfg.prox_tol {
                break;
            }
            *scale *= 0.5;
        }
        match accepted {
            Some((cand, jc, first_try)) => {
                let moved = (&cand - &w).norm();
                w = cand;
                j = jc;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(j);
                }
                if first_try {
                    *scale = (*scale * 2.0).min(1.0);
                }
                if moved < cfg.prox_tol {
                    break;
                }
            }
            None if (*scale) < f64::MIN_POSITIVE => break,
            None => {
                if let Some(t) = trace.as_deref_mut() {
                    t.push(j);
                }
            }
        }
    }
    ProxOutcome { w, iterations }
}

/// Weighted sufficient statistics of one rule's batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    /// `RᵀQR`.
    pub hessian: DMatrix<f64>,
    /// `RᵀQY`.
    pub info: DMatrix<f64>,
    /// `Σ q ‖y‖²`.
    pub y_sq: f64,
    pub weight_sum: f64,
    pub wmean: DVector<f64>,
    pub wvar: DVector<f64>,
    pub wcov: DMatrix<f64>,
}

impl BatchStats {
    /// `r` is `N × (p+1)`, `y` is `N × K`, `q` holds the `N` weights.
    pub fn from_data(r: &DMatrix<f64>, y: &DMatrix<f64>, q: &[f64]) -> Result<BatchStats> {
        check_dim(r.nrows(), y.nrows())?;
        check_dim(r.nrows(), q.len())?;
        if r.nrows() == 0 {
            return Err(Error::InvalidConfig("batch_fit needs at least one sample".into()));
        }
        if r.iter().chain(y.iter()).chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("batch data"));
        }
        let (n_reg, k) = (r.ncols(), y.ncols());
        let mut qr = r.clone();
        for (i, &w) in q.iter().enumerate() {
            qr.row_mut(i).scale_mut(w);
        }
        let mut hessian = qr.transpose() * r;
        symmetrize(&mut hessian);
        let info = qr.transpose() * y;
        let weight_sum: f64 = q.iter().sum();
        let mut y_sq = 0.0;
        let mut wmean = DVector::zeros(k);
        for (i, &w) in q.iter().enumerate() {
            y_sq += w * y.row(i).norm_squared();
            wmean += y.row(i).transpose() * w;
        }
        if weight_sum > 0.0 {
            wmean /= weight_sum;
        }
        let mut wcov = DMatrix::zeros(k, k);
        for (i, &w) in q.iter().enumerate() {
            let dev = y.row(i).transpose() - &wmean;
            wcov += &dev * dev.transpose() * w;
        }
        let wvar = wcov.diagonal();
        debug_assert_eq!(hessian.nrows(), n_reg);
        Ok(BatchStats {
            hessian,
            info,
            y_sq,
            weight_sum,
            wmean,
            wvar,
            wcov,
        })
    }

    pub fn anti_correlation(&self) -> DMatrix<f64> {
        anti_correlation(&self.wvar, &self.wcov)
    }
}

/// Direct (residual-form) evaluation of the objective on batch data.
pub fn objective(
    w: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DMatrix<f64>,
    q: &[f64],
    a: &DMatrix<f64>,
    alpha: f64,
    beta: f64,
) -> ObjectiveTerms {
    let resid = y - r * w;
    let wls = 0.5
        * (0..resid.nrows())
            .map(|i| q[i] * resid.row(i).norm_squared())
            .sum::<f64>();
    let lasso = alpha * lasso_norm(w);
    let corr = 0.5 * beta * w.dot(&(w * a));
    ObjectiveTerms {
        wls,
        lasso,
        corr,
        total: wls + lasso + corr,
    }
}

#[derive(Debug, Clone)]
pub struct BatchFit {
    pub w: DMatrix<f64>,
    /// Ridge added to `RᵀQR` for the start solution and kept in the objective.
    pub gamma: f64,
    pub lipschitz: f64,
    pub iterations: usize,
    /// Objective after the start solution and after every iteration.
    pub objective_trace: Vec<f64>,
}

/// Weighted least squares start plus proximal refinement on raw data.
pub fn batch_fit(
    r: &DMatrix<f64>,
    y: &DMatrix<f64>,
    q: &[f64],
    cfg: &LearnConfig,
) -> Result<BatchFit> {
    batch_fit_stats(&BatchStats::from_data(r, y, q)?, cfg)
}

/// Ridge parameter from the condition number of `hessian`.
pub fn ridge_gamma(hessian: &DMatrix<f64>) -> (f64, f64) {
    let (lo, hi) = eigen_range(hessian);
    let gamma = if hi <= 0.0 {
        1.0
    } else if lo <= 0.0 || hi / lo > RIDGE_CONDITION {
        hi / RIDGE_CONDITION
    } else {
        0.0
    };
    (gamma, hi)
}

/// Parts of a batch fit that do not depend on `α` and `β`.
#[derive(Debug, Clone)]
pub struct PreparedFit {
    /// `RᵀQR + γI`.
    hessian: DMatrix<f64>,
    w0: DMatrix<f64>,
    a: DMatrix<f64>,
    /// `λmax(A)`; `λmax(βA) = β·λmax(A)` for `β ≥ 0`.
    lambda_a: f64,
    gamma: f64,
    lambda_max: f64,
}

impl PreparedFit {
    pub fn new(stats: &BatchStats) -> Result<Self> {
        let (gamma, lambda_max) = ridge_gamma(&stats.hessian);
        let mut h = stats.hessian.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += gamma;
        }
        let chol = h.clone().cholesky().ok_or(Error::SingularHessian)?;
        let w0 = chol.solve(&stats.info);
        if w0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("weighted least squares start"));
        }
        let a = stats.anti_correlation();
        let lambda_a = max_eigenvalue(&a);
        Ok(PreparedFit {
            hessian: h,
            w0,
            a,
            lambda_a,
            gamma,
            lambda_max,
        })
    }

    pub fn fit(&self, stats: &BatchStats, cfg: &LearnConfig) -> Result<BatchFit> {
        let lip = lipschitz_from(self.lambda_max + self.gamma, cfg.beta * self.lambda_a)?;
        let prob = Problem {
            hessian: &self.hessian,
            lin: &stats.info,
            a: &self.a,
            constant: stats.y_sq,
            alpha: cfg.alpha,
            beta: cfg.beta,
        };
        let mut trace = Vec::new();
        let mut scale = 1.0;
        let outcome = if cfg.alpha == 0.0 && cfg.beta == 0.0 {
            trace.push(prob.terms(&self.w0).total);
            ProxOutcome {
                w: self.w0.clone(),
                iterations: 0,
            }
        } else {
            proximal_loop(&prob, self.w0.clone(), lip, &mut scale, cfg, cfg.max_prox_iters, Some(&mut trace))
        };
        debug_assert!(trace.windows(2).all(|p| p[1] <= p[0]));
        Ok(BatchFit {
            w: outcome.w,
            gamma: self.gamma,
            lipschitz: lip,
            iterations: outcome.iterations,
            objective_trace: trace,
        })
    }
}

pub fn batch_fit_stats(stats: &BatchStats, cfg: &LearnConfig) -> Result<BatchFit> {
    PreparedFit::new(stats)?.fit(stats, cfg)
}

/// `tr(P_old) − tr(P_new)` of one unsupervised `P` update.
pub fn trace_drop(p: &DMatrix<f64>, r: &DVector<f64>, psi: f64) -> f64 {
    let psi = psi.max(ACTIVATION_FLOOR);
    let pr = p * r;
    pr.norm_squared() / (1.0 / psi + r.dot(&pr))
}

/// One RFWLS step on `(r, y)` with weight `psi`.
pub fn rfwls_step(rule: &mut Rule, r: &DVector<f64>, y: &[f64], psi: f64) -> Result<()> {
    check_dim(rule.consequents.nrows(), r.len())?;
    check_dim(rule.k(), y.len())?;
    let psi = psi.max(ACTIVATION_FLOOR);
    let pr = &rule.inv_hessian * r;
    let denom = 1.0 / psi + r.dot(&pr);
    let gain = &pr / denom;
    let pred = rule.consequents.transpose() * r;
    let err = DVector::from_fn(y.len(), |c, _| y[c] - pred[c]);
    rule.consequents += &gain * err.transpose();
    rule.inv_hessian -= &gain * pr.transpose();
    symmetrize(&mut rule.inv_hessian);
    if rule.consequents.iter().any(|v| !v.is_finite())
        || rule.inv_hessian.iter().any(|v| !v.is_finite())
    {
        return Err(Error::NonFiniteInput("RFWLS update"));
    }
    Ok(())
}

/// Weighted mean, variance and covariance recursions.
pub fn update_weighted_stats(rule: &mut Rule, y: &[f64], psi: f64) {
    let psi = psi.max(ACTIVATION_FLOOR);
    let k = y.len();
    let old: Vec<f64> = if rule.weight_sum == 0.0 {
        y.to_vec()
    } else {
        rule.wmean_y.iter().cloned().collect()
    };
    rule.weight_sum += psi;
    let new: Vec<f64> = (0..k)
        .map(|c| old[c] + psi * (y[c] - old[c]) / rule.weight_sum)
        .collect();
    for c in 0..k {
        rule.wmean_y[c] = new[c];
        rule.wvar_y[c] += psi * (y[c] - old[c]) * (y[c] - new[c]);
        for d in 0..k {
            rule.wcov_y[(c, d)] += psi * (y[c] - old[c]) * (y[d] - new[d]);
        }
    }
    symmetrize(&mut rule.wcov_y);
    for c in 0..k {
        rule.wcov_y[(c, c)] = rule.wvar_y[c];
    }
}

/// `info += ψ·r·yᵀ`.
pub fn update_info_matrix(rule: &mut Rule, r: &DVector<f64>, y: &[f64], psi: f64) {
    let psi = psi.max(ACTIVATION_FLOOR);
    for (c, &yc) in y.iter().enumerate() {
        let s = psi * yc;
        if s != 0.0 {
            rule.info_matrix.column_mut(c).axpy(s, r, 1.0);
        }
    }
}

/// `RᵀQR` for the proximal step.
pub fn refreshed_hessian(rule: &Rule, cfg: &LearnConfig) -> DMatrix<f64> {
    let from_stats = || {
        let mut h = rule.hessian.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += 1.0 / cfg.p0_scale;
        }
        h
    };
    match cfg.hessian_source {
        HessianSource::InverseOfP => spd_inverse(&rule.inv_hessian).unwrap_or_else(from_stats),
        HessianSource::ZeroMeanStatistics => from_stats(),
    }
}

/// Objective terms of the incremental problem at the rule's current `W`.
pub fn incremental_objective(rule: &Rule, cfg: &LearnConfig) -> ObjectiveTerms {
    let h = refreshed_hessian(rule, cfg);
    let lin = &rule.info_matrix + &rule.anchor;
    Problem {
        hessian: &h,
        lin: &lin,
        a: &rule.anti_corr,
        constant: rule.wsum_y_sq,
        alpha: cfg.alpha,
        beta: cfg.beta,
    }
    .terms(&rule.consequents)
}

/// One incremental learning step for sample `(x, y)` with weight `psi`.
///
/// Label columns with `mask[c] == false` are not annotated: their RFWLS and
/// information-matrix targets are the rule's own current output, so only the
/// shared gain and `P` move for them.
pub fn incremental_step(
    rule: &mut Rule,
    x: &[f64],
    y: &[f64],
    psi: f64,
    cfg: &LearnConfig,
    mask: Option<&[bool]>,
) -> Result<()> {
    check_dim(rule.p(), x.len())?;
    check_dim(rule.k(), y.len())?;
    let psi = psi.max(ACTIVATION_FLOOR);
    let r = regressor(x);
    let targets: Vec<f64> = match mask {
        None => y.to_vec(),
        Some(m) => {
            check_dim(y.len(), m.len())?;
            let own = rule.consequents.transpose() * &r;
            (0..y.len()).map(|c| if m[c] { y[c] } else { own[c] }).collect()
        }
    };

    rfwls_step(rule, &r, &targets, psi)?;
    update_weighted_stats(rule, y, psi);
    rule.anti_corr = anti_correlation(&rule.wvar_y, &rule.wcov_y);
    rule.hessian.ger(psi, &r, &r, 1.0);
    rule.wsum_y_sq += psi * targets.iter().map(|v| v * v).sum::<f64>();

    let needs_prox = (cfg.alpha > 0.0 || cfg.beta > 0.0) && cfg.incremental_prox_iters > 0;
    let h = needs_prox.then(|| refreshed_hessian(rule, cfg));
    let lip = match &h {
        Some(h) => {
            let lambda_h = power_max_eigenvalue(h, &mut rule.lip_guess, 100);
            let lambda_a = if cfg.beta == 0.0 {
                0.0
            } else {
                max_eigenvalue(&(&rule.anti_corr * cfg.beta))
            };
            Some(lipschitz_from(lambda_h, lambda_a)?)
        }
        None => None,
    };
    update_info_matrix(rule, &r, &targets, psi);

    if let (Some(h), Some(lip)) = (h, lip) {
        let lin = &rule.info_matrix + &rule.anchor;
        let prob = Problem {
            hessian: &h,
            lin: &lin,
            a: &rule.anti_corr,
            constant: rule.wsum_y_sq,
            alpha: cfg.alpha,
            beta: cfg.beta,
        };
        let mut scale = rule.step_scale;
        let out = proximal_loop(
            &prob,
            rule.consequents.clone(),
            lip,
            &mut scale,
            cfg,
            cfg.incremental_prox_iters,
            None,
        );
        rule.step_scale = scale.max(f64::MIN_POSITIVE);
        rule.consequents = out.w;
    }
    Ok(())
}

/// Resets `P` and the anchor so that the current `W` is the stationary point
/// of the incremental objective with α = β = 0.
pub fn reanchor(rule: &mut Rule, cfg: &LearnConfig) -> Result<()> {
    let prec = prior_precision(&rule.hessian, cfg);
    let inv = spd_inverse(&prec).ok_or(Error::SingularHessian)?;
    reanchor_with(rule, &prec, inv);
    Ok(())
}

/// `hessian + I/ω`.
pub fn prior_precision(hessian: &DMatrix<f64>, cfg: &LearnConfig) -> DMatrix<f64> {
    let mut prec = hessian.clone();
    for i in 0..prec.nrows() {
        prec[(i, i)] += 1.0 / cfg.p0_scale;
    }
    prec
}

/// [`reanchor`] with a precomputed precision and its inverse.
pub fn reanchor_with(rule: &mut Rule, prec: &DMatrix<f64>, inv: DMatrix<f64>) {
    rule.inv_hessian = inv;
    rule.anchor = prec * &rule.consequents - &rule.info_matrix;
    rule.step_scale = 1.0;
}
