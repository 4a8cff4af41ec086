//! Analysis-center state machine: broadcast coefficients, combine partner
//! SSCPs, solve, and finish with the post-convergence exchange.

use std::collections::BTreeMap;
use std::path::Path;

use log::{debug, info, warn};

use crate::config::ModelSpec;
use crate::error::{DraError, Result};
use crate::fit_stats::{
    anova_table, global_null_test, inference_table, linear_fit_stats, logistic_fit_stats, AnovaTable,
    CoefficientRow, FitReport, NullTest, SiteStatContribution,
};
use crate::model::Family;
use crate::protocol::{
    Bundle, CoordinatorLink, Outcome, ParamSet, BETA_FILE, BINS_FILE, BINS_FINE_FILE, PARAMS_FILE,
    ROBUST_SSCP_FILE, SITE_STATS_FILE, SITE_STATS_FINAL_FILE, SSCP_FILE,
};
use crate::scalar::Scalar;
use crate::solver::{
    combine_sscp, condition_diagnostic, estimate_dispersion, model_covariance, robust_covariance, solve_wls,
    spd_inverse, CovarianceBundle, IterationState, CONDITION_WARNING,
};
use crate::sscp::SscpMatrix;
use crate::summaries::{bins_from_csv, combine_bins, hl_expand, hl_test, roc_curve, BinSummary, HlResult, RocCurve};
use crate::wire;

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct FitOutputs<S> {
    pub spec: ModelSpec,
    pub labels: Vec<String>,
    pub beta: Vec<S>,
    pub state: IterationState<S>,
    pub covariance: CovarianceBundle<S>,
    pub coefficients: Vec<CoefficientRow<S>>,
    pub fit: FitReport<S>,
    pub anova: Option<AnovaTable<S>>,
    pub null_test: Option<NullTest<S>>,
    pub condition_number: S,
    pub site_stats: SiteStatContribution<S>,
    pub bins: Vec<BinSummary<S>>,
    pub bins_fine: Vec<BinSummary<S>>,
    pub roc: Option<RocCurve<S>>,
    pub hl: Option<HlResult<S>>,
    /// Broadcasts sent, including the final one.
    pub exchanges: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Iterate(usize),
    Final,
    Done,
    Failed,
}

#[derive(Debug)]
pub enum Step<S> {
    Broadcast(Bundle),
    Finished(Box<FitOutputs<S>>),
}

#[derive(Debug)]
pub struct Coordinator<S> {
    spec: ModelSpec,
    labels: Vec<String>,
    partners: Vec<u32>,
    phase: Phase,
    state: IterationState<S>,
    n_obs: BTreeMap<u32, S>,
    phi_working: S,
    exchanges: usize,
}

/// Reads a one-row CSV of starting values keyed by coefficient label.
pub fn load_initial_estimates<S: Scalar>(path: &Path, labels: &[String]) -> Result<Vec<S>> {
    let bytes = std::fs::read(path).map_err(|e| DraError::io(path, e))?;
    let rows = wire::read_rows(&bytes)?;
    let (header, values) = match rows.as_slice() {
        [h, v, ..] => (h, v),
        _ => {
            return Err(DraError::Dataset(format!(
                "{} needs a header and one row of values",
                path.display()
            )))
        }
    };
    labels
        .iter()
        .map(|l| {
            let j = header
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(l))
                .ok_or_else(|| DraError::Config(format!("initial estimates lack `{l}`")))?;
            let cell = values
                .get(j)
                .ok_or_else(|| DraError::data(1, l.as_str(), "missing value"))?;
            wire::parse_num(cell)
        })
        .collect()
}

fn message<S: Scalar>(params: &ParamSet, labels: &[String], beta: &[S]) -> Bundle {
    let mut b = Bundle::new();
    b.push(PARAMS_FILE, params.encode())
        .push(BETA_FILE, wire::write_vector(labels, beta));
    b
}

impl<S: Scalar> Coordinator<S> {
    /// `beta0` defaults to all zeros.
    pub fn new(spec: ModelSpec, beta0: Option<Vec<S>>) -> Result<Self> {
        spec.validate()?;
        let labels = spec.parameter_labels();
        let beta0 = beta0.unwrap_or_else(|| vec![S::zero(); labels.len()]);
        if beta0.len() != labels.len() {
            return Err(DraError::Config(format!(
                "{} initial estimates for {} parameters",
                beta0.len(),
                labels.len()
            )));
        }
        let mut partners = spec.dp_cd_list.clone();
        partners.sort_unstable();
        partners.dedup();
        if partners.is_empty() {
            return Err(DraError::Config("dp_cd_list is empty".into()));
        }
        Ok(Self {
            labels,
            partners,
            phase: Phase::Init,
            state: IterationState::new(beta0),
            n_obs: BTreeMap::new(),
            phi_working: S::one(),
            exchanges: 0,
            spec,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn partners(&self) -> &[u32] {
        &self.partners
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn state(&self) -> &IterationState<S> {
        &self.state
    }

    pub fn exchanges(&self) -> usize {
        self.exchanges
    }

    /// The first broadcast: iteration 1 at the starting values.
    pub fn start(&mut self) -> Result<Bundle> {
        if self.phase != Phase::Init {
            return Err(DraError::Protocol("coordinator already started".into()));
        }
        self.phase = Phase::Iterate(1);
        self.exchanges = 1;
        let params = ParamSet::for_spec(&self.spec, 1, false);
        Ok(message(&params, &self.labels, &self.state.beta))
    }

    /// Consumes one reply per partner.
    pub fn step(&mut self, replies: &[(u32, Bundle)]) -> Result<Step<S>> {
        let r = self.step_inner(replies);
        if r.is_err() {
            self.phase = Phase::Failed;
        }
        r
    }

    fn check_roster(&self, replies: &[(u32, Bundle)]) -> Result<()> {
        let mut got: Vec<u32> = replies.iter().map(|(dp, _)| *dp).collect();
        got.sort_unstable();
        if got != self.partners {
            return Err(DraError::Protocol(format!(
                "expected replies from partners {:?}, got {:?}",
                self.partners, got
            )));
        }
        Ok(())
    }

    fn read_sscps(&mut self, replies: &[(u32, Bundle)], name: &str) -> Result<SscpMatrix<S>> {
        let mut parts = Vec::with_capacity(replies.len());
        for (dp, b) in replies {
            let s = SscpMatrix::<S>::from_csv(b.require(name)?).map_err(|e| attribute(*dp, e))?;
            if s.design_labels() != self.labels.as_slice() {
                return Err(DraError::Protocol(format!(
                    "data partner {dp} sent SSCP columns [{}]",
                    s.labels().join(" ")
                )));
            }
            match self.n_obs.get(dp) {
                Some(&n) if n != s.n_obs() => {
                    return Err(DraError::Protocol(format!(
                        "data partner {dp} changed its observation count from {} to {}",
                        n.to_f64_lossless(),
                        s.n_obs().to_f64_lossless()
                    )))
                }
                Some(_) => {}
                None => {
                    self.n_obs.insert(*dp, s.n_obs());
                }
            }
            parts.push((*dp, s));
        }
        combine_sscp(&parts)
    }

    fn step_inner(&mut self, replies: &[(u32, Bundle)]) -> Result<Step<S>> {
        self.check_roster(replies)?;
        match self.phase {
            Phase::Iterate(m) => {
                let combined = self.read_sscps(replies, SSCP_FILE)?;
                for (dp, b) in replies {
                    SiteStatContribution::<S>::from_csv(b.require(SITE_STATS_FILE)?).map_err(|e| attribute(*dp, e))?;
                }
                let sol = solve_wls(&combined)?;
                let linear = self.spec.family == Family::Linear;
                self.state.advance(sol.beta, S::lit(self.spec.xconv), linear);
                debug!(
                    "iteration {m}: max |delta| = {}",
                    self.state.max_abs_delta().to_f64_lossless()
                );
                if self.state.converged {
                    let p = self.labels.len();
                    self.phi_working = estimate_dispersion(self.spec.family, sol.sse_working, combined.n_obs(), p)?;
                    info!("converged after {m} iteration(s)");
                    self.phase = Phase::Final;
                    self.exchanges += 1;
                    let mut params = ParamSet::for_spec(&self.spec, m + 1, true);
                    params.set("dispersion", wire::fmt17(self.phi_working));
                    return Ok(Step::Broadcast(message(&params, &self.labels, &self.state.beta)));
                }
                if m >= self.spec.max_iter_nb {
                    return Err(DraError::NonConvergence {
                        iterations: m,
                        max_delta: self.state.max_abs_delta().to_f64_lossless(),
                    });
                }
                self.phase = Phase::Iterate(m + 1);
                self.exchanges += 1;
                let params = ParamSet::for_spec(&self.spec, m + 1, false);
                Ok(Step::Broadcast(message(&params, &self.labels, &self.state.beta)))
            }
            Phase::Final => {
                let out = self.finalize(replies)?;
                self.phase = Phase::Done;
                Ok(Step::Finished(Box::new(out)))
            }
            Phase::Init | Phase::Done | Phase::Failed => {
                Err(DraError::Protocol(format!("unexpected replies in phase {:?}", self.phase)))
            }
        }
    }

    fn finalize(&mut self, replies: &[(u32, Bundle)]) -> Result<FitOutputs<S>> {
        let spec = &self.spec.clone();
        let family = spec.family;
        let p = self.labels.len();
        let combined = self.read_sscps(replies, SSCP_FILE)?;
        let robust_parts = replies
            .iter()
            .map(|(dp, b)| Ok((*dp, SscpMatrix::<S>::from_csv(b.require(ROBUST_SSCP_FILE)?).map_err(|e| attribute(*dp, e))?)))
            .collect::<Result<Vec<_>>>()?;
        let middle = combine_sscp(&robust_parts)?;
        let mut sorted: Vec<&(u32, Bundle)> = replies.iter().collect();
        sorted.sort_by_key(|(dp, _)| *dp);
        let mut stat_parts = Vec::with_capacity(sorted.len());
        let mut bins = Vec::new();
        let mut bins_fine = Vec::new();
        for (dp, b) in &sorted {
            stat_parts.push(SiteStatContribution::<S>::from_csv(b.require(SITE_STATS_FINAL_FILE)?).map_err(|e| attribute(*dp, e))?);
            bins.extend(bins_from_csv::<S>(b.require(BINS_FILE)?).map_err(|e| attribute(*dp, e))?);
            bins_fine.extend(bins_from_csv::<S>(b.require(BINS_FINE_FILE)?).map_err(|e| attribute(*dp, e))?);
        }
        let stats = SiteStatContribution::combine(&stat_parts)
            .ok_or_else(|| DraError::Protocol("no site statistics received".into()))?;
        let n = combined.n_obs();

        let xpx_inverse = spd_inverse(&combined.cross_product_block(), &self.labels)?;
        let mut warnings = Vec::new();
        let condition_number = condition_diagnostic(&combined)?;
        if condition_number.to_f64_lossless() > CONDITION_WARNING {
            let w = format!(
                "cross-product matrix is ill-conditioned (condition number {:e})",
                condition_number.to_f64_lossless()
            );
            warn!("{w}");
            warnings.push(w);
        }
        let (phi, sigma2_hat) = match family {
            Family::Linear => {
                let s2 = estimate_dispersion(family, stats.sse, n, p)?;
                (s2, Some(s2))
            }
            Family::Logistic => (S::one(), None),
        };
        let model_cov = model_covariance(&xpx_inverse, phi)?;
        let robust_cov = robust_covariance(&xpx_inverse.scale(self.phi_working), &middle, n, p)?;
        let covariance = CovarianceBundle {
            model_cov,
            robust_cov,
            xpx_inverse,
            dispersion: phi,
            sigma2_hat,
        };

        let beta = self.state.beta.clone();
        let (fit, anova, null_test) = match family {
            Family::Linear => {
                let sst = if spec.intercept { stats.m2_y } else { stats.uncorrected_ss() };
                let fit = linear_fit_stats(stats.sse, sst, n, p, phi, stats.mean_y, spec.intercept)?;
                let anova = if p > usize::from(spec.intercept) {
                    Some(anova_table(stats.sse, sst, n, p, spec.intercept)?)
                } else {
                    None
                };
                (fit, anova, None)
            }
            Family::Logistic => {
                let fit = logistic_fit_stats(stats.loglik, n, stats.sum_weights, p, stats.mean_y)?;
                let null_test = if spec.intercept {
                    let ll0 = fit.get("Null Log Likelihood").expect("reported");
                    Some(global_null_test(stats.loglik, ll0, p - 1)?)
                } else {
                    None
                };
                (fit, None, null_test)
            }
        };
        let coefficients = inference_table(
            &self.labels,
            &beta,
            &covariance.model_cov,
            &covariance.robust_cov,
            spec.alpha,
            family,
            n,
            p,
        )?;

        let bins = combine_bins(bins);
        let bins_fine = combine_bins(bins_fine);
        let (roc, hl) = match family {
            Family::Linear => (None, None),
            Family::Logistic => {
                let roc = roc_curve(&bins_fine)?;
                let hl = bins_fine
                    .iter()
                    .map(hl_expand)
                    .collect::<Result<Vec<_>>>()
                    .and_then(|r| hl_test(&r.concat(), spec.groups));
                let hl = match hl {
                    Ok(h) => Some(h),
                    Err(e) => {
                        let w = format!("Hosmer-Lemeshow test skipped: {e}");
                        warn!("{w}");
                        warnings.push(w);
                        None
                    }
                };
                (Some(roc), hl)
            }
        };

        Ok(FitOutputs {
            spec: spec.clone(),
            labels: self.labels.clone(),
            beta,
            state: self.state.clone(),
            covariance,
            coefficients,
            fit,
            anova,
            null_test,
            condition_number,
            site_stats: stats,
            bins,
            bins_fine,
            roc,
            hl,
            exchanges: self.exchanges,
            warnings,
        })
    }
}

fn attribute(dp: u32, e: DraError) -> DraError {
    match e {
        DraError::Protocol(m) => DraError::Protocol(format!("data partner {dp}: {m}")),
        DraError::Csv(m) => DraError::Protocol(format!("data partner {dp} sent malformed CSV: {m}")),
        DraError::Data { row, column, message } => DraError::Protocol(format!(
            "data partner {dp} sent a bad value in row {row}, column {column}: {message}"
        )),
        other => other,
    }
}

/// Drives `link` until the fit is done, writes the output datasets to
/// `out_dir` and signals the outcome to every partner.
pub fn run_coordinator<S: Scalar, L: CoordinatorLink>(
    spec: ModelSpec,
    beta0: Option<Vec<S>>,
    link: &mut L,
    out_dir: &Path,
) -> Result<FitOutputs<S>> {
    let mut coord = Coordinator::new(spec, beta0)?;
    let result = (|| -> Result<FitOutputs<S>> {
        let mut msg = coord.start()?;
        loop {
            link.broadcast(&msg)?;
            let mut replies = Vec::with_capacity(coord.partners().len());
            for dp in coord.partners().to_vec() {
                replies.push((dp, link.collect(dp)?));
            }
            match coord.step(&replies)? {
                Step::Broadcast(b) => msg = b,
                Step::Finished(out) => return Ok(*out),
            }
        }
    })();
    let result = result.and_then(|out| crate::output::emit_outputs(&out, out_dir).map(|_| out));
    match result {
        Ok(out) => {
            link.finish(&Outcome::Success)?;
            Ok(out)
        }
        Err(e) => {
            if matches!(e, DraError::NonConvergence { .. }) {
                if let Err(w) = crate::output::emit_history(coord.spec(), coord.labels(), coord.state(), out_dir) {
                    warn!("could not write the iteration history: {w}");
                }
            }
            let _ = link.finish(&Outcome::Failure(e.to_string()));
            Err(e)
        }
    }
}
