//! Privacy-binned diagnostics: percentile binning of predictions, residual
//! summaries, approximate ROC/AUC and the Hosmer-Lemeshow test.

use std::cmp::Ordering;

use crate::dist;
use crate::error::{DraError, Result};
use crate::model::Family;
use crate::scalar::{shifted_mean, Scalar};
use crate::wire;

/// Spacing used to spread the distinct predictions of one bin back apart.
pub const PROB_OFFSET: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinningPolicy {
    pub n_grp: usize,
    pub n_min: u64,
    pub max_groups: usize,
}

impl BinningPolicy {
    pub fn new(n_grp: usize, n_min: u64, max_groups: usize) -> Self {
        Self {
            n_grp,
            n_min: n_min.max(1),
            max_groups: max_groups.max(1),
        }
    }

    /// Finest granularity a partner allows: `int(n_k / n_min)` groups, capped.
    pub fn finest(n_k: f64, n_min: u64, max_groups: usize) -> Self {
        let n_min = n_min.max(1);
        let n_grp = ((n_k / n_min as f64).floor() as usize).clamp(1, max_groups.max(1));
        Self::new(n_grp, n_min, max_groups)
    }

    /// `max(int(N / n_grp + 0.5), n_min)`.
    pub fn target(&self, n_total: f64) -> f64 {
        let raw = (n_total / self.n_grp.max(1) as f64 + 0.5).floor();
        raw.max(self.n_min as f64)
    }
}

/// The greedy grouping pass on distinct sorted values: a value joins the
/// open group while the group holds fewer than `target` and adding half the
/// value's count stays within `target`; a small trailing group is folded
/// into its predecessor.
pub fn greedy_groups(counts: &[f64], target: f64) -> Vec<usize> {
    let mut out = Vec::with_capacity(counts.len());
    let mut group = 0;
    let mut cum = 0.0;
    for (j, &f) in counts.iter().enumerate() {
        if j > 0 && !(cum < target && cum + f / 2.0 <= target) {
            group += 1;
            cum = 0.0;
        }
        cum += f;
        out.push(group);
    }
    if group > 0 && cum <= target / 2.0 {
        for g in out.iter_mut().filter(|g| **g == group) {
            *g = group - 1;
        }
    }
    out
}

fn relabel(assign: &mut [usize], from: usize, into: usize) {
    for g in assign.iter_mut() {
        if *g == from {
            *g = into;
        } else if *g > from {
            *g -= 1;
        }
    }
}

fn group_totals(assign: &[usize], counts: &[f64]) -> Vec<f64> {
    let n = assign.last().map_or(0, |g| g + 1);
    let mut t = vec![0.0; n];
    for (&g, &c) in assign.iter().zip(counts) {
        t[g] += c;
    }
    t
}

/// Group index (0-based, nondecreasing) for each distinct value.
///
/// After the greedy pass, groups below `n_min` (possible when a large tie
/// block closes a group early) are merged into their smaller neighbour, and
/// adjacent pairs are merged while the count exceeds `max_groups`.
pub fn assign_bins<S: Scalar>(values: &[S], counts: &[S], policy: &BinningPolicy) -> Result<Vec<usize>> {
    if values.is_empty() {
        return Err(DraError::InsufficientData("nothing to bin".into()));
    }
    if values.len() != counts.len() {
        return Err(DraError::Protocol("binning inputs differ in length".into()));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(DraError::Protocol("binning values must be strictly increasing".into()));
    }
    let counts: Vec<f64> = counts.iter().map(|c| c.to_f64_lossless()).collect();
    if counts.iter().any(|&c| !(c > 0.0)) {
        return Err(DraError::Protocol("binning counts must be positive".into()));
    }
    let total: f64 = counts.iter().sum();
    let mut assign = greedy_groups(&counts, policy.target(total));
    let n_min = policy.n_min as f64;
    loop {
        let t = group_totals(&assign, &counts);
        if t.len() < 2 {
            break;
        }
        let Some(small) = (0..t.len()).find(|&g| t[g] < n_min) else {
            break;
        };
        let into = if small == 0 {
            1
        } else if small + 1 == t.len() || t[small - 1] <= t[small + 1] {
            small - 1
        } else {
            small + 1
        };
        let (from, keep) = (small.max(into), small.min(into));
        relabel(&mut assign, from, keep);
    }
    loop {
        let t = group_totals(&assign, &counts);
        if t.len() <= policy.max_groups {
            break;
        }
        let g = (0..t.len() - 1)
            .min_by(|&a, &b| (t[a] + t[a + 1]).total_cmp(&(t[b] + t[b + 1])))
            .expect("at least two groups");
        relabel(&mut assign, g + 1, g);
    }
    Ok(assign)
}

/// A partner's record scored at the final coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRow<S> {
    pub mu: S,
    pub y: S,
    pub resid: S,
    pub variance: S,
    pub freq: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinSummary<S> {
    pub partner_id: u32,
    pub bin: usize,
    /// Mean prediction.
    pub prob_mean: S,
    pub n_obs: S,
    pub distinct_prob_count: usize,
    pub resp_mean: S,
    /// Event and non-event counts; logistic models only.
    pub resp_count: Option<S>,
    pub noresp_count: Option<S>,
    pub resid_mean: S,
    pub resid_sq_mean: S,
    pub variance_mean: S,
}

/// Bins scored rows by prediction. Ties in the prediction are never split.
pub fn residual_summary<S: Scalar>(
    rows: &[ScoredRow<S>],
    family: Family,
    policy: &BinningPolicy,
    partner_id: u32,
) -> Result<Vec<BinSummary<S>>> {
    let mut sorted: Vec<&ScoredRow<S>> = rows.iter().filter(|r| r.freq > S::zero()).collect();
    if sorted.is_empty() {
        return Err(DraError::InsufficientData(format!(
            "data partner {partner_id} has no rows to summarize"
        )));
    }
    sorted.sort_by(|a, b| a.mu.partial_cmp(&b.mu).unwrap_or(Ordering::Equal));
    let mut values: Vec<S> = Vec::new();
    let mut counts: Vec<S> = Vec::new();
    let mut first_row: Vec<usize> = Vec::new();
    for (i, r) in sorted.iter().enumerate() {
        if values.last() == Some(&r.mu) {
            *counts.last_mut().expect("parallel vectors") += r.freq;
        } else {
            values.push(r.mu);
            counts.push(r.freq);
            first_row.push(i);
        }
    }
    let assign = assign_bins(&values, &counts, policy)?;
    let n_bins = assign.last().copied().unwrap_or(0) + 1;
    let mut out = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let vs: Vec<usize> = (0..values.len()).filter(|&j| assign[j] == b).collect();
        let start = first_row[vs[0]];
        let end = vs
            .last()
            .and_then(|&j| first_row.get(j + 1).copied())
            .unwrap_or(sorted.len());
        let members = &sorted[start..end];
        let n_obs: S = members.iter().map(|r| r.freq).sum();
        let mean = |f: &dyn Fn(&ScoredRow<S>) -> S| {
            shifted_mean(members.iter().map(|r| (f(r), r.freq))).expect("bin is nonempty")
        };
        let (resp_count, noresp_count) = match family {
            Family::Logistic => {
                let events: S = members.iter().map(|r| r.freq * r.y).sum();
                (Some(events), Some(n_obs - events))
            }
            Family::Linear => (None, None),
        };
        out.push(BinSummary {
            partner_id,
            bin: b + 1,
            prob_mean: mean(&|r| r.mu),
            n_obs,
            distinct_prob_count: vs.len(),
            resp_mean: mean(&|r| r.y),
            resp_count,
            noresp_count,
            resid_mean: mean(&|r| r.resid),
            resid_sq_mean: mean(&|r| r.resid * r.resid),
            variance_mean: mean(&|r| r.variance),
        });
    }
    Ok(out)
}

pub const BIN_COLUMNS: [&str; 11] = [
    "dp_cd",
    "bin",
    "PROB",
    "Nobs",
    "Dist_PROB_Cnt_per_bin",
    "RESP_Mean",
    "RESP",
    "NO_RESP",
    "RESID_Mean",
    "RESID_SQ_Mean",
    "VAR_Mean",
];

pub fn bins_to_csv<S: Scalar>(bins: &[BinSummary<S>]) -> Vec<u8> {
    let mut rows = vec![BIN_COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    let opt = |v: Option<S>| v.map_or_else(|| ".".to_string(), wire::fmt17);
    for b in bins {
        rows.push(vec![
            b.partner_id.to_string(),
            b.bin.to_string(),
            wire::fmt17(b.prob_mean),
            wire::fmt17(b.n_obs),
            b.distinct_prob_count.to_string(),
            wire::fmt17(b.resp_mean),
            opt(b.resp_count),
            opt(b.noresp_count),
            wire::fmt17(b.resid_mean),
            wire::fmt17(b.resid_sq_mean),
            wire::fmt17(b.variance_mean),
        ]);
    }
    wire::write_rows(&rows)
}

pub fn bins_from_csv<S: Scalar>(bytes: &[u8]) -> Result<Vec<BinSummary<S>>> {
    let rows = wire::read_rows(bytes)?;
    let header = rows.first().ok_or_else(|| DraError::Protocol("empty bin summary".into()))?;
    if header.iter().map(String::as_str).ne(BIN_COLUMNS) {
        return Err(DraError::Protocol("bin summary has an unexpected header".into()));
    }
    let int = |t: &str| -> Result<usize> {
        t.parse()
            .map_err(|_| DraError::Protocol(format!("`{t}` is not a count")))
    };
    let opt = |t: &str| -> Result<Option<S>> {
        if t == "." {
            Ok(None)
        } else {
            wire::parse_num(t).map(Some)
        }
    };
    rows[1..]
        .iter()
        .map(|r| {
            if r.len() != BIN_COLUMNS.len() {
                return Err(DraError::Protocol("bin summary row has the wrong width".into()));
            }
            Ok(BinSummary {
                partner_id: int(&r[0])? as u32,
                bin: int(&r[1])?,
                prob_mean: wire::parse_num(&r[2])?,
                n_obs: wire::parse_num(&r[3])?,
                distinct_prob_count: int(&r[4])?,
                resp_mean: wire::parse_num(&r[5])?,
                resp_count: opt(&r[6])?,
                noresp_count: opt(&r[7])?,
                resid_mean: wire::parse_num(&r[8])?,
                resid_sq_mean: wire::parse_num(&r[9])?,
                variance_mean: wire::parse_num(&r[10])?,
            })
        })
        .collect()
}

/// Pools partner summaries, ordered by mean prediction then partner.
pub fn combine_bins<S: Scalar>(parts: impl IntoIterator<Item = BinSummary<S>>) -> Vec<BinSummary<S>> {
    let mut all: Vec<BinSummary<S>> = parts.into_iter().collect();
    all.sort_by(|a, b| {
        a.prob_mean
            .partial_cmp(&b.prob_mean)
            .unwrap_or(Ordering::Equal)
            .then(a.partner_id.cmp(&b.partner_id))
            .then(a.bin.cmp(&b.bin))
    });
    all
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint<S> {
    pub prob: S,
    pub pos: S,
    pub neg: S,
    pub falpos: S,
    pub falneg: S,
    pub sensit: S,
    pub one_minus_spec: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve<S> {
    /// One point per distinct threshold, in descending threshold order.
    pub points: Vec<RocPoint<S>>,
    pub auc: S,
}

/// ROC curve from `(threshold value, events, non-events)` triples.
pub fn roc_from_counts<S: Scalar>(cells: &[(S, S, S)]) -> Result<RocCurve<S>> {
    let mut cells: Vec<(S, S, S)> = cells.to_vec();
    cells.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let total_pos: S = cells.iter().map(|c| c.1).sum();
    let total_neg: S = cells.iter().map(|c| c.2).sum();
    if !(total_pos > S::zero()) || !(total_neg > S::zero()) {
        return Err(DraError::UndefinedRoc("need both events and non-events".into()));
    }
    let mut points = Vec::new();
    let (mut pos, mut falpos) = (S::zero(), S::zero());
    let mut i = 0;
    while i < cells.len() {
        let z = cells[i].0;
        while i < cells.len() && cells[i].0 == z {
            pos += cells[i].1;
            falpos += cells[i].2;
            i += 1;
        }
        points.push(RocPoint {
            prob: z,
            pos,
            neg: total_neg - falpos,
            falpos,
            falneg: total_pos - pos,
            sensit: pos / total_pos,
            one_minus_spec: falpos / total_neg,
        });
    }
    let half = S::lit(0.5);
    let mut auc = S::zero();
    let (mut prev_x, mut prev_y) = (S::zero(), S::zero());
    for p in &points {
        auc += half * (p.sensit + prev_y) * (p.one_minus_spec - prev_x);
        prev_x = p.one_minus_spec;
        prev_y = p.sensit;
    }
    Ok(RocCurve { points, auc })
}

/// Approximate ROC curve with thresholds at each distinct bin mean.
pub fn roc_curve<S: Scalar>(bins: &[BinSummary<S>]) -> Result<RocCurve<S>> {
    let cells = bins
        .iter()
        .map(|b| match (b.resp_count, b.noresp_count) {
            (Some(r), Some(n)) => Ok((b.prob_mean, r, n)),
            _ => Err(DraError::UndefinedRoc("bins carry no event counts".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    roc_from_counts(&cells)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlRecord<S> {
    pub prob: S,
    pub n_obs: S,
    pub resp_mean: S,
}

/// Spreads a bin into one record of `Nobs − Dist + 1` at its mean and
/// `Dist − 1` unit records at successive offsets above it.
pub fn hl_expand<S: Scalar>(bin: &BinSummary<S>) -> Result<Vec<HlRecord<S>>> {
    let dist = bin.distinct_prob_count;
    let d: S = S::from_usize(dist).expect("count fits");
    if dist == 0 || d > bin.n_obs {
        return Err(DraError::data(
            bin.bin,
            "Dist_PROB_Cnt_per_bin",
            format!("{dist} distinct values in a bin of {}", bin.n_obs.to_f64_lossless()),
        ));
    }
    let mut out = Vec::with_capacity(dist);
    out.push(HlRecord {
        prob: bin.prob_mean,
        n_obs: bin.n_obs - d + S::one(),
        resp_mean: bin.resp_mean,
    });
    let step = S::lit(PROB_OFFSET);
    for j in 1..dist {
        out.push(HlRecord {
            prob: bin.prob_mean + S::from_usize(j).expect("index fits") * step,
            n_obs: S::one(),
            resp_mean: bin.resp_mean,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlGroup<S> {
    pub group: usize,
    pub total: S,
    pub observed_events: S,
    pub expected_events: S,
    pub observed_nonevents: S,
    pub expected_nonevents: S,
    pub mean_prob: S,
    pub mean_resp: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HlResult<S> {
    pub chi_sq: S,
    pub df: usize,
    pub p_value: S,
    pub partition: Vec<HlGroup<S>>,
}

/// Hosmer-Lemeshow test over weighted records, grouped into about `g`
/// equal-count groups with ties kept together.
pub fn hl_test<S: Scalar>(records: &[HlRecord<S>], g: usize) -> Result<HlResult<S>> {
    let mut recs: Vec<&HlRecord<S>> = records.iter().filter(|r| r.n_obs > S::zero()).collect();
    if recs.is_empty() {
        return Err(DraError::InsufficientData("no records for the Hosmer-Lemeshow test".into()));
    }
    recs.sort_by(|a, b| a.prob.partial_cmp(&b.prob).unwrap_or(Ordering::Equal));
    // Distinct values with their total count, event total and record span.
    let mut values: Vec<S> = Vec::new();
    let mut counts: Vec<S> = Vec::new();
    let mut events: Vec<S> = Vec::new();
    for r in &recs {
        if values.last() == Some(&r.prob) {
            *counts.last_mut().expect("parallel") += r.n_obs;
            *events.last_mut().expect("parallel") += r.n_obs * r.resp_mean;
        } else {
            values.push(r.prob);
            counts.push(r.n_obs);
            events.push(r.n_obs * r.resp_mean);
        }
    }
    let policy = BinningPolicy::new(g, 1, usize::MAX);
    let assign = assign_bins(&values, &counts, &policy)?;
    let n_groups = assign.last().copied().unwrap_or(0) + 1;
    if n_groups < 3 {
        return Err(DraError::InsufficientData(format!(
            "only {n_groups} Hosmer-Lemeshow groups could be formed"
        )));
    }
    let mut partition = Vec::with_capacity(n_groups);
    let mut chi_sq = S::zero();
    for l in 0..n_groups {
        let (mut n, mut sp, mut se) = (S::zero(), S::zero(), S::zero());
        for j in (0..values.len()).filter(|&j| assign[j] == l) {
            n += counts[j];
            sp += counts[j] * values[j];
            se += events[j];
        }
        let mu = sp / n;
        let ybar = se / n;
        if !(mu > S::zero() && mu < S::one()) {
            return Err(DraError::NumericalFailure(format!(
                "Hosmer-Lemeshow group {} has mean probability {}",
                l + 1,
                mu.to_f64_lossless()
            )));
        }
        chi_sq += n * (ybar - mu) * (ybar - mu) / (mu * (S::one() - mu));
        partition.push(HlGroup {
            group: l + 1,
            total: n,
            observed_events: se,
            expected_events: sp,
            observed_nonevents: n - se,
            expected_nonevents: n - sp,
            mean_prob: mu,
            mean_resp: ybar,
        });
    }
    let df = n_groups - 2;
    let p = dist::chi_square_sf(chi_sq.to_f64_lossless(), df as f64)?;
    Ok(HlResult {
        chi_sq,
        df,
        p_value: S::from_f64(p).unwrap_or_else(S::nan),
        partition,
    })
}
