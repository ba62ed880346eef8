//! Collapsed Gibbs sampling of table assignments with fixed-point
//! hyperparameter updates.
//!
//! Tables are shared across all instances of a class: `na` counts actions per
//! table over the whole corpus while `nt` counts table occupancy inside each
//! instance. Within an instance, tables are labeled in order of first use,
//! exactly as the generator opens them, so a node's conditional combines the
//! sequential CRP probability of the whole instance labeling with the
//! Dirichlet-multinomial predictive of its action. For the last node of an
//! instance this is the familiar `nt / (n + alpha - 1)` and
//! `alpha / (n + alpha - 1)` weighting of [`table_weights`].

use std::collections::BTreeMap;

use log::{debug, warn};
use rand::Rng;

use crate::generative::{crp_table_distribution, sample_categorical};
use crate::special::digamma_unchecked as digamma;
use crate::{Error, Result};

use super::{AlphaUpdate, BetaUpdate, TrainConfig};

/// Mutable sampler state for one class corpus.
#[derive(Debug, Clone)]
pub struct SamplerState {
    pub ell: usize,
    pub num_actions: usize,
    /// Vocabulary index of every node, per instance.
    pub actions: Vec<Vec<usize>>,
    /// Table of every node, per instance.
    pub assignments: Vec<Vec<usize>>,
    /// `ell x M` corpus-wide action counts per table, row-major.
    pub na: Vec<u32>,
    na_rows: Vec<u32>,
    /// Per-instance table occupancy.
    pub nt: Vec<Vec<u32>>,
    pub alpha: Vec<f64>,
    /// `ell x M`, row-major.
    pub beta: Vec<f64>,
    beta_rows: Vec<f64>,
    pub iteration: usize,
}

impl SamplerState {
    pub fn new(actions: Vec<Vec<usize>>, ell: usize, num_actions: usize, alpha: f64, beta: f64) -> Self {
        let assignments = actions.iter().map(|a| vec![usize::MAX; a.len()]).collect();
        let nt = vec![vec![0; ell]; actions.len()];
        SamplerState {
            ell,
            num_actions,
            actions,
            assignments,
            na: vec![0; ell * num_actions],
            na_rows: vec![0; ell],
            nt,
            alpha: vec![alpha; ell],
            beta: vec![beta; ell * num_actions],
            beta_rows: vec![beta * num_actions as f64; ell],
            iteration: 0,
        }
    }

    pub fn num_instances(&self) -> usize {
        self.actions.len()
    }

    pub fn total_nodes(&self) -> usize {
        self.actions.iter().map(Vec::len).sum()
    }

    /// Seats every node by a sequential draw from the CRP prior.
    pub fn initialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for d in 0..self.num_instances() {
            for n in 0..self.actions[d].len() {
                let probs = crp_table_distribution(&self.nt[d], n + 1, &self.alpha);
                let table = sample_categorical(rng, &probs);
                self.add(d, n, table);
            }
        }
    }

    /// Seats node `n` of instance `d` at `table`, updating the counts.
    pub fn add(&mut self, d: usize, n: usize, table: usize) {
        let action = self.actions[d][n];
        self.assignments[d][n] = table;
        self.na[table * self.num_actions + action] += 1;
        self.na_rows[table] += 1;
        self.nt[d][table] += 1;
    }

    /// Unseats node `n` of instance `d`, leaving it unassigned.
    pub fn remove(&mut self, d: usize, n: usize) {
        let table = self.assignments[d][n];
        let action = self.actions[d][n];
        self.na[table * self.num_actions + action] -= 1;
        self.na_rows[table] -= 1;
        self.nt[d][table] -= 1;
        self.assignments[d][n] = usize::MAX;
    }

    pub fn set_hyperparameters(&mut self, alpha: Vec<f64>, beta: Vec<f64>) {
        assert_eq!(alpha.len(), self.ell);
        assert_eq!(beta.len(), self.ell * self.num_actions);
        self.beta_rows = beta.chunks(self.num_actions).map(|row| row.iter().sum()).collect();
        self.alpha = alpha;
        self.beta = beta;
    }

    /// Resamples every node of every instance, instances in corpus order and
    /// nodes in position order.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for d in 0..self.num_instances() {
            for n in 0..self.actions[d].len() {
                self.remove(d, n);
                let probs = gibbs_conditional(self, d, n);
                let table = sample_categorical(rng, &probs);
                self.add(d, n, table);
            }
        }
        self.iteration += 1;
    }

    /// Number of tables holding at least one node anywhere in the corpus.
    pub fn occupied_tables(&self) -> usize {
        self.na_rows.iter().filter(|&&c| c > 0).count()
    }

    /// Verifies that `na` and `nt` agree with the assignments.
    pub fn counts_consistent(&self) -> bool {
        let mut na = vec![0u32; self.na.len()];
        for (d, tables) in self.assignments.iter().enumerate() {
            let mut nt = vec![0u32; self.ell];
            for (n, &t) in tables.iter().enumerate() {
                if t >= self.ell {
                    return false;
                }
                na[t * self.num_actions + self.actions[d][n]] += 1;
                nt[t] += 1;
            }
            if nt != self.nt[d] {
                return false;
            }
        }
        let rows_ok = (0..self.ell)
            .all(|t| self.na_rows[t] == na[t * self.num_actions..(t + 1) * self.num_actions].iter().sum::<u32>());
        na == self.na && rows_ok
    }
}

/// Unnormalized table weights for the last node of an instance given
/// counts without it.
///
/// `na_minus` is the `ell x M` count table, `nt_minus` the occupancy of the
/// node's instance, `action` the node's observed action and `n` its CRP
/// position (so `nt_minus` sums to `n - 1`). Occupied tables and the lowest
/// empty table get
/// `(na[t][a] + beta[t][a]) / sum_i (na[t][i] + beta[t][i])` times the CRP
/// factor; every other table gets zero.
pub fn table_weights(
    na_minus: &[u32],
    beta: &[f64],
    alpha: &[f64],
    nt_minus: &[u32],
    action: usize,
    n: usize,
) -> Vec<f64> {
    let ell = alpha.len();
    let m = beta.len() / ell;
    let crp = crp_factors(nt_minus, n, alpha);
    (0..ell)
        .map(|t| {
            if crp[t] == 0.0 {
                return 0.0;
            }
            let row = t * m;
            let row_total: f64 = (0..m).map(|i| na_minus[row + i] as f64 + beta[row + i]).sum();
            (na_minus[row + action] as f64 + beta[row + action]) / row_total * crp[t]
        })
        .collect()
}

// Unnormalized CRP factor per table: nt/(n+alpha-1) if occupied, alpha/(n+alpha-1)
// for the lowest empty table, zero otherwise.
fn crp_factors(nt: &[u32], n: usize, alpha: &[f64]) -> Vec<f64> {
    let n = n as f64;
    let mut out = vec![0.0; nt.len()];
    let mut new_table = false;
    for (t, (&count, &a)) in nt.iter().zip(alpha).enumerate() {
        if count > 0 {
            out[t] = count as f64 / (n + a - 1.0);
        } else if !new_table {
            new_table = true;
            out[t] = a / (n + a - 1.0);
        }
    }
    out
}

/// Probability of the labeling `tables[from..]` given `tables[..from]` under
/// the sequential CRP with tables opened in order, as used by the generator.
/// Zero if the labeling skips a table.
fn crp_suffix_probability(tables: &[usize], from: usize, alpha: &[f64], nt: &mut [u32]) -> f64 {
    nt.iter_mut().for_each(|c| *c = 0);
    let mut opened = 0;
    for &t in &tables[..from] {
        nt[t] += 1;
        opened = opened.max(t + 1);
    }
    let mut p = 1.0;
    for (i, &t) in tables.iter().enumerate().skip(from) {
        if t > opened || t >= nt.len() {
            return 0.0;
        }
        let n = (i + 1) as f64;
        let weight = |z: usize| {
            let count = if z < opened { nt[z] as f64 } else { alpha[z] };
            count / (n + alpha[z] - 1.0)
        };
        let total: f64 = (0..(opened + 1).min(nt.len())).map(weight).sum();
        p *= weight(t) / total;
        nt[t] += 1;
        opened = opened.max(t + 1);
    }
    p
}

/// Normalized conditional over the tables for node `n` of instance `d`,
/// whose own counts must already be removed from `state`.
pub fn gibbs_conditional(state: &SamplerState, d: usize, n: usize) -> Vec<f64> {
    let m = state.num_actions;
    let action = state.actions[d][n];
    let mut tables = state.assignments[d].clone();
    let mut scratch = vec![0u32; state.ell];
    let mut weights: Vec<f64> = (0..state.ell)
        .map(|t| {
            tables[n] = t;
            let prior = crp_suffix_probability(&tables, n, &state.alpha, &mut scratch);
            if prior == 0.0 {
                return 0.0;
            }
            let row_total = state.na_rows[t] as f64 + state.beta_rows[t];
            let cell = state.na[t * m + action] as f64 + state.beta[t * m + action];
            cell / row_total * prior
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    weights
}

/// Dirichlet-multinomial draws seen by the `alpha` update: each draw has a
/// total size and one count per table. Integer counts repeat heavily, so
/// both are kept as value -> multiplicity histograms.
#[derive(Debug, Clone, Default)]
struct DrawStats {
    sizes: BTreeMap<u32, u32>,
    tables: Vec<BTreeMap<u32, u32>>,
}

impl DrawStats {
    fn new(ell: usize) -> Self {
        DrawStats { sizes: BTreeMap::new(), tables: vec![BTreeMap::new(); ell] }
    }

    pub fn add(&mut self, counts: &[u32]) {
        *self.sizes.entry(counts.iter().sum()).or_default() += 1;
        for (hist, &c) in self.tables.iter_mut().zip(counts) {
            *hist.entry(c).or_default() += 1;
        }
    }
}

/// Count histograms of recorded samples, the input of the fixed-point
/// hyperparameter updates.
#[derive(Debug, Clone, Default)]
pub struct SampleHistory {
    samples: u32,
    ell: usize,
    num_actions: usize,
    /// One draw per sample: corpus-wide occupancy `sum_d nt[d][t]`.
    corpus: DrawStats,
    /// One draw per instance and sample: `nt[d][t]`.
    instances: DrawStats,
    /// Per table and action: `na[t][i]`.
    action_counts: Vec<BTreeMap<u32, u32>>,
    /// Per table: `sum_i na[t][i]`.
    row_totals: Vec<BTreeMap<u32, u32>>,
    /// Per instance and sample: (size, occupied tables).
    partitions: BTreeMap<(u32, u32), u32>,
}

impl SampleHistory {
    pub fn new(ell: usize, num_actions: usize) -> Self {
        SampleHistory {
            samples: 0,
            ell,
            num_actions,
            corpus: DrawStats::new(ell),
            instances: DrawStats::new(ell),
            action_counts: vec![BTreeMap::new(); ell * num_actions],
            row_totals: vec![BTreeMap::new(); ell],
            partitions: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples as usize
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn clear(&mut self) {
        *self = SampleHistory::new(self.ell, self.num_actions);
    }

    /// Records one sample given per-instance occupancy and the `ell x M`
    /// action table.
    pub fn record_counts(&mut self, nt: &[Vec<u32>], na: &[u32]) {
        assert_eq!(na.len(), self.ell * self.num_actions);
        self.samples += 1;
        let mut totals = vec![0u32; self.ell];
        for counts in nt {
            assert_eq!(counts.len(), self.ell);
            self.instances.add(counts);
            let occupied = counts.iter().filter(|&&c| c > 0).count() as u32;
            *self.partitions.entry((counts.iter().sum(), occupied)).or_default() += 1;
            totals.iter_mut().zip(counts).for_each(|(t, &c)| *t += c);
        }
        self.corpus.add(&totals);
        for t in 0..self.ell {
            let row = &na[t * self.num_actions..(t + 1) * self.num_actions];
            *self.row_totals[t].entry(row.iter().sum()).or_default() += 1;
        }
        for (cell, &count) in na.iter().enumerate() {
            *self.action_counts[cell].entry(count).or_default() += 1;
        }
    }

    pub fn record(&mut self, state: &SamplerState) {
        self.record_counts(&state.nt, &state.na);
    }
}

/// `sum_s [psi(count_s + x) - psi(x)]` over a count histogram.
fn digamma_gain(hist: &BTreeMap<u32, u32>, x: f64) -> f64 {
    let base = digamma(x);
    hist.iter()
        .map(|(&count, &mult)| mult as f64 * (digamma(count as f64 + x) - base))
        .sum()
}

/// Per-table and per-cell multiplicative factors of the fixed-point updates,
/// before clamping. A factor is `None` where its denominator vanishes (no
/// counts at all) or the update is disabled, in which case the parameter is
/// left unchanged.
pub fn update_factors(
    alpha: &[f64],
    beta: &[f64],
    history: &SampleHistory,
    alpha_mode: AlphaUpdate,
    beta_mode: BetaUpdate,
) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let ell = alpha.len();
    let m = history.num_actions;
    let alpha_factors = match alpha_mode {
        AlphaUpdate::Fixed => vec![None; ell],
        AlphaUpdate::Corpus | AlphaUpdate::Instance => {
            let draws = if alpha_mode == AlphaUpdate::Corpus { &history.corpus } else { &history.instances };
            let den = digamma_gain(&draws.sizes, alpha.iter().sum());
            (0..ell).map(|t| ratio(digamma_gain(&draws.tables[t], alpha[t]), den)).collect()
        }
        AlphaUpdate::Crp => (0..ell).map(|t| crp_factor(&history.partitions, alpha[t])).collect(),
    };
    let beta_factors = match beta_mode {
        BetaUpdate::Fixed => vec![None; ell * m],
        BetaUpdate::Cell => {
            let mut factors = Vec::with_capacity(ell * m);
            for t in 0..ell {
                let row_sum: f64 = beta[t * m..(t + 1) * m].iter().sum();
                let den = digamma_gain(&history.row_totals[t], row_sum);
                for i in 0..m {
                    let num = digamma_gain(&history.action_counts[t * m + i], beta[t * m + i]);
                    factors.push(ratio(num, den));
                }
            }
            factors
        }
        BetaUpdate::Symmetric => {
            // evaluated at the mean so unequal starting values converge to one
            let b = beta.iter().sum::<f64>() / beta.len() as f64;
            let num: f64 = history.action_counts.iter().map(|h| digamma_gain(h, b)).sum();
            let den: f64 = history.row_totals.iter().map(|h| digamma_gain(h, b * m as f64)).sum();
            let f = ratio(num, m as f64 * den);
            beta.iter().map(|&x| f.map(|f| b * f / x)).collect()
        }
    };
    (alpha_factors, beta_factors)
}

/// Fixed-point factor for a CRP concentration from partitions of `n` nodes
/// into `k` tables: `sum (k - 1) / (alpha * sum [psi(alpha + n) - psi(alpha + 1)])`.
/// `partitions` maps `(n, k)` to its multiplicity. The table budget is
/// ignored.
pub fn crp_factor(partitions: &BTreeMap<(u32, u32), u32>, alpha: f64) -> Option<f64> {
    let base = digamma(alpha + 1.0);
    let (mut num, mut den) = (0.0, 0.0);
    for (&(n, k), &mult) in partitions {
        if n > 0 {
            num += mult as f64 * (k as f64 - 1.0);
            den += mult as f64 * (digamma(alpha + n as f64) - base);
        }
    }
    ratio(num, alpha * den)
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0 && den.is_finite() && num.is_finite()).then(|| num / den)
}

/// One fixed-point step for `alpha` and `beta`, clamped to `[lo, hi]`.
pub fn update_hyperparams(
    alpha: &[f64],
    beta: &[f64],
    history: &SampleHistory,
    modes: (AlphaUpdate, BetaUpdate),
    clamp: (f64, f64),
) -> (Vec<f64>, Vec<f64>) {
    let (alpha_factors, beta_factors) = update_factors(alpha, beta, history, modes.0, modes.1);
    let apply = |x: f64, factor: Option<f64>| match factor {
        Some(f) => (x * f).clamp(clamp.0, clamp.1),
        None => x.clamp(clamp.0, clamp.1),
    };
    let alpha = alpha.iter().zip(alpha_factors).map(|(&a, f)| apply(a, f)).collect();
    let beta = beta.iter().zip(beta_factors).map(|(&b, f)| apply(b, f)).collect();
    (alpha, beta)
}

/// Result of [`run_gibbs`].
#[derive(Debug, Clone)]
pub struct GibbsOutput {
    /// `ell x M` action counts averaged over the window.
    pub averaged_na: Vec<Vec<f64>>,
    /// Per-instance occupancy averaged over the window.
    pub averaged_nt: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    /// Occupied-table count after every sweep.
    pub occupied_trace: Vec<usize>,
    /// Geweke z-score of the post-burn-in occupied-table trace, when requested.
    pub geweke_z: Option<f64>,
}

/// Runs the sampler on a corpus given as vocabulary indices per instance.
///
/// Hyperparameters are updated after every sweep. During burn-in the update
/// sees only the latest sample; afterwards it sees every post-burn-in
/// sample. Counts are averaged over the `avg_window` sweeps that follow
/// burn-in.
pub fn run_gibbs<R: Rng + ?Sized>(
    corpus: &[Vec<usize>],
    num_actions: usize,
    ell: usize,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<GibbsOutput> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if ell == 0 || num_actions == 0 {
        return Err(Error::ConfigInvalid("sampler needs at least one table and one action".into()));
    }
    if let Some(&bad) = corpus.iter().flatten().find(|&&a| a >= num_actions) {
        return Err(Error::ConfigInvalid(format!("action index {bad} outside vocabulary")));
    }
    let mut state = SamplerState::new(corpus.to_vec(), ell, num_actions, config.alpha_init, config.beta_init);
    state.initialize(rng);

    let mut history = SampleHistory::new(ell, num_actions);
    let mut sum_na = vec![0f64; ell * num_actions];
    let mut sum_nt: Vec<Vec<f64>> = vec![vec![0.0; ell]; corpus.len()];
    let mut occupied_trace = Vec::with_capacity(config.iterations);
    let window_end = config.burn_in + config.avg_window;

    for sweep in 1..=config.iterations {
        state.sweep(rng);
        if sweep <= config.burn_in || sweep == config.burn_in + 1 {
            history.clear();
        }
        history.record(&state);
        let (alpha, beta) = update_hyperparams(
            &state.alpha,
            &state.beta,
            &history,
            (config.alpha_update, config.beta_update),
            (config.clamp_min, config.clamp_max),
        );
        state.set_hyperparameters(alpha, beta);
        occupied_trace.push(state.occupied_tables());

        if sweep > config.burn_in && sweep <= window_end {
            sum_na.iter_mut().zip(&state.na).for_each(|(s, &c)| *s += c as f64);
            for (acc, nt) in sum_nt.iter_mut().zip(&state.nt) {
                acc.iter_mut().zip(nt).for_each(|(s, &c)| *s += c as f64);
            }
        }
        if sweep % 100 == 0 {
            debug!("sweep {sweep}: {} occupied tables", state.occupied_tables());
        }
    }
    debug_assert!(state.counts_consistent());

    let window = config.avg_window as f64;
    let averaged_na = sum_na.chunks(num_actions).map(|row| row.iter().map(|s| s / window).collect()).collect();
    let averaged_nt = sum_nt.into_iter().map(|row| row.into_iter().map(|s| s / window).collect()).collect();
    let geweke_z = config.geweke.then(|| geweke_z(&occupied_trace[config.burn_in..]));
    if let Some(z) = geweke_z {
        if z.abs() > 2.0 {
            warn!("occupied-table trace may not have converged (Geweke z = {z:.2})");
        }
    }
    Ok(GibbsOutput {
        averaged_na,
        averaged_nt,
        alpha: state.alpha.clone(),
        beta: state.beta.chunks(num_actions).map(<[f64]>::to_vec).collect(),
        occupied_trace,
        geweke_z,
    })
}

/// Geweke z-score comparing the first 10% and last 50% of a trace, using
/// plain sample variances.
pub fn geweke_z(trace: &[usize]) -> f64 {
    let n = trace.len();
    let first = &trace[..(n / 10).max(1).min(n)];
    let last = &trace[n - (n / 2).max(1).min(n)..];
    let stats = |xs: &[usize]| {
        let len = xs.len() as f64;
        let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / len;
        let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / len.max(1.0);
        (mean, var / len)
    };
    let (m1, v1) = stats(first);
    let (m2, v2) = stats(last);
    let se = (v1 + v2).sqrt();
    if se == 0.0 {
        if m1 == m2 { 0.0 } else { f64::INFINITY }
    } else {
        (m1 - m2) / se
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conditional_substitution() {
        // ell = 2, M = 2, node action A1, na row 1 = [2, 0], nt = [1], n = 2
        let w = table_weights(&[2, 0, 0, 0], &[0.5; 4], &[1.0, 1.0], &[1, 0], 0, 2);
        assert!((w[0] - 2.5 / 3.0 * 0.5).abs() < 1e-15);
        assert!((w[1] - 0.5 / 1.0 * 0.5).abs() < 1e-15);
        let total = w[0] + w[1];
        assert!((w[0] / total - 0.625).abs() < 1e-12);
        assert!((w[1] / total - 0.375).abs() < 1e-12);
    }

    #[test]
    fn conditional_limits() {
        let w = table_weights(&[10, 0, 0, 0], &[0.5; 4], &[1e-9, 1e-9], &[3, 0], 0, 4);
        assert!(w[0] / (w[0] + w[1]) > 1.0 - 1e-8);
        // symmetric tables
        let w = table_weights(&[2, 1, 2, 1], &[0.5; 4], &[1.0, 1.0], &[1, 1], 1, 3);
        assert!((w[0] - w[1]).abs() < 1e-15);
    }

    fn tiny_corpus() -> Vec<Vec<usize>> {
        vec![vec![0, 1, 0], vec![1, 1], vec![2, 0, 1, 2], vec![0]]
    }

    #[test]
    fn state_conditional_is_a_distribution_and_counts_balance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = SamplerState::new(tiny_corpus(), 4, 3, 1.0, 0.5);
        state.initialize(&mut rng);
        assert!(state.counts_consistent());
        for _ in 0..50 {
            state.sweep(&mut rng);
            assert!(state.counts_consistent());
            assert_eq!(state.na.iter().sum::<u32>() as usize, state.total_nodes());
        }
        for d in 0..state.num_instances() {
            for n in 0..state.actions[d].len() {
                state.remove(d, n);
                let p = gibbs_conditional(&state, d, n);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(p.iter().all(|&x| x >= 0.0));
                let t = state.assignments[d].iter().position(|&t| t == usize::MAX).unwrap();
                assert_eq!(t, n);
                state.add(d, n, sample_categorical(&mut rng, &p));
            }
        }
    }

    // Every labeling of an instance that opens tables in order.
    fn labelings(len: usize, ell: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|z: Vec<usize>| {
                    let next = z.iter().map(|&t| t + 1).max().unwrap_or(0).min(ell - 1);
                    (0..=next).map(move |t| [z.clone(), vec![t]].concat())
                })
                .collect();
        }
        out
    }

    fn joint(corpus: &[Vec<usize>], z: &[Vec<usize>], ell: usize, m: usize, alpha: &[f64], beta: f64) -> f64 {
        let mut p = 1.0;
        let mut na = vec![vec![0u32; m]; ell];
        for (actions, tables) in corpus.iter().zip(z) {
            let mut nt = vec![0u32; ell];
            for (i, (&a, &t)) in actions.iter().zip(tables).enumerate() {
                p *= crp_table_distribution(&nt, i + 1, alpha)[t];
                let row: u32 = na[t].iter().sum();
                p *= (na[t][a] as f64 + beta) / (row as f64 + beta * m as f64);
                nt[t] += 1;
                na[t][a] += 1;
            }
        }
        p
    }

    #[test]
    fn sampler_matches_exact_posterior() {
        let corpus = vec![vec![0, 1, 0], vec![1, 1], vec![0, 1]];
        let (ell, m, beta) = (3, 2, 0.5);
        let alpha = [0.7, 1.0, 1.6];
        let per_instance: Vec<Vec<Vec<usize>>> = corpus.iter().map(|a| labelings(a.len(), ell)).collect();
        let mut states = vec![vec![]];
        for options in &per_instance {
            states = states
                .into_iter()
                .flat_map(|z: Vec<Vec<usize>>| options.iter().map(move |o| [z.clone(), vec![o.clone()]].concat()))
                .collect();
        }
        let weights: Vec<f64> = states.iter().map(|z| joint(&corpus, z, ell, m, &alpha, beta)).collect();
        let total: f64 = weights.iter().sum();

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut state = SamplerState::new(corpus.clone(), ell, m, 1.0, beta);
        state.set_hyperparameters(alpha.to_vec(), vec![beta; ell * m]);
        state.initialize(&mut rng);
        let mut freq: BTreeMap<Vec<Vec<usize>>, usize> = BTreeMap::new();
        let sweeps = 200_000;
        for _ in 0..sweeps {
            state.sweep(&mut rng);
            *freq.entry(state.assignments.clone()).or_default() += 1;
        }
        assert!(freq.keys().all(|z| states.contains(z)));
        let tv: f64 = states
            .iter()
            .zip(&weights)
            .map(|(z, w)| (w / total - *freq.get(z).unwrap_or(&0) as f64 / sweeps as f64).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "total variation {tv}");
    }

    #[test]
    fn last_node_conditional_matches_table_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut state = SamplerState::new(tiny_corpus(), 4, 3, 1.0, 0.5);
        state.set_hyperparameters(vec![0.5, 1.0, 2.0, 1.5], (0..12).map(|i| 0.2 + 0.1 * i as f64).collect());
        state.initialize(&mut rng);
        for d in 0..state.num_instances() {
            let n = state.actions[d].len() - 1;
            state.remove(d, n);
            let p = gibbs_conditional(&state, d, n);
            let w = table_weights(&state.na, &state.beta, &state.alpha, &state.nt[d], state.actions[d][n], n + 1);
            let total: f64 = w.iter().sum();
            for (a, b) in p.iter().zip(&w) {
                assert!((a - b / total).abs() < 1e-12);
            }
            state.add(d, n, sample_categorical(&mut rng, &p));
        }
    }

    // Solves factor(x) = 1 by bisection in log space.
    fn stationary(factor: impl Fn(f64) -> f64) -> f64 {
        let (mut lo, mut hi) = (1e-3f64.ln(), 1e3f64.ln());
        assert!((factor(lo.exp()) - 1.0) * (factor(hi.exp()) - 1.0) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (factor(lo.exp()) - 1.0) * (factor(mid.exp()) - 1.0) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    }

    // Two overdispersed samples over two symmetric cells, as tables
    // (`ell = 2, M = 1`) or as actions (`ell = 1, M = 2`).
    fn symmetric_history(ell: usize) -> SampleHistory {
        let mut history = SampleHistory::new(ell, 3 - ell);
        for na in [[5, 1], [1, 5]] {
            let nt = if ell == 2 { na.to_vec() } else { vec![6] };
            history.record_counts(&[nt], &na);
        }
        history
    }

    #[test]
    fn per_cell_updates_have_fixed_points() {
        let history = symmetric_history(2);
        let alpha_factor = |x: f64| update_factors(&[x, x], &[1.0; 2], &history, AlphaUpdate::Corpus, BetaUpdate::Fixed).0;
        let x = stationary(|x| alpha_factor(x)[0].unwrap());
        for f in alpha_factor(x) {
            assert!((f.unwrap() - 1.0).abs() < 1e-6);
        }

        let history = symmetric_history(1);
        let beta_factor = |x: f64| update_factors(&[1.0], &[x, x], &history, AlphaUpdate::Fixed, BetaUpdate::Cell).1;
        let x = stationary(|x| beta_factor(x)[0].unwrap());
        for f in beta_factor(x) {
            assert!((f.unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shared_updates_have_fixed_points() {
        let partitions = BTreeMap::from([((5, 1), 2), ((5, 3), 1), ((2, 2), 1)]);
        let x = stationary(|x| crp_factor(&partitions, x).unwrap());
        assert!((crp_factor(&partitions, x).unwrap() - 1.0).abs() < 1e-6);

        let history = symmetric_history(1);
        let beta_factor = |x: f64| update_factors(&[1.0], &[x, x], &history, AlphaUpdate::Fixed, BetaUpdate::Symmetric).1;
        let x = stationary(|x| beta_factor(x)[0].unwrap());
        for f in beta_factor(x) {
            assert!((f.unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn crp_update_needs_partitions() {
        assert_eq!(crp_factor(&BTreeMap::new(), 1.0), None);
        // single-table partitions only: alpha shrinks to the clamp
        let single = BTreeMap::from([((4, 1), 10)]);
        assert_eq!(crp_factor(&single, 1.0), Some(0.0));
    }

    #[test]
    fn symmetric_beta_recovers_dirichlet_multinomial() {
        use rand_distr::{Dirichlet, Distribution};
        let (ell, m, truth) = (400, 5, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dirichlet = Dirichlet::new([truth; 5]).unwrap();
        let mut na = vec![0u32; ell * m];
        for t in 0..ell {
            let p = dirichlet.sample(&mut rng);
            for _ in 0..100 {
                na[t * m + sample_categorical(&mut rng, &p)] += 1;
            }
        }
        let mut history = SampleHistory::new(ell, m);
        history.record_counts(&[vec![0; ell]], &na);
        let mut beta = vec![0.1; ell * m];
        let alpha = vec![1.0; ell];
        for _ in 0..200 {
            beta = update_hyperparams(&alpha, &beta, &history, (AlphaUpdate::Fixed, BetaUpdate::Symmetric), (1e-6, 1e6)).1;
        }
        assert!(beta.iter().all(|&b| b == beta[0]));
        assert!((beta[0] - truth).abs() < 0.05 * truth, "{}", beta[0]);
    }

    #[test]
    fn all_zero_history_leaves_alpha() {
        let mut history = SampleHistory::new(2, 2);
        history.record_counts(&[vec![0, 0]], &[0, 0, 0, 0]);
        let (alpha, beta) = update_hyperparams(&[0.7, 2.0], &[0.5; 4], &history, (AlphaUpdate::Corpus, BetaUpdate::Cell), (1e-6, 1e6));
        assert_eq!(alpha, vec![0.7, 2.0]);
        assert_eq!(beta, vec![0.5; 4]);
    }

    #[test]
    fn clamping() {
        let mut history = SampleHistory::new(2, 1);
        // table 1 never used: its factor is zero, clamped from below
        history.record_counts(&[vec![6, 0], vec![4, 0]], &[10, 0]);
        let (alpha, _) = update_hyperparams(&[1.0, 1.0], &[0.5; 2], &history, (AlphaUpdate::Corpus, BetaUpdate::Cell), (1e-6, 1e6));
        assert_eq!(alpha[1], 1e-6);
    }

    #[test]
    fn deterministic_runs() {
        let config = TrainConfig { iterations: 60, burn_in: 20, avg_window: 30, ..TrainConfig::default() };
        let a = run_gibbs(&tiny_corpus(), 3, 4, &config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = run_gibbs(&tiny_corpus(), 3, 4, &config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.averaged_na, b.averaged_na);
        assert_eq!(a.alpha, b.alpha);
        let total: f64 = a.averaged_na.iter().flatten().sum();
        assert!((total - 10.0).abs() < 1e-9);
    }

    #[test]
    fn single_action_corpus_concentrates() {
        let corpus = vec![vec![1usize; 4]; 20];
        let config = TrainConfig { iterations: 200, burn_in: 50, avg_window: 100, ..TrainConfig::default() };
        let out = run_gibbs(&corpus, 3, 4, &config, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let theta = super::super::estimate_theta(&out.averaged_na, &out.beta);
        let busiest = (0..4)
            .max_by(|&a, &b| out.averaged_na[a].iter().sum::<f64>().total_cmp(&out.averaged_na[b].iter().sum()))
            .unwrap();
        assert!(theta[busiest][1] > 0.9, "{:?}", theta[busiest]);
    }

    #[test]
    fn invalid_config() {
        let config = TrainConfig { iterations: 10, burn_in: 20, avg_window: 30, ..TrainConfig::default() };
        assert!(matches!(
            run_gibbs(&tiny_corpus(), 3, 4, &config, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::ConfigInvalid(_))
        ));
    }

    #[test]
    fn geweke_flat_trace() {
        assert_eq!(geweke_z(&[3; 100]), 0.0);
        let trending: Vec<usize> = (0..100).collect();
        assert!(geweke_z(&trending).abs() > 2.0);
    }
}
