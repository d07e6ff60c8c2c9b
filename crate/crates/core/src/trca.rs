//! Task-related component analysis: spatial filters that maximize the
//! covariance between repeated trials, and template matching against the
//! per-region averages.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dsp::{subband_decompose_with, subband_weight, FilterBankSpec, FilterChain};
use crate::eeg::EegEpoch;
use crate::error::{Error, Result};
use crate::stats::pearson;

/// Condition number of Q above which it is ridge-regularized.
pub const MAX_CONDITION: f64 = 1e10;

/// Ridge added to Q, relative to its mean eigenvalue.
pub const RIDGE: f64 = 1e-6;

/// The weighted correlations ρ of one epoch with every region's template.
///
/// Not bounded to [−1, 1]: each entry sums the per-band correlations
/// weighted by the sub-band weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RhoVector {
    pub rho: Vec<f64>,
}

impl RhoVector {
    pub fn new(rho: Vec<f64>) -> Self {
        Self { rho }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn argmax(&self) -> usize {
        (0..self.rho.len())
            .max_by(|&a, &b| self.rho[a].total_cmp(&self.rho[b]).then(b.cmp(&a)))
            .unwrap_or(0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.rho.iter().all(|r| *r == 0.0)
    }
}

/// Per-sub-band spatial filters plus per-region filtered templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrcaModel {
    /// `filters[m]`: unit-norm spatial filter of sub-band m.
    pub filters: Vec<Vec<f64>>,
    /// `templates[region][m]`: filtered trial average.
    pub templates: Vec<Vec<Vec<f64>>>,
    /// Leading generalized eigenvalue per sub-band.
    pub eigenvalues: Vec<f64>,
    pub n_trials_trained: usize,
    pub sample_rate_hz: f64,
}

impl TrcaModel {
    pub fn n_regions(&self) -> usize {
        self.templates.len()
    }

    pub fn n_subbands(&self) -> usize {
        self.filters.len()
    }

    pub fn n_channels(&self) -> usize {
        self.filters.first().map_or(0, Vec::len)
    }

    pub fn template_len(&self) -> usize {
        self.templates
            .first()
            .and_then(|t| t.first())
            .map_or(0, Vec::len)
    }

    fn check_epoch(&self, epoch: &EegEpoch) -> Result<()> {
        if epoch.channels() != self.n_channels() {
            return Err(Error::DimensionMismatch(format!(
                "epoch has {} channels, model {}",
                epoch.channels(),
                self.n_channels()
            )));
        }
        if epoch.len() != self.template_len() {
            return Err(Error::DimensionMismatch(format!(
                "epoch has {} samples, templates {}",
                epoch.len(),
                self.template_len()
            )));
        }
        Ok(())
    }

    /// ρ from per-band filtered single-channel series.
    fn rho_from_components(&self, components: &[Vec<f64>]) -> Result<RhoVector> {
        let weights: Vec<f64> = (1..=components.len())
            .map(subband_weight)
            .collect::<Result<_>>()?;
        let rho = self
            .templates
            .iter()
            .map(|bands| {
                components
                    .iter()
                    .zip(bands)
                    .zip(&weights)
                    .map(|((y, t), a)| a * pearson(y, t))
                    .sum()
            })
            .collect();
        Ok(RhoVector { rho })
    }
}

/// Leading TRCA filter over trials grouped by region (each trial channels ×
/// samples, already band-limited).
///
/// S sums the cross-covariances of distinct trials within each region, Q the
/// covariance of all trials concatenated. Returns the unit-norm filter and
/// its generalized eigenvalue.
pub fn trca_filter(trials: &[Vec<DMatrix<f64>>]) -> Result<(Vec<f64>, f64)> {
    let first = trials
        .iter()
        .flatten()
        .next()
        .ok_or_else(|| Error::InvalidArgument("no training trials".into()))?;
    let nc = first.nrows();
    let mut s = DMatrix::<f64>::zeros(nc, nc);
    let mut q = DMatrix::<f64>::zeros(nc, nc);
    for (region, group) in trials.iter().enumerate() {
        if group.len() < 2 {
            return Err(Error::TooFewTrials {
                region,
                got: group.len(),
                needed: 2,
            });
        }
        let mut sum = DMatrix::<f64>::zeros(nc, first.ncols());
        for x in group {
            if x.shape() != first.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "trial shape {:?} differs from {:?}",
                    x.shape(),
                    first.shape()
                )));
            }
            let xc = centered(x);
            q += &xc * xc.transpose();
            sum += xc;
        }
        // Σ_{h1≠h2} X_h1 X_h2ᵀ = U Uᵀ − Σ_h X_h X_hᵀ
        s += &sum * sum.transpose();
    }
    s -= &q;

    let q = regularize(q)?;
    let chol = q
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let l = chol.l();
    let ls = l
        .solve_lower_triangular(&s)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let m = l
        .solve_lower_triangular(&ls.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.imax();
    let y: DVector<f64> = eig.eigenvectors.column(top).into_owned();
    let w = l
        .tr_solve_lower_triangular(&y)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let norm = w.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Numerical("degenerate spatial filter".into()));
    }
    Ok(((w / norm).iter().copied().collect(), eig.eigenvalues[top]))
}

fn centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        let m = row.mean();
        row.add_scalar_mut(-m);
    }
    xc
}

/// Q + εI with ε = 1e-6·trace(Q)/N_c when Q is ill-conditioned.
fn regularize(mut q: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = q.nrows();
    let eig = SymmetricEigen::new(q.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) {
        return Err(Error::Numerical("training data has no variance".into()));
    }
    if min <= 0.0 || max / min > MAX_CONDITION {
        let eps = RIDGE * q.trace() / n as f64;
        log::debug!(
            "ridge-regularizing Q (condition {:.3e}) with ε = {eps:.3e}",
            max / min
        );
        for i in 0..n {
            q[(i, i)] += eps;
        }
    }
    Ok(q)
}

/// Train one shared filter per sub-band from preprocessed trials,
/// `trials[region]` holding at least two epochs each.
pub fn train_trca(trials: &[Vec<EegEpoch>], spec: &FilterBankSpec) -> Result<TrcaModel> {
    let chain = FilterChain::design(spec, spec.target_rate_hz)?;
    train_trca_with(&chain, trials)
}

pub fn train_trca_with(chain: &FilterChain, trials: &[Vec<EegEpoch>]) -> Result<TrcaModel> {
    let first = trials
        .iter()
        .flatten()
        .next()
        .ok_or_else(|| Error::InvalidArgument("no training trials".into()))?;
    for (region, group) in trials.iter().enumerate() {
        if group.len() < 2 {
            return Err(Error::TooFewTrials {
                region,
                got: group.len(),
                needed: 2,
            });
        }
        for e in group {
            if e.channels() != first.channels() || e.len() != first.len() {
                return Err(Error::DimensionMismatch(
                    "training epochs differ in shape".into(),
                ));
            }
        }
    }
    let n_sub = chain.n_subbands();
    // banded[m][region][trial]
    let mut banded: Vec<Vec<Vec<DMatrix<f64>>>> = vec![vec![Vec::new(); trials.len()]; n_sub];
    for (region, group) in trials.iter().enumerate() {
        for epoch in group {
            for (m, band) in subband_decompose_with(chain, epoch)?
                .into_iter()
                .enumerate()
            {
                banded[m][region].push(band.to_matrix());
            }
        }
    }

    let mut filters = Vec::with_capacity(n_sub);
    let mut eigenvalues = Vec::with_capacity(n_sub);
    let mut templates = vec![Vec::with_capacity(n_sub); trials.len()];
    for band in &banded {
        let (mut w, lambda) = trca_filter(band)?;
        let mut band_templates: Vec<Vec<f64>> = band
            .iter()
            .map(|group| {
                let mean = group.iter().fold(
                    DMatrix::zeros(group[0].nrows(), group[0].ncols()),
                    |acc, x| acc + x,
                ) / group.len() as f64;
                mean.tr_mul(&DVector::from_column_slice(&w))
                    .iter()
                    .copied()
                    .collect()
            })
            .collect();
        // sign: the largest-magnitude template sample is positive
        let peak = band_templates
            .iter()
            .flatten()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if peak < 0.0 {
            w.iter_mut().for_each(|v| *v = -*v);
            band_templates.iter_mut().flatten().for_each(|v| *v = -*v);
        }
        for (region, t) in band_templates.into_iter().enumerate() {
            templates[region].push(t);
        }
        filters.push(w);
        eigenvalues.push(lambda);
    }
    Ok(TrcaModel {
        filters,
        templates,
        eigenvalues,
        n_trials_trained: trials.iter().map(Vec::len).sum(),
        sample_rate_hz: first.sample_rate_hz,
    })
}

/// ρ of a preprocessed epoch against every region's template.
pub fn correlate(model: &TrcaModel, epoch: &EegEpoch, spec: &FilterBankSpec) -> Result<RhoVector> {
    let chain = FilterChain::design(spec, spec.target_rate_hz)?;
    correlate_with(model, &chain, epoch)
}

pub fn correlate_with(
    model: &TrcaModel,
    chain: &FilterChain,
    epoch: &EegEpoch,
) -> Result<RhoVector> {
    model.check_epoch(epoch)?;
    let bands = subband_decompose_with(chain, epoch)?;
    let components: Vec<Vec<f64>> = bands
        .iter()
        .zip(&model.filters)
        .map(|(b, w)| b.spatially_filter(w))
        .collect();
    model.rho_from_components(&components)
}

/// Anything that scores an epoch against each region.
///
/// TRCA is the only implementation; other matchers plug in here.
pub trait TemplateMatcher: Send + Sync {
    fn n_regions(&self) -> usize;

    /// ρ of an epoch at the acquisition side of the preprocessing chain.
    fn match_raw(&self, raw: &EegEpoch) -> Result<RhoVector>;
}

/// A trained model bundled with the filters it runs through.
#[derive(Debug, Clone)]
pub struct TrcaDecoder {
    pub model: TrcaModel,
    chain: FilterChain,
}

impl TrcaDecoder {
    /// `input_rate_hz` is the rate raw epochs arrive at.
    pub fn new(model: TrcaModel, spec: &FilterBankSpec, input_rate_hz: f64) -> Result<Self> {
        if model.n_subbands() != spec.n_subbands {
            return Err(Error::DimensionMismatch(format!(
                "model has {} sub-bands, filter bank {}",
                model.n_subbands(),
                spec.n_subbands
            )));
        }
        Ok(Self {
            model,
            chain: FilterChain::design(spec, input_rate_hz)?,
        })
    }
}

impl TemplateMatcher for TrcaDecoder {
    fn n_regions(&self) -> usize {
        self.model.n_regions()
    }

    /// Spatially filters first, then preprocesses and band-splits the single
    /// component. All filtering is linear and per channel, so this equals
    /// preprocessing every channel first.
    fn match_raw(&self, raw: &EegEpoch) -> Result<RhoVector> {
        if raw.channels() != self.model.n_channels() {
            return Err(Error::DimensionMismatch(format!(
                "epoch has {} channels, model {}",
                raw.channels(),
                self.model.n_channels()
            )));
        }
        let components = self
            .model
            .filters
            .iter()
            .enumerate()
            .map(|(m, w)| {
                let y = self.chain.preprocess_series(&raw.spatially_filter(w))?;
                if y.len() != self.model.template_len() {
                    return Err(Error::DimensionMismatch(format!(
                        "preprocessed epoch has {} samples, templates {}",
                        y.len(),
                        self.model.template_len()
                    )));
                }
                self.chain.subband_series(m, &y)
            })
            .collect::<Result<Vec<_>>>()?;
        self.model.rho_from_components(&components)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::preprocess;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise(rng: &mut ChaCha8Rng, nc: usize, len: usize, sd: f64) -> Vec<Vec<f64>> {
        (0..nc)
            .map(|_| {
                (0..len)
                    .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    }

    /// Eight regions, each a random waveform on a common mixing vector.
    fn toy_trials(seed: u64, reps: usize, noise_sd: f64) -> (Vec<Vec<EegEpoch>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nc = 6;
        let a: Vec<f64> = (0..nc).map(|_| rng.random_range(0.5..1.5)).collect();
        let waves: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                (0..250)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let trials = waves
            .iter()
            .map(|s| {
                (0..reps)
                    .map(|_| {
                        let mut x = noise(&mut rng, nc, 250, noise_sd);
                        for (c, row) in x.iter_mut().enumerate() {
                            for (v, sv) in row.iter_mut().zip(s) {
                                *v += a[c] * sv;
                            }
                        }
                        let raw = EegEpoch::new(x, 250.0).unwrap();
                        preprocess(&raw, &FilterBankSpec::default()).unwrap()
                    })
                    .collect()
            })
            .collect();
        (trials, waves)
    }

    #[test]
    fn identical_trials_correlate_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<DMatrix<f64>> =
            vec![DMatrix::from_fn(4, 200, |_, _| rng.sample(StandardNormal)); 3];
        let (w, _) = trca_filter(&[x.clone()]).unwrap();
        let y: Vec<Vec<f64>> = x
            .iter()
            .map(|m| {
                m.tr_mul(&DVector::from_column_slice(&w))
                    .iter()
                    .copied()
                    .collect()
            })
            .collect();
        assert_abs_diff_eq!(pearson(&y[0], &y[1]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn planted_component_matches_optimal_filter() {
        // white noise of equal power on every channel: the optimal filter is ∝ a
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nc = 21;
            let a = DVector::from_fn(nc, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
            let s: Vec<f64> = (0..250).map(|_| rng.sample(StandardNormal)).collect();
            let noise_sd = (1.0 / nc as f64).sqrt();
            let trials: Vec<DMatrix<f64>> = (0..6)
                .map(|_| {
                    DMatrix::from_fn(nc, 250, |c, t| {
                        a[c] * s[t] + noise_sd * rng.sample::<f64, _>(StandardNormal)
                    })
                })
                .collect();
            let (w, _) = trca_filter(&[trials]).unwrap();
            let cos = DVector::from_column_slice(&w).dot(&a).abs();
            assert!(cos >= 0.9, "seed {seed}: cos {cos}");
        }
    }

    #[test]
    fn rejects_single_trial_regions() {
        let x = vec![DMatrix::<f64>::identity(3, 10)];
        assert!(matches!(
            trca_filter(&[x]),
            Err(Error::TooFewTrials { region: 0, .. })
        ));
    }

    #[test]
    fn filters_are_unit_norm_and_templates_match_length() {
        let (trials, _) = toy_trials(2, 4, 0.5);
        let model = train_trca(&trials, &FilterBankSpec::default()).unwrap();
        assert_eq!(model.n_subbands(), 5);
        assert_eq!(model.n_regions(), 8);
        assert_eq!(model.n_trials_trained, 32);
        for w in &model.filters {
            assert_abs_diff_eq!(w.iter().map(|v| v * v).sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert_eq!(model.template_len(), 250);
    }

    #[test]
    fn template_correlates_to_sum_of_weights() {
        let spec = FilterBankSpec::default();
        let (trials, _) = toy_trials(3, 4, 0.5);
        let model = train_trca(&trials, &spec).unwrap();
        let chain = FilterChain::design(&spec, 250.0).unwrap();
        let total: f64 = (1..=5).map(|m| subband_weight(m).unwrap()).sum();
        // 1.25 + 0.67045 + 0.50328 + 0.42678 + 0.38375
        assert_abs_diff_eq!(total, 3.2342515, epsilon = 1e-6);
        // an epoch whose every band reproduces template k
        let k = 5;
        let components: Vec<Vec<f64>> = model.templates[k].clone();
        let rho = model.rho_from_components(&components).unwrap();
        assert_abs_diff_eq!(rho.rho[k], total, epsilon = 1e-12);
        let negated: Vec<Vec<f64>> = components
            .iter()
            .map(|c| c.iter().map(|v| -v).collect())
            .collect();
        assert_abs_diff_eq!(
            model.rho_from_components(&negated).unwrap().rho[k],
            -total,
            epsilon = 1e-12
        );
        // held-out trials are classified by argmax
        let (test, _) = toy_trials(3, 6, 0.5);
        for (region, group) in test.iter().enumerate() {
            let rho = correlate_with(&model, &chain, &group[5]).unwrap();
            assert_eq!(rho.argmax(), region);
        }
    }

    #[test]
    fn rho_is_scale_invariant_and_odd() {
        let spec = FilterBankSpec::default();
        let (trials, _) = toy_trials(4, 3, 0.5);
        let model = train_trca(&trials, &spec).unwrap();
        let e = &trials[2][0];
        let base = correlate(&model, e, &spec).unwrap();
        let scaled = correlate(&model, &e.scaled(3.7), &spec).unwrap();
        let flipped = correlate(&model, &e.scaled(-1.0), &spec).unwrap();
        for i in 0..8 {
            assert_abs_diff_eq!(base.rho[i], scaled.rho[i], epsilon = 1e-12);
            assert_abs_diff_eq!(base.rho[i], -flipped.rho[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_epoch_gives_zero_rho() {
        let spec = FilterBankSpec::default();
        let (trials, _) = toy_trials(5, 3, 0.5);
        let model = train_trca(&trials, &spec).unwrap();
        let rho = correlate(&model, &EegEpoch::zeros(6, 250, 250.0), &spec).unwrap();
        assert!(rho.is_degenerate());
    }

    #[test]
    fn fast_path_equals_channelwise_preprocessing() {
        let spec = FilterBankSpec::default();
        let (trials, _) = toy_trials(6, 3, 0.5);
        let model = train_trca(&trials, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let decoder = TrcaDecoder::new(model.clone(), &spec, 250.0).unwrap();
        let raw = EegEpoch::new(noise(&mut rng, 6, 250, 1.0), 250.0).unwrap();
        let slow = correlate(&model, &preprocess(&raw, &spec).unwrap(), &spec).unwrap();
        let fast = decoder.match_raw(&raw).unwrap();
        for i in 0..8 {
            assert_abs_diff_eq!(slow.rho[i], fast.rho[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let spec = FilterBankSpec::default();
        let (trials, _) = toy_trials(7, 3, 0.5);
        let model = train_trca(&trials, &spec).unwrap();
        let short = EegEpoch::zeros(6, 200, 250.0);
        assert!(matches!(
            correlate(&model, &short, &spec),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(RhoVector::new(vec![0.2, 0.5, 0.5]).argmax(), 1);
        assert_eq!(RhoVector::new(vec![0.0; 4]).argmax(), 0);
    }
}
