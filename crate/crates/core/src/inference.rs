//! Monte-Carlo layer: outcome sampling from the homodyne and heterodyne
//! likelihoods, maximum-likelihood estimation of the anharmonic strength,
//! Cramér–Rao saturation runs and the adaptive loop-closure simulation.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{lossy_sequence, Anharmonicity, ProtocolParams};
use crate::error::{Error, Result};
use crate::metrology::{
    cramer_rao, pdf_derivatives, qfi_numeric, HeterodyneModel, HomodyneModel, KerrModel,
    MeasurementConfig, Scheme, PDF_FLOOR,
};
use crate::numerics::{golden_section_max, linspace, pairwise_sum, MonotoneCubic};
use crate::oracle::{coherent_input, run_protocol_with, OracleOptions, RunDiagnostics};
use crate::rng::StreamRng;

/// Sample bases are cached when `M · dim` stays below this many entries.
const BASIS_CACHE_LIMIT: usize = 1 << 23;

/// 5% two-sided Kolmogorov–Smirnov coefficient.
const KS_COEFFICIENT: f64 = 1.358;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcomes {
    Homodyne(Vec<f64>),
    Heterodyne(Vec<Complex64>),
}

impl Outcomes {
    pub fn len(&self) -> usize {
        match self {
            Outcomes::Homodyne(v) => v.len(),
            Outcomes::Heterodyne(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `M` i.i.d. outcomes with everything needed to regenerate them.
#[derive(Debug, Clone)]
pub struct OutcomeSample {
    pub scheme: Scheme,
    pub outcomes: Outcomes,
    pub seed: u64,
    pub stream: u64,
    pub params: ProtocolParams,
    pub kind: Anharmonicity,
    pub config: MeasurementConfig,
    /// Kolmogorov–Smirnov distance to the model CDF (radial CDF for
    /// heterodyne outcomes).
    pub ks_statistic: f64,
    /// 5% critical value `1.358/√M`.
    pub ks_critical: f64,
}

impl OutcomeSample {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn homodyne_values(&self) -> Option<&[f64]> {
        match &self.outcomes {
            Outcomes::Homodyne(v) => Some(v),
            Outcomes::Heterodyne(_) => None,
        }
    }

    pub fn heterodyne_values(&self) -> Option<&[Complex64]> {
        match &self.outcomes {
            Outcomes::Heterodyne(v) => Some(v),
            Outcomes::Homodyne(_) => None,
        }
    }
}

fn cumulative_trapezoid(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..xs.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
        out.push(acc);
    }
    let total = acc;
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Forward and inverse CDF interpolants of a tabulated density.
#[derive(Debug, Clone)]
struct TabulatedCdf {
    forward: MonotoneCubic,
    inverse: MonotoneCubic,
}

impl TabulatedCdf {
    fn new(xs: Vec<f64>, density: &[f64]) -> Self {
        let cdf = cumulative_trapezoid(&xs, density);
        let (mut us, mut vs) = (Vec::new(), Vec::new());
        for (u, x) in cdf.iter().zip(&xs) {
            if us.last().is_none_or(|last| u > last) {
                us.push(*u);
                vs.push(*x);
            }
        }
        Self {
            forward: MonotoneCubic::new(xs, cdf),
            inverse: MonotoneCubic::new(us, vs),
        }
    }

    fn ks(&self, values: &mut [f64]) -> f64 {
        values.sort_by(f64::total_cmp);
        let m = values.len() as f64;
        values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let f = self.forward.eval(*v);
                (f - i as f64 / m).abs().max((f - (i + 1) as f64 / m).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Inverse-CDF sampler for one homodyne model, reusable across streams.
#[derive(Debug, Clone)]
pub struct HomodyneSampler {
    config: MeasurementConfig,
    params: ProtocolParams,
    kind: Anharmonicity,
    cdf: TabulatedCdf,
}

impl HomodyneSampler {
    pub fn new(
        config: &MeasurementConfig,
        params: &ProtocolParams,
        kind: Anharmonicity,
    ) -> Result<Self> {
        config.validate()?;
        let model = HomodyneModel::new(params, kind, config.phi)?;
        let table = model.tabulate(&config.x_grid)?;
        Ok(Self {
            config: MeasurementConfig {
                scheme: Scheme::Homodyne,
                ..*config
            },
            params: *params,
            kind,
            cdf: TabulatedCdf::new(table.xs, &table.pdf),
        })
    }

    pub fn sample(&self, m: usize, seed: u64, stream: u64) -> OutcomeSample {
        let mut rng = StreamRng::new(seed, stream);
        let values: Vec<f64> = (0..m).map(|_| self.cdf.inverse.eval(rng.uniform())).collect();
        let ks = self.cdf.ks(&mut values.clone());
        OutcomeSample {
            scheme: Scheme::Homodyne,
            outcomes: Outcomes::Homodyne(values),
            seed,
            stream,
            params: self.params,
            kind: self.kind,
            config: self.config,
            ks_statistic: ks,
            ks_critical: KS_COEFFICIENT / (m.max(1) as f64).sqrt(),
        }
    }
}

/// Rejection sampler for the heterodyne distribution `p(η)/π` inside the
/// grid disk, using `p ≤ 1` as the envelope.
#[derive(Debug, Clone)]
pub struct HeterodyneSampler {
    config: MeasurementConfig,
    params: ProtocolParams,
    kind: Anharmonicity,
    model: HeterodyneModel,
    radius: f64,
    radial_cdf: TabulatedCdf,
}

impl HeterodyneSampler {
    pub fn new(
        config: &MeasurementConfig,
        params: &ProtocolParams,
        kind: Anharmonicity,
    ) -> Result<Self> {
        config.validate()?;
        let model = HeterodyneModel::new(params, kind)?;
        let spec = config.eta_grid;
        let (mass, _) = model.integrate(&spec)?;
        if (mass - 1.0).abs() > crate::metrology::COVERAGE_TOLERANCE {
            return Err(Error::GridCoverage { mass });
        }
        let radius = model.radius(&spec);
        let coeffs = model.kerr.coefficients(model.kerr.strength);
        let rs = linspace(0.0, radius, spec.radial_points);
        let na = spec.angular_points;
        let wa = TAU / na as f64;
        let density: Vec<f64> = rs
            .par_iter()
            .map(|&r| {
                let ring: Vec<f64> = (0..na)
                    .map(|k| coeffs.pdf(&model.basis(Complex64::from_polar(r, wa * k as f64))))
                    .collect();
                r * wa * pairwise_sum(&ring) / PI
            })
            .collect();
        Ok(Self {
            config: MeasurementConfig {
                scheme: Scheme::Heterodyne,
                ..*config
            },
            params: *params,
            kind,
            radial_cdf: TabulatedCdf::new(rs, &density),
            model,
            radius,
        })
    }

    pub fn sample(&self, m: usize, seed: u64, stream: u64) -> Result<OutcomeSample> {
        let mut rng = StreamRng::new(seed, stream);
        let coeffs = self.model.kerr.coefficients(self.model.kerr.strength);
        let max_attempts = (m as f64 * (self.radius * self.radius).max(1.0) * 1000.0) as u64;
        let mut values = Vec::with_capacity(m);
        let mut attempts = 0u64;
        while values.len() < m {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::NonConvergence {
                    iterations: attempts as usize,
                    reason: "heterodyne rejection sampler stalled".into(),
                });
            }
            let r = self.radius * rng.uniform().sqrt();
            let t = TAU * rng.uniform();
            let eta = Complex64::from_polar(r, t);
            let p = coeffs.pdf(&self.model.basis(eta));
            if rng.uniform() < p {
                values.push(eta);
            }
        }
        let mut radii: Vec<f64> = values.iter().map(|e| e.norm()).collect();
        let ks = self.radial_cdf.ks(&mut radii);
        Ok(OutcomeSample {
            scheme: Scheme::Heterodyne,
            outcomes: Outcomes::Heterodyne(values),
            seed,
            stream,
            params: self.params,
            kind: self.kind,
            config: self.config,
            ks_statistic: ks,
            ks_critical: KS_COEFFICIENT / (m.max(1) as f64).sqrt(),
        })
    }
}

/// Either sampler, chosen by the measurement scheme.
#[derive(Debug, Clone)]
pub enum Sampler {
    Homodyne(HomodyneSampler),
    Heterodyne(Box<HeterodyneSampler>),
}

impl Sampler {
    pub fn new(
        config: &MeasurementConfig,
        params: &ProtocolParams,
        kind: Anharmonicity,
    ) -> Result<Self> {
        Ok(match config.scheme {
            Scheme::Homodyne => Sampler::Homodyne(HomodyneSampler::new(config, params, kind)?),
            Scheme::Heterodyne => {
                Sampler::Heterodyne(Box::new(HeterodyneSampler::new(config, params, kind)?))
            }
        })
    }

    pub fn sample(&self, m: usize, seed: u64, stream: u64) -> Result<OutcomeSample> {
        match self {
            Sampler::Homodyne(s) => Ok(s.sample(m, seed, stream)),
            Sampler::Heterodyne(s) => s.sample(m, seed, stream),
        }
    }
}

/// `M` homodyne outcomes from stream 0 of `seed`.
pub fn sample_homodyne(
    config: &MeasurementConfig,
    params: &ProtocolParams,
    kind: Anharmonicity,
    m: usize,
    seed: u64,
) -> Result<OutcomeSample> {
    Ok(HomodyneSampler::new(config, params, kind)?.sample(m, seed, 0))
}

/// `M` heterodyne outcomes from stream 0 of `seed`.
pub fn sample_heterodyne(
    config: &MeasurementConfig,
    params: &ProtocolParams,
    kind: Anharmonicity,
    m: usize,
    seed: u64,
) -> Result<OutcomeSample> {
    HeterodyneSampler::new(config, params, kind)?.sample(m, seed, 0)
}

/// Knobs of the maximum-likelihood search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    /// Points of the coarse log-likelihood scan over the bracket.
    pub coarse_points: usize,
    /// Golden-section tolerance relative to the bracket width.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Estimate `c·θ` instead of `θ`; the bracket is given in scaled units.
    pub scale: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            coarse_points: 41,
            rel_tol: 1e-9,
            max_iter: 200,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub estimate: f64,
    pub std_error: f64,
    pub log_likelihood_curve: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
}

/// Log-likelihood of a sample as a function of the anharmonic strength.
struct Likelihood<'a> {
    kerr: KerrModel,
    sample: &'a OutcomeSample,
    phi: f64,
    cache: Option<Vec<Complex64>>,
}

impl<'a> Likelihood<'a> {
    fn new(sample: &'a OutcomeSample) -> Result<Self> {
        let kerr = KerrModel::new(&sample.params, sample.kind)?;
        let mut lk = Self {
            kerr,
            sample,
            phi: sample.config.phi,
            cache: None,
        };
        let dim = lk.kerr.dim();
        if sample.len().saturating_mul(dim) <= BASIS_CACHE_LIMIT {
            let rows: Vec<Vec<Complex64>> = (0..sample.len())
                .into_par_iter()
                .map(|i| lk.basis(i))
                .collect();
            lk.cache = Some(rows.concat());
        }
        Ok(lk)
    }

    fn basis(&self, i: usize) -> Vec<Complex64> {
        let dim = self.kerr.dim();
        match &self.sample.outcomes {
            Outcomes::Homodyne(v) => crate::metrology::homodyne_basis(v[i], self.phi, dim),
            Outcomes::Heterodyne(v) => crate::metrology::heterodyne_basis(v[i], dim),
        }
    }

    fn with_basis<T>(&self, i: usize, f: impl FnOnce(&[Complex64]) -> T) -> T {
        match &self.cache {
            Some(c) => {
                let dim = self.kerr.dim();
                f(&c[i * dim..(i + 1) * dim])
            }
            None => f(&self.basis(i)),
        }
    }

    fn log_likelihood(&self, theta: f64) -> f64 {
        let coeffs = self.kerr.coefficients(theta);
        let terms: Vec<f64> = (0..self.sample.len())
            .into_par_iter()
            .map(|i| self.with_basis(i, |b| coeffs.pdf(b).max(PDF_FLOOR).ln()))
            .collect();
        pairwise_sum(&terms)
    }

    /// `−∂²ℓ/∂θ²`.
    fn observed_information(&self, theta: f64) -> f64 {
        let coeffs = self.kerr.coefficients(theta);
        let terms: Vec<f64> = (0..self.sample.len())
            .into_par_iter()
            .map(|i| {
                self.with_basis(i, |b| {
                    let (p, dp, d2p) = pdf_derivatives(coeffs.apply(b));
                    if p < PDF_FLOOR {
                        0.0
                    } else {
                        let s = dp / p;
                        s * s - d2p / p
                    }
                })
            })
            .collect();
        pairwise_sum(&terms)
    }
}

pub fn mle_estimate(sample: &OutcomeSample, bracket: (f64, f64)) -> Result<EstimateResult> {
    mle_estimate_with(sample, bracket, &MleOptions::default())
}

/// Coarse scan of the log-likelihood over the bracket followed by golden
/// section between the neighbours of the best scan point. The standard error
/// comes from the observed information at the maximum.
pub fn mle_estimate_with(
    sample: &OutcomeSample,
    bracket: (f64, f64),
    opts: &MleOptions,
) -> Result<EstimateResult> {
    let (lo, hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "bracket [{lo}, {hi}] must be finite and increasing"
        )));
    }
    if !(opts.scale.is_finite() && opts.scale != 0.0) || opts.coarse_points < 3 {
        return Err(Error::InvalidArgument(
            "MLE needs a finite nonzero scale and >= 3 scan points".into(),
        ));
    }
    if sample.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let c = opts.scale;
    let lk = Likelihood::new(sample)?;
    let grid = linspace(lo, hi, opts.coarse_points);
    let curve: Vec<(f64, f64)> = grid
        .iter()
        .map(|&phi| (phi, lk.log_likelihood(phi / c)))
        .collect();
    let (max_v, min_v) = curve
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(a, b), (_, v)| (a.max(*v), b.min(*v)));
    if !(max_v - min_v > 1e-12 * max_v.abs().max(1.0)) {
        return Err(Error::NonConvergence {
            iterations: 0,
            reason: "log-likelihood is flat over the bracket".into(),
        });
    }
    let best = curve
        .iter()
        .position(|(_, v)| *v == max_v)
        .expect("maximum exists");
    if best == 0 || best == curve.len() - 1 {
        return Err(Error::Bracket {
            lo,
            hi,
            boundary: curve[best].0,
        });
    }
    let g = golden_section_max(
        |phi| lk.log_likelihood(phi / c),
        grid[best - 1],
        grid[best + 1],
        opts.rel_tol * (hi - lo),
        opts.max_iter,
    );
    if !g.converged {
        return Err(Error::NonConvergence {
            iterations: g.iterations,
            reason: "golden-section search hit the iteration cap".into(),
        });
    }
    let info = lk.observed_information(g.x / c) / (c * c);
    if !(info > 0.0 && info.is_finite()) {
        return Err(Error::NonConvergence {
            iterations: g.iterations,
            reason: "observed information is not positive at the maximum".into(),
        });
    }
    Ok(EstimateResult {
        estimate: g.x,
        std_error: 1.0 / info.sqrt(),
        log_likelihood_curve: curve,
        iterations: g.iterations,
        converged: true,
    })
}

fn fisher_for(config: &MeasurementConfig, params: &ProtocolParams, kind: Anharmonicity) -> Result<f64> {
    match config.scheme {
        Scheme::Homodyne => crate::metrology::fisher_homodyne(config, params, kind),
        Scheme::Heterodyne => crate::metrology::fisher_heterodyne(config, params, kind),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbOptions {
    pub m: usize,
    pub n_repeats: usize,
    pub seed: u64,
    /// Estimator bracket in scaled units; defaults to `cθ ± k·σ_F`.
    pub bracket: Option<(f64, f64)>,
    /// `k` of the default bracket.
    pub bracket_sigmas: f64,
    pub bootstrap: usize,
    /// Reparametrization `θ → cθ`.
    pub scale: f64,
}

impl Default for CrbOptions {
    fn default() -> Self {
        Self {
            m: 1000,
            n_repeats: 200,
            seed: 0,
            bracket: None,
            bracket_sigmas: 8.0,
            bootstrap: 1000,
            scale: 1.0,
        }
    }
}

/// Empirical efficiency of the MLE. Estimates, truth and Fisher
/// information are all expressed in the scaled parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrbReport {
    pub kind: Anharmonicity,
    pub scheme: Scheme,
    pub truth: f64,
    pub scale: f64,
    pub fisher: f64,
    pub qfi: f64,
    pub m: usize,
    pub n_repeats: usize,
    pub bracket: (f64, f64),
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub bias: f64,
    /// `Var(θ̂)·M·F`.
    pub saturation: f64,
    /// 95% percentile bootstrap interval of the saturation statistic.
    pub ci_low: f64,
    pub ci_high: f64,
    pub crb: f64,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&dev) / (n - 1.0))
}

/// Repeats sample-and-estimate `n_repeats` times, repeat `r` drawing from
/// stream `r` of the seed.
pub fn crb_saturation_experiment(
    params: &ProtocolParams,
    kind: Anharmonicity,
    config: &MeasurementConfig,
    opts: &CrbOptions,
) -> Result<CrbReport> {
    if opts.n_repeats < 2 || opts.m == 0 {
        return Err(Error::InvalidArgument("need M >= 1 and at least 2 repeats".into()));
    }
    let c = opts.scale;
    let fisher_raw = fisher_for(config, params, kind)?;
    if !(fisher_raw > 0.0) {
        return Err(Error::ZeroInformation);
    }
    let fisher = fisher_raw / (c * c);
    let qfi = qfi_numeric(params, kind)? / (c * c);
    let truth = c * params.strength(kind);
    let sigma = 1.0 / (opts.m as f64 * fisher).sqrt();
    let bracket = opts.bracket.unwrap_or((
        truth - opts.bracket_sigmas * sigma,
        truth + opts.bracket_sigmas * sigma,
    ));
    let sampler = Sampler::new(config, params, kind)?;
    let mle = MleOptions {
        scale: c,
        ..MleOptions::default()
    };
    let results: Vec<EstimateResult> = (0..opts.n_repeats as u64)
        .into_par_iter()
        .map(|r| {
            let s = sampler.sample(opts.m, opts.seed, r)?;
            mle_estimate_with(&s, bracket, &mle)
        })
        .collect::<Result<_>>()?;
    let estimates: Vec<f64> = results.iter().map(|r| r.estimate).collect();
    let std_errors: Vec<f64> = results.iter().map(|r| r.std_error).collect();
    let (mean, variance) = mean_var(&estimates);
    let mf = opts.m as f64 * fisher;

    let mut rng = StreamRng::new(opts.seed, u64::MAX);
    let mut boot: Vec<f64> = (0..opts.bootstrap)
        .map(|_| {
            let resample: Vec<f64> = (0..estimates.len())
                .map(|_| estimates[rng.below(estimates.len())])
                .collect();
            mean_var(&resample).1 * mf
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = if boot.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let at = |q: f64| boot[((q * boot.len() as f64) as usize).min(boot.len() - 1)];
        (at(0.025), at(0.975))
    };

    Ok(CrbReport {
        kind,
        scheme: config.scheme,
        truth,
        scale: c,
        fisher,
        qfi,
        m: opts.m,
        n_repeats: opts.n_repeats,
        bracket,
        estimates,
        std_errors,
        mean,
        variance,
        bias: mean - truth,
        saturation: variance * mf,
        ci_low,
        ci_high,
        crb: cramer_rao(fisher, opts.m as u64)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureOptions {
    pub rounds: usize,
    pub samples_per_round: usize,
    pub seed: u64,
    /// Homodyne phase used for the estimation data.
    pub phi: f64,
    /// Half-width of the estimator bracket in units of the expected
    /// standard error at the current estimate.
    pub bracket_sigmas: f64,
    /// Estimates with `|θ̂| < significance·σ` are treated as zero.
    pub significance: f64,
    pub oracle: OracleOptions,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        Self {
            rounds: 5,
            samples_per_round: 100_000,
            seed: 0,
            phi: PI / 2.0,
            bracket_sigmas: 8.0,
            significance: 2.0,
            oracle: OracleOptions {
                keep_joint: false,
                ..OracleOptions::default()
            },
        }
    }
}

/// One estimation round of the closure loop. `tau` and the visibilities
/// describe the loop that produced this round's data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosureRound {
    pub round: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub tau: f64,
    pub visibility: f64,
    pub mean_field_visibility: f64,
    pub field_purity: f64,
    /// Loop period suggested by this round's estimate.
    pub proposed_tau: f64,
    /// Whether the proposal was adopted for the next round.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureTrace {
    pub kind: Anharmonicity,
    pub rounds: Vec<ClosureRound>,
    pub converged_round: Option<usize>,
    pub final_tau: f64,
    pub final_visibility: f64,
}

impl ClosureTrace {
    /// Visibility of every loop run, initial one first.
    pub fn visibility_trace(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rounds.iter().map(|r| r.visibility).collect();
        v.push(self.final_visibility);
        v
    }
}

fn run_loop(
    params: &ProtocolParams,
    kind: Anharmonicity,
    tau: f64,
    opts: &OracleOptions,
) -> Result<RunDiagnostics> {
    let seq = lossy_sequence(params.lambda, params.epsilon)?.with_period(tau);
    let rho0 = coherent_input(params)?;
    Ok(run_protocol_with(params, &seq, &rho0, kind, opts)?.diagnostics)
}

fn estimate_round(
    sampler: &HomodyneSampler,
    params: &ProtocolParams,
    kind: Anharmonicity,
    centre: f64,
    round: usize,
    opts: &ClosureOptions,
) -> Result<EstimateResult> {
    let cfg = MeasurementConfig::homodyne(opts.phi);
    let m = opts.samples_per_round;
    let f = crate::metrology::fisher_homodyne(&cfg, &params.with_strength(kind, centre), kind)?;
    if !(f > 0.0) {
        return Err(Error::ZeroInformation);
    }
    let sample = sampler.sample(m, opts.seed, round as u64);
    let mut half = opts.bracket_sigmas / (m as f64 * f).sqrt();
    let mut last = None;
    for _ in 0..8 {
        match mle_estimate(&sample, (centre - half, centre + half)) {
            Err(e @ Error::Bracket { .. }) => {
                last = Some(e);
                half *= 2.0;
            }
            other => return other,
        }
    }
    Err(last.expect("loop ran"))
}

/// Simulated adaptive closure. Each round estimates the strength from
/// homodyne data, proposes `τ = 2π/ω(θ̂)` and adopts it if the oracle's
/// coherence visibility does not drop. The loop starts at `τ₀ = 2π/ω_m` and
/// stops once an estimate is insignificant or agrees with the previous one
/// within its standard error.
pub fn adaptive_closure(
    params: &ProtocolParams,
    kind: Anharmonicity,
    opts: &ClosureOptions,
) -> Result<ClosureTrace> {
    params.validate()?;
    if opts.rounds == 0 || opts.samples_per_round == 0 {
        return Err(Error::InvalidArgument("need >= 1 round and >= 1 sample".into()));
    }
    let sampler = HomodyneSampler::new(&MeasurementConfig::homodyne(opts.phi), params, kind)?;
    let mut tau = TAU / params.omega_m;
    let mut diag = run_loop(params, kind, tau, &opts.oracle)?;
    let mut rounds = Vec::new();
    let mut converged_round = None;
    let mut previous: Option<f64> = None;
    for k in 0..opts.rounds {
        let centre = previous.unwrap_or(0.0);
        let est = estimate_round(&sampler, params, kind, centre, k, opts)?;
        let significant = est.estimate.abs() >= opts.significance * est.std_error;
        let settled = previous.is_some_and(|p| (est.estimate - p).abs() < est.std_error);
        let proposed = if significant {
            params.with_strength(kind, est.estimate).loop_period(kind)?
        } else {
            TAU / params.omega_m
        };
        let mut round = ClosureRound {
            round: k,
            estimate: est.estimate,
            std_error: est.std_error,
            tau,
            visibility: diag.coherence_visibility,
            mean_field_visibility: diag.mean_field_visibility,
            field_purity: diag.field_purity,
            proposed_tau: proposed,
            accepted: false,
        };
        if proposed != tau {
            let cand = run_loop(params, kind, proposed, &opts.oracle)?;
            if cand.coherence_visibility >= diag.coherence_visibility {
                tau = proposed;
                diag = cand;
                round.accepted = true;
            }
        }
        rounds.push(round);
        if !significant || settled {
            converged_round = Some(k);
            break;
        }
        previous = Some(est.estimate);
    }
    Ok(ClosureTrace {
        kind,
        rounds,
        converged_round,
        final_tau: tau,
        final_visibility: diag.coherence_visibility,
    })
}
