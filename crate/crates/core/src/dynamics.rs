//! Closed-form layer: first-order Heisenberg quadratures of the anharmonic
//! oscillator, the effective Kerr maps felt by the field after a closed
//! four-pulse loop, mean-field phases, the amplitude-dependent frequency and
//! the pulse-loss model.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    annihilation_matrix, coherent_vector_with_threshold, suggested_dim, CMatrix, CVector,
    FockDensity, FockVector, OperatorMatrix, DEFAULT_TRUNCATION_THRESHOLD,
};

/// Extra levels used when building polynomial operators before cropping, so
/// that the kept block has exact matrix elements.
pub const OPERATOR_BUFFER: usize = 8;

/// Upper bound on each dimensionless smallness parameter before a validity
/// flag trips.
pub const PERTURBATIVE_LIMIT: f64 = 0.1;

/// Minimum `λ²N_p² / n̄` regarded as thermally dominated.
pub const THERMAL_DOMINANCE_MIN: f64 = 10.0;

/// Which anharmonic correction the oscillator carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anharmonicity {
    /// `(γ/4) ħω_m X⁴`
    Quartic,
    /// `(δ/3) ħω_m X³`
    Cubic,
}

impl Anharmonicity {
    pub fn name(self) -> &'static str {
        match self {
            Anharmonicity::Quartic => "quartic",
            Anharmonicity::Cubic => "cubic",
        }
    }
}

impl std::fmt::Display for Anharmonicity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the oscillation amplitude `|A|` entering the frequency shift is
/// chosen. The default ties it to the pulse displacement, `|A| = λ N_p`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeConvention {
    #[default]
    PhotonDisplacement,
    /// Explicit `|A|²`.
    Explicit(f64),
}

/// Whether violated validity flags abort or only log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Validity {
    #[default]
    Warn,
    Strict,
}

impl Validity {
    pub fn enforce(self, ok: bool, what: impl FnOnce() -> String) -> Result<()> {
        if ok {
            return Ok(());
        }
        let msg = what();
        match self {
            Validity::Warn => {
                log::warn!("{msg}");
                Ok(())
            }
            Validity::Strict => Err(Error::Perturbation(msg)),
        }
    }
}

/// Physical and numerical parameters of one protocol run. All quantities
/// are dimensionless; `omega_m` fixes the time unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Rescaled coupling `g/k`.
    pub lambda: f64,
    /// Quartic anharmonicity.
    pub gamma: f64,
    /// Cubic anharmonicity.
    pub delta: f64,
    /// Mean thermal phonon number of the initial mechanics.
    pub nbar: f64,
    /// Coherent amplitude of the field.
    pub alpha: Complex64,
    pub omega_m: f64,
    /// Fractional coupling loss per pulse.
    pub epsilon: f64,
    pub dim_c: usize,
    pub dim_m: usize,
    pub amplitude: AmplitudeConvention,
    pub truncation_threshold: f64,
    pub validity: Validity,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            gamma: 0.0,
            delta: 0.0,
            nbar: 0.0,
            alpha: Complex64::new(3.0, 0.0),
            omega_m: 1.0,
            epsilon: 0.0,
            dim_c: 30,
            dim_m: 30,
            amplitude: AmplitudeConvention::PhotonDisplacement,
            truncation_threshold: DEFAULT_TRUNCATION_THRESHOLD,
            validity: Validity::Warn,
        }
    }
}

impl ProtocolParams {
    /// `N_p = |α|²`.
    pub fn photon_number(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    /// Sets a real coherent amplitude with `|α|² = n_p`.
    pub fn with_photon_number(mut self, n_p: f64) -> Self {
        self.alpha = Complex64::new(n_p.max(0.0).sqrt(), 0.0);
        self
    }

    pub fn strength(&self, kind: Anharmonicity) -> f64 {
        match kind {
            Anharmonicity::Quartic => self.gamma,
            Anharmonicity::Cubic => self.delta,
        }
    }

    pub fn with_strength(mut self, kind: Anharmonicity, value: f64) -> Self {
        match kind {
            Anharmonicity::Quartic => self.gamma = value,
            Anharmonicity::Cubic => self.delta = value,
        }
        self
    }

    /// `|A|²` under the configured amplitude convention.
    pub fn amplitude_sq(&self) -> f64 {
        match self.amplitude {
            AmplitudeConvention::PhotonDisplacement => {
                let a = self.lambda * self.photon_number();
                a * a
            }
            AmplitudeConvention::Explicit(a2) => a2,
        }
    }

    /// Rejects non-finite or out-of-range values.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("nbar", self.nbar),
            ("alpha.re", self.alpha.re),
            ("alpha.im", self.alpha.im),
            ("omega_m", self.omega_m),
            ("epsilon", self.epsilon),
            ("truncation_threshold", self.truncation_threshold),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite")));
            }
        }
        if let AmplitudeConvention::Explicit(a2) = self.amplitude {
            if !a2.is_finite() || a2 < 0.0 {
                return Err(Error::InvalidArgument("explicit |A|² must be >= 0".into()));
            }
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidArgument("lambda must be >= 0".into()));
        }
        if self.nbar < 0.0 {
            return Err(Error::InvalidArgument("nbar must be >= 0".into()));
        }
        if self.omega_m <= 0.0 {
            return Err(Error::InvalidArgument("omega_m must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidArgument("epsilon must lie in [0, 1)".into()));
        }
        if self.dim_c < 1 || self.dim_m < 2 {
            return Err(Error::InvalidArgument(
                "need dim_c >= 1 and dim_m >= 2".into(),
            ));
        }
        if self.truncation_threshold <= 0.0 {
            return Err(Error::InvalidArgument(
                "truncation_threshold must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn validity_flags(&self) -> ValidityFlags {
        ValidityFlags::evaluate(self)
    }

    /// Mechanical frequency that closes the loop for this anharmonicity.
    pub fn loop_frequency(&self, kind: Anharmonicity) -> Result<f64> {
        match kind {
            Anharmonicity::Quartic => {
                anharmonic_frequency(self.omega_m, self.gamma, self.amplitude_sq(), self.validity)
            }
            // unshifted at first order in δ
            Anharmonicity::Cubic => Ok(self.omega_m),
        }
    }

    pub fn loop_period(&self, kind: Anharmonicity) -> Result<f64> {
        Ok(2.0 * PI / self.loop_frequency(kind)?)
    }
}

/// The dimensionless smallness parameters the closed forms rely on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidityFlags {
    /// `|γ| (λ N_p)²`
    pub quartic_amplitude: f64,
    /// `|γ| λ⁴ N_p³`
    pub quartic_mean_field: f64,
    /// `|δ| λ N_p`
    pub cubic_amplitude: f64,
    /// `|δ| λ³ N_p²`
    pub cubic_mean_field: f64,
    /// `λ² N_p² / n̄`
    pub thermal_dominance: f64,
    /// `ε n̄ / N_p`
    pub loss_condition: f64,
}

impl ValidityFlags {
    pub fn evaluate(p: &ProtocolParams) -> Self {
        let np = p.photon_number();
        let l = p.lambda;
        Self {
            quartic_amplitude: p.gamma.abs() * (l * np).powi(2),
            quartic_mean_field: p.gamma.abs() * l.powi(4) * np.powi(3),
            cubic_amplitude: p.delta.abs() * l * np,
            cubic_mean_field: p.delta.abs() * l.powi(3) * np * np,
            thermal_dominance: (l * np).powi(2) / p.nbar.max(1e-300),
            loss_condition: if np > 0.0 {
                p.epsilon * p.nbar / np
            } else if p.epsilon * p.nbar > 0.0 {
                f64::INFINITY
            } else {
                0.0
            },
        }
    }

    pub fn quartic_ok(&self) -> bool {
        self.quartic_amplitude < PERTURBATIVE_LIMIT && self.quartic_mean_field < PERTURBATIVE_LIMIT
    }

    pub fn cubic_ok(&self) -> bool {
        self.cubic_amplitude < PERTURBATIVE_LIMIT && self.cubic_mean_field < PERTURBATIVE_LIMIT
    }

    pub fn thermal_ok(&self) -> bool {
        self.thermal_dominance >= THERMAL_DOMINANCE_MIN
    }

    pub fn loss_ok(&self) -> bool {
        self.loss_condition < PERTURBATIVE_LIMIT
    }
}

fn check_kind(p: &ProtocolParams, kind: Anharmonicity) -> Result<()> {
    let f = p.validity_flags();
    match kind {
        Anharmonicity::Quartic => p.validity.enforce(f.quartic_ok(), || {
            format!(
                "quartic flags |γ|(λN_p)² = {:.3e}, |γ|λ⁴N_p³ = {:.3e} (limit {PERTURBATIVE_LIMIT})",
                f.quartic_amplitude, f.quartic_mean_field
            )
        })?,
        Anharmonicity::Cubic => p.validity.enforce(f.cubic_ok(), || {
            format!(
                "cubic flags |δ|λN_p = {:.3e}, |δ|λ³N_p² = {:.3e} (limit {PERTURBATIVE_LIMIT})",
                f.cubic_amplitude, f.cubic_mean_field
            )
        })?,
    }
    if p.nbar > 0.0 {
        p.validity.enforce(f.thermal_ok(), || {
            format!(
                "thermal dominance λ²N_p²/n̄ = {:.3e} below {THERMAL_DOMINANCE_MIN}",
                f.thermal_dominance
            )
        })?;
    }
    Ok(())
}

/// `ω = ω_m (1 + (3/8) γ (2 + |A|²))`.
pub fn anharmonic_frequency(omega_m: f64, gamma: f64, amp_sq: f64, validity: Validity) -> Result<f64> {
    let flag = gamma.abs() * amp_sq;
    validity.enforce(flag < PERTURBATIVE_LIMIT, || {
        format!("|γ||A|² = {flag:.3e} exceeds {PERTURBATIVE_LIMIT}")
    })?;
    Ok(omega_m * (1.0 + 0.375 * gamma * (2.0 + amp_sq)))
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

struct Ladder {
    b: CMatrix,
    bd: CMatrix,
}

impl Ladder {
    fn new(dim: usize) -> Self {
        let b = annihilation_matrix(dim + OPERATOR_BUFFER);
        let bd = b.adjoint();
        Self { b, bd }
    }

    fn size(&self) -> usize {
        self.b.nrows()
    }

    fn identity(&self) -> CMatrix {
        CMatrix::identity(self.size(), self.size())
    }

    fn number(&self) -> CMatrix {
        &self.bd * &self.b
    }
}

fn crop(m: CMatrix, dim: usize) -> CMatrix {
    m.view((0, 0), (dim, dim)).into_owned()
}

/// `Δ = b³ − b†³ − 3b† + 3b − 3b†²b + 3b†b²`, the anti-Hermitian deformation
/// of the quarter-period quadratures.
pub fn quadrature_correction_quartic(dim_m: usize) -> Result<OperatorMatrix> {
    if dim_m < 4 {
        return Err(Error::InvalidArgument("Δ needs dim_m >= 4".into()));
    }
    let l = Ladder::new(dim_m);
    let (b, bd) = (&l.b, &l.bd);
    let b3 = b * b * b;
    let bd3 = bd * bd * bd;
    let m = &b3 - &bd3 - bd * c(3.0, 0.0) + b * c(3.0, 0.0) - bd * bd * b * c(3.0, 0.0)
        + bd * b * b * c(3.0, 0.0);
    Ok(OperatorMatrix::general(crop(m, dim_m)))
}

/// `−(b†b + 1/2)`, the diagonal shift appearing in the cubic quadratures.
pub fn quadrature_correction_cubic(dim_m: usize) -> Result<OperatorMatrix> {
    if dim_m < 2 {
        return Err(Error::InvalidArgument("dim_m >= 2 required".into()));
    }
    let m = CMatrix::from_diagonal(&CVector::from_iterator(
        dim_m,
        (0..dim_m).map(|n| c(-(n as f64) - 0.5, 0.0)),
    ));
    OperatorMatrix::new(m, true)
}

fn phase(k: f64, wt: f64) -> Complex64 {
    Complex64::from_polar(1.0, k * wt)
}

fn heisenberg_quartic_matrix(gamma: f64, wt: f64, dim: usize) -> CMatrix {
    let l = Ladder::new(dim);
    let (b, bd) = (&l.b, &l.bd);
    let bd3 = bd * bd * bd;
    let b3 = b * b * b;
    let hermite_part = bd * (l.identity() + l.number());
    let corr = bd3 * ((phase(-1.0, wt) - phase(3.0, wt)) * 0.25)
        + b3 * ((phase(-3.0, wt) - phase(-1.0, wt)) * 0.5)
        + hermite_part * ((phase(-1.0, wt) - phase(1.0, wt)) * 1.5);
    let m = b * phase(-1.0, wt) + corr * c(gamma / 4.0, 0.0);
    crop(m, dim)
}

fn heisenberg_cubic_matrix(delta: f64, wt: f64, dim: usize) -> CMatrix {
    let l = Ladder::new(dim);
    let (b, bd) = (&l.b, &l.bd);
    let two_n_plus_one = l.number() * c(2.0, 0.0) + l.identity();
    let corr = two_n_plus_one * (phase(-1.0, wt) - c(1.0, 0.0))
        + b * b * (phase(-2.0, wt) - phase(-1.0, wt))
        + bd * bd * ((phase(-1.0, wt) - phase(2.0, wt)) / 3.0);
    let m = b * phase(-1.0, wt) + corr * c(delta / 2f64.powf(1.5), 0.0);
    crop(m, dim)
}

/// First-order Heisenberg annihilation operator `b(t)` of the quartic
/// oscillator, rotating at the shifted frequency from
/// [`ProtocolParams::loop_frequency`].
pub fn heisenberg_b_quartic(t: f64, params: &ProtocolParams) -> Result<OperatorMatrix> {
    check_kind(params, Anharmonicity::Quartic)?;
    let w = params.loop_frequency(Anharmonicity::Quartic)?;
    Ok(OperatorMatrix::general(heisenberg_quartic_matrix(
        params.gamma,
        w * t,
        params.dim_m,
    )))
}

/// First-order Heisenberg `b(t)` of the cubic oscillator (`ω = ω_m`).
pub fn heisenberg_b_cubic(t: f64, params: &ProtocolParams) -> Result<OperatorMatrix> {
    check_kind(params, Anharmonicity::Cubic)?;
    Ok(OperatorMatrix::general(heisenberg_cubic_matrix(
        params.delta,
        params.omega_m * t,
        params.dim_m,
    )))
}

/// `X = (b + b†)/√2` built from a (possibly non-unitary) Heisenberg `b`.
pub fn position_quadrature(b: &OperatorMatrix) -> OperatorMatrix {
    let m = (b.matrix() + b.matrix().adjoint()) * c(FRAC_1_SQRT_2, 0.0);
    OperatorMatrix::general(m)
}

fn quarter_period_quadratures(
    kind: Anharmonicity,
    params: &ProtocolParams,
) -> Result<[OperatorMatrix; 4]> {
    check_kind(params, kind)?;
    let w = params.loop_frequency(kind)?;
    let tau = 2.0 * PI / w;
    let build = |k: usize| {
        let wt = w * tau * k as f64 / 4.0;
        let b = match kind {
            Anharmonicity::Quartic => heisenberg_quartic_matrix(params.gamma, wt, params.dim_m),
            Anharmonicity::Cubic => heisenberg_cubic_matrix(params.delta, wt, params.dim_m),
        };
        position_quadrature(&OperatorMatrix::general(b))
    };
    Ok([build(0), build(1), build(2), build(3)])
}

/// `X_m(t)` at `t = 0, τ/4, τ/2, 3τ/4` for the quartic oscillator.
pub fn quadratures_quartic_quarter_periods(params: &ProtocolParams) -> Result<[OperatorMatrix; 4]> {
    quarter_period_quadratures(Anharmonicity::Quartic, params)
}

/// `X_m(t)` at `t = 0, τ/4, τ/2, 3τ/4` for the cubic oscillator.
pub fn quadratures_cubic_quarter_periods(params: &ProtocolParams) -> Result<[OperatorMatrix; 4]> {
    quarter_period_quadratures(Anharmonicity::Cubic, params)
}

/// Diagonal phase map `ξ_eff = exp(i θ(n))` acting on the field.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveKerrMap {
    pub kind: Anharmonicity,
    /// `θ_n`
    pub theta: Vec<f64>,
    /// `∂θ_n / ∂(strength)`, the generator used for Fisher information.
    pub generator: Vec<f64>,
}

impl EffectiveKerrMap {
    /// Builds the map in dimension `dim` without validity checks.
    pub fn build(params: &ProtocolParams, kind: Anharmonicity, dim: usize) -> Self {
        let l = params.lambda;
        let l2 = l * l;
        let (theta, generator) = (0..dim)
            .map(|n| {
                let n = n as f64;
                let n2 = n * n;
                let kerr = l2 * n2;
                match kind {
                    Anharmonicity::Quartic => {
                        let g = -0.5 * (l2 * l2 * n2 * n2 + 3.0 * l2 * n2 * params.nbar);
                        (kerr + params.gamma * g, g)
                    }
                    Anharmonicity::Cubic => {
                        let g = -(2.0 / 9.0) * l2 * l * n2 * n;
                        (kerr + params.delta * g, g)
                    }
                }
            })
            .unzip();
        Self {
            kind,
            theta,
            generator,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: dim,
            });
        }
        Ok(())
    }

    pub fn apply(&self, psi: &FockVector) -> Result<FockVector> {
        self.check_dim(psi.dim())?;
        let amp = psi
            .amplitudes()
            .iter()
            .zip(&self.theta)
            .map(|(a, th)| a * Complex64::from_polar(1.0, *th))
            .collect();
        FockVector::from_amplitudes(amp)
    }

    /// `ξ ρ ξ†`.
    pub fn apply_density(&self, rho: &FockDensity) -> Result<FockDensity> {
        self.check_dim(rho.dim())?;
        let mut m = rho.matrix().clone();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                m[(i, j)] *= Complex64::from_polar(1.0, self.theta[i] - self.theta[j]);
            }
        }
        Ok(FockDensity::from_matrix_unchecked(m))
    }

    /// `∂_s (ξ|ψ>)` for the map's strength `s`: amplitude-wise `i ∂θ_n`.
    pub fn derivative(&self, psi: &FockVector) -> Result<FockVector> {
        let out = self.apply(psi)?;
        let amp = out
            .amplitudes()
            .iter()
            .zip(&self.generator)
            .map(|(a, g)| a * c(0.0, *g))
            .collect();
        FockVector::from_amplitudes(amp)
    }

    pub fn as_operator(&self) -> OperatorMatrix {
        let d = CVector::from_iterator(
            self.dim(),
            self.theta.iter().map(|th| Complex64::from_polar(1.0, *th)),
        );
        OperatorMatrix::general(CMatrix::from_diagonal(&d))
    }
}

/// `θ_n = λ²n² − (γ/2)(λ⁴n⁴ + 3λ²n² n̄)` on `dim_c` levels.
pub fn effective_map_quartic(params: &ProtocolParams) -> Result<EffectiveKerrMap> {
    effective_map(params, Anharmonicity::Quartic)
}

/// `θ_n = λ²n² − (2δ/9) λ³n³` on `dim_c` levels.
pub fn effective_map_cubic(params: &ProtocolParams) -> Result<EffectiveKerrMap> {
    effective_map(params, Anharmonicity::Cubic)
}

pub fn effective_map(params: &ProtocolParams, kind: Anharmonicity) -> Result<EffectiveKerrMap> {
    params.validate()?;
    check_kind(params, kind)?;
    Ok(EffectiveKerrMap::build(params, kind, params.dim_c))
}

/// Output field `ξ_eff|α>` in a dimension sized for `α`.
pub fn kerr_evolved_coherent(
    params: &ProtocolParams,
    kind: Anharmonicity,
) -> Result<(FockVector, EffectiveKerrMap)> {
    let dim = suggested_dim(params.photon_number());
    let psi0 = coherent_vector_with_threshold(params.alpha, dim, params.truncation_threshold)?;
    let map = EffectiveKerrMap::build(params, kind, dim);
    let psi = map.apply(&psi0)?;
    Ok((psi, map))
}

/// `<a>` of `ξ_eff|α>` by direct summation over the Fock amplitudes.
pub fn mean_field_exact(params: &ProtocolParams, kind: Anharmonicity) -> Result<Complex64> {
    params.validate()?;
    let (psi, _) = kerr_evolved_coherent(params, kind)?;
    let a = psi.amplitudes();
    Ok((0..a.len() - 1)
        .map(|n| a[n].conj() * a[n + 1] * ((n + 1) as f64).sqrt())
        .sum())
}

/// Harmonic-loop mean field `α<a>₀ = α exp(iλ² − N_p(1 − e^{2iλ²}))`.
pub fn harmonic_mean_field(alpha: Complex64, lambda: f64) -> Complex64 {
    let l2 = lambda * lambda;
    let np = alpha.norm_sqr();
    alpha * (c(0.0, l2) - (c(1.0, 0.0) - Complex64::from_polar(1.0, 2.0 * l2)) * np).exp()
}

/// Polynomial in `N_p` used for the anharmonic mean-field phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhasePolynomial {
    /// `4N³ + 18N² + 10N + 1` (quartic), `3N² + 3N + 1` (cubic), as published.
    #[default]
    Published,
    /// Poisson average of the per-level phase increment:
    /// `4N³ + 18N² + 14N + 1` (quartic), `3N² + 6N + 1` (cubic).
    PoissonMoments,
}

/// Closed-form mean field `α<a>₀ e^{−iφ_anh}`.
pub fn mean_field_approx(params: &ProtocolParams, kind: Anharmonicity) -> Result<Complex64> {
    mean_field_approx_with(params, kind, PhasePolynomial::Published)
}

pub fn mean_field_approx_with(
    params: &ProtocolParams,
    kind: Anharmonicity,
    poly: PhasePolynomial,
) -> Result<Complex64> {
    params.validate()?;
    check_kind(params, kind)?;
    let n = params.photon_number();
    let l = params.lambda;
    let phase = match (kind, poly) {
        (Anharmonicity::Quartic, PhasePolynomial::Published) => {
            0.5 * params.gamma * l.powi(4) * (4.0 * n.powi(3) + 18.0 * n * n + 10.0 * n + 1.0)
        }
        (Anharmonicity::Quartic, PhasePolynomial::PoissonMoments) => {
            0.5 * params.gamma * l.powi(4) * (4.0 * n.powi(3) + 18.0 * n * n + 14.0 * n + 1.0)
        }
        (Anharmonicity::Cubic, PhasePolynomial::Published) => {
            (2.0 / 9.0) * params.delta * l.powi(3) * (3.0 * n * n + 3.0 * n + 1.0)
        }
        (Anharmonicity::Cubic, PhasePolynomial::PoissonMoments) => {
            (2.0 / 9.0) * params.delta * l.powi(3) * (3.0 * n * n + 6.0 * n + 1.0)
        }
    };
    Ok(harmonic_mean_field(params.alpha, l) * Complex64::from_polar(1.0, -phase))
}

/// Four pulse strengths applied at quarter periods of the loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSequence {
    pub lambdas: [f64; 4],
    pub tau: f64,
}

impl PulseSequence {
    pub fn uniform(lambda: f64, tau: f64) -> Self {
        Self {
            lambdas: [lambda; 4],
            tau,
        }
    }

    pub fn with_period(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn times(&self) -> [f64; 4] {
        [0.0, self.tau / 4.0, self.tau / 2.0, 0.75 * self.tau]
    }

    /// `μ = [(λ₄ − λ₂) + i(λ₁ − λ₃)]/√2`, the displacement left after the loop.
    pub fn residual_displacement(&self) -> Complex64 {
        let [l1, l2, l3, l4] = self.lambdas;
        c(l4 - l2, l1 - l3) * FRAC_1_SQRT_2
    }

    /// `λ₃λ₂ + ½(λ₂ − λ₄)(λ₁ − λ₃)`, the harmonic phase per `n²`.
    pub fn harmonic_phase_coefficient(&self) -> f64 {
        let [l1, l2, l3, l4] = self.lambdas;
        l3 * l2 + 0.5 * (l2 - l4) * (l1 - l3)
    }
}

/// `λ_i = λ₁ (1 − ε)^{i−1}`, loop period `2π` (harmonic, `ω_m = 1`); use
/// [`PulseSequence::with_period`] to change it.
pub fn lossy_sequence(lambda1: f64, epsilon: f64) -> Result<PulseSequence> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument("epsilon must lie in [0, 1)".into()));
    }
    let r = 1.0 - epsilon;
    Ok(PulseSequence {
        lambdas: [lambda1, lambda1 * r, lambda1 * r * r, lambda1 * r * r * r],
        tau: 2.0 * PI,
    })
}

/// Thermal average of the harmonic loop operator for photon number `n`:
/// `exp(−|μ|² n² (1 + 2n̄)/2) · exp(i n² [λ₃λ₂ + ½(λ₂−λ₄)(λ₁−λ₃)])`.
pub fn lossy_harmonic_expectation(seq: &PulseSequence, nbar: f64, n: usize) -> Complex64 {
    let n2 = (n * n) as f64;
    let mu2 = seq.residual_displacement().norm_sqr();
    let modulus = (-0.5 * mu2 * n2 * (1.0 + 2.0 * nbar)).exp();
    Complex64::from_polar(modulus, n2 * seq.harmonic_phase_coefficient())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::ladder_operators;

    fn params() -> ProtocolParams {
        ProtocolParams {
            dim_m: 20,
            ..ProtocolParams::default()
        }
    }

    #[test]
    fn frequency_examples() {
        assert_eq!(anharmonic_frequency(1.3, 0.0, 4.0, Validity::Strict).unwrap(), 1.3);
        let w = anharmonic_frequency(1.0, 1e-3, 4.0, Validity::Strict).unwrap();
        assert!((w - 1.00225).abs() < 1e-15);
        assert!(anharmonic_frequency(1.0, 0.1, 4.0, Validity::Strict).is_err());
        assert!(anharmonic_frequency(1.0, 0.1, 4.0, Validity::Warn).is_ok());
    }

    #[test]
    fn delta_operator_structure() {
        let d = quadrature_correction_quartic(12).unwrap();
        let m = d.matrix();
        assert_eq!(m[(0, 0)], c(0.0, 0.0));
        // −3b† contributes <1|Δ|0> = −3, +3b contributes <0|Δ|1> = +3
        assert!((m[(1, 0)] - c(-3.0, 0.0)).norm() < 1e-14);
        assert!((m[(0, 1)] - c(3.0, 0.0)).norm() < 1e-14);
        let s = m + m.adjoint();
        assert!(s.iter().all(|z| z.norm() < 1e-12));
        assert!(quadrature_correction_quartic(3).is_err());
    }

    #[test]
    fn harmonic_half_period_flips_b() {
        let p = params();
        let tau = p.loop_period(Anharmonicity::Quartic).unwrap();
        let b = heisenberg_b_quartic(tau / 2.0, &p).unwrap();
        let l = ladder_operators(p.dim_m).unwrap();
        let expect = l.a.matrix() * c(-1.0, 0.0);
        assert!((b.matrix() - expect).camax() < 1e-12);
    }

    #[test]
    fn quartic_quarter_period_forms() {
        let p = ProtocolParams {
            gamma: 1e-3,
            ..params()
        };
        let xs = quadratures_quartic_quarter_periods(&p).unwrap();
        let l = ladder_operators(p.dim_m).unwrap();
        let delta = quadrature_correction_quartic(p.dim_m).unwrap();
        let corr = delta.matrix() * c(0.0, p.gamma / (4.0 * 2f64.sqrt()));
        let expected = [
            l.x.matrix().clone(),
            l.p.matrix() + &corr,
            -l.x.matrix(),
            -l.p.matrix() - &corr,
        ];
        for (x, e) in xs.iter().zip(expected.iter()) {
            assert!((x.matrix() - e).camax() < 1e-12);
        }
    }

    #[test]
    fn cubic_quarter_period_forms() {
        let p = ProtocolParams {
            delta: 2e-3,
            ..params()
        };
        let d = p.dim_m;
        let xs = quadratures_cubic_quarter_periods(&p).unwrap();
        let l = ladder_operators(d).unwrap();
        let big = Ladder::new(d);
        let b2 = crop(&big.b * &big.b, d);
        let bd2 = crop(&big.bd * &big.bd, d);
        let dc = quadrature_correction_cubic(d).unwrap().into_matrix();
        let nu = c(-1.0 / 6.0, -1.0 / 3.0);
        let dl = c(p.delta, 0.0);
        let expected = [
            l.x.matrix().clone(),
            l.p.matrix() + (&dc + &bd2 * nu + &b2 * nu.conj()) * dl,
            -l.x.matrix() + (&dc * c(2.0, 0.0) + (&bd2 + &b2) * c(1.0 / 3.0, 0.0)) * dl,
            -l.p.matrix() + (&dc + &bd2 * nu.conj() + &b2 * nu) * dl,
        ];
        for (x, e) in xs.iter().zip(expected.iter()) {
            assert!((x.matrix() - e).camax() < 1e-12);
        }
    }

    #[test]
    fn cubic_zero_strength_is_harmonic_rotation() {
        let p = params();
        let t = 0.37;
        let b = heisenberg_b_cubic(t, &p).unwrap();
        let l = ladder_operators(p.dim_m).unwrap();
        let expect = l.a.matrix() * Complex64::from_polar(1.0, -t);
        assert!((b.matrix() - expect).camax() < 1e-14);
    }

    #[test]
    fn effective_map_examples() {
        let p = ProtocolParams {
            lambda: 0.1,
            gamma: 1e-3,
            dim_c: 11,
            ..ProtocolParams::default()
        };
        let m = effective_map_quartic(&p).unwrap();
        assert_eq!(m.theta[0], 0.0);
        // λ²·100 − (γ/2)·λ⁴·10⁴ = 1 − 5e−4
        assert!((m.theta[10] - (1.0 - 5e-4)).abs() < 1e-12);
        let pure = effective_map_quartic(&ProtocolParams { gamma: 0.0, ..p }).unwrap();
        for (n, th) in pure.theta.iter().enumerate() {
            assert!((th - 0.01 * (n * n) as f64).abs() < 1e-15);
        }
        let p = ProtocolParams {
            delta: 1e-2,
            ..p
        };
        let m = effective_map_cubic(&p).unwrap();
        assert_eq!(m.theta[0], 0.0);
        // 1 − (2/9)·1e−2·1e−3·1000
        assert!((m.theta[10] - (1.0 - 2.0 / 9.0 * 1e-2)).abs() < 1e-12);
    }

    #[test]
    fn zero_strength_maps_coincide() {
        let p = ProtocolParams {
            lambda: 0.23,
            nbar: 0.0,
            dim_c: 40,
            ..ProtocolParams::default()
        };
        let q = effective_map_quartic(&p).unwrap();
        let cu = effective_map_cubic(&p).unwrap();
        assert_eq!(q.theta, cu.theta);
    }

    #[test]
    fn mean_field_zero_coupling_is_alpha() {
        let p = ProtocolParams {
            lambda: 0.0,
            alpha: c(1.5, -0.5),
            ..ProtocolParams::default()
        };
        let m = mean_field_exact(&p, Anharmonicity::Quartic).unwrap();
        assert!((m - p.alpha).norm() < 1e-12);
    }

    #[test]
    fn mean_field_matches_harmonic_closed_form() {
        let p = ProtocolParams {
            lambda: 0.3,
            alpha: c(2.0, 1.0),
            ..ProtocolParams::default()
        };
        for kind in [Anharmonicity::Quartic, Anharmonicity::Cubic] {
            let exact = mean_field_exact(&p, kind).unwrap();
            let closed = harmonic_mean_field(p.alpha, p.lambda);
            assert!((exact - closed).norm() < 1e-10);
            let approx = mean_field_approx(&p, kind).unwrap();
            assert!((approx - closed).norm() < 1e-15);
        }
    }

    #[test]
    fn lossy_sequence_examples() {
        let s = lossy_sequence(1.0, 0.0).unwrap();
        assert_eq!(s.lambdas, [1.0; 4]);
        assert_eq!(s.residual_displacement(), c(0.0, 0.0));
        let s = lossy_sequence(1.0, 0.1).unwrap();
        let expect = [1.0, 0.9, 0.81, 0.729];
        for (a, b) in s.lambdas.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(s.residual_displacement().norm() > 0.0);
        assert!(lossy_sequence(1.0, 1.0).is_err());
        let t = s.times();
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn lossless_harmonic_expectation_is_kerr_phase() {
        let l = 0.2;
        let s = lossy_sequence(l, 0.0).unwrap();
        assert_eq!(lossy_harmonic_expectation(&s, 3.0, 0), c(1.0, 0.0));
        for n in 1..6 {
            let e = lossy_harmonic_expectation(&s, 3.0, n);
            assert!((e.norm() - 1.0).abs() < 1e-15);
            assert!((e - Complex64::from_polar(1.0, l * l * (n * n) as f64)).norm() < 1e-14);
        }
    }

    #[test]
    fn strict_mode_rejects_large_anharmonicity() {
        let p = ProtocolParams {
            gamma: 0.5,
            validity: Validity::Strict,
            ..ProtocolParams::default()
        };
        assert!(matches!(effective_map_quartic(&p), Err(Error::Perturbation(_))));
        let p = ProtocolParams {
            validity: Validity::Warn,
            ..p
        };
        assert!(effective_map_quartic(&p).is_ok());
    }

    #[test]
    fn validity_flag_values() {
        let p = ProtocolParams {
            lambda: 1e-4,
            gamma: 1e-20,
            delta: 1e-15,
            nbar: 100.0,
            epsilon: 0.01,
            ..ProtocolParams::default()
        }
        .with_photon_number(1e9);
        let f = p.validity_flags();
        assert!((f.quartic_mean_field / 1e-9 - 1.0).abs() < 1e-12);
        assert!(f.quartic_ok() && f.cubic_ok() && f.thermal_ok() && f.loss_ok());
    }
}
