//! Quantum and classical Fisher information for the anharmonicity encoded by
//! the effective Kerr map on a coherent probe, homodyne and heterodyne
//! likelihoods with analytic parameter derivatives, and Cramér–Rao bounds.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Anharmonicity, EffectiveKerrMap, ProtocolParams};
use crate::error::{Error, Result};
use crate::fock::{coherent_vector_with_threshold, suggested_dim, FockVector};
use crate::numerics::{golden_section_max, linspace, pairwise_sum, simpson_weights};

/// Integrand points with `p` below this contribute nothing to Fisher sums.
pub const PDF_FLOOR: f64 = 1e-300;

/// Largest tolerated `|1 − ∫p|` on an outcome grid.
pub const COVERAGE_TOLERANCE: f64 = 1e-8;

/// Photon numbers above this are out of reach for likelihood-level work.
pub const MAX_LIKELIHOOD_PHOTONS: f64 = 1000.0;

/// Extra half-width (in quadrature units) beyond `√2|α|` for the default
/// homodyne grid, and beyond `|α|` for the heterodyne radius.
pub const GRID_MARGIN: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Homodyne,
    Heterodyne,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Homodyne => "homodyne",
            Scheme::Heterodyne => "heterodyne",
        }
    }
}

/// Homodyne outcome grid: `points` nodes on `[−w, w]`, `w` defaulting to
/// `√2|α| + 8`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub half_width: Option<f64>,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width: None,
            points: 4001,
        }
    }
}

/// Heterodyne polar grid: Simpson in the radius, uniform in the angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolarGridSpec {
    pub radius: Option<f64>,
    pub radial_points: usize,
    pub angular_points: usize,
}

impl Default for PolarGridSpec {
    fn default() -> Self {
        Self {
            radius: None,
            radial_points: 601,
            angular_points: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementConfig {
    pub scheme: Scheme,
    /// Homodyne phase in radians.
    pub phi: f64,
    pub x_grid: GridSpec,
    pub eta_grid: PolarGridSpec,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Homodyne,
            phi: PI / 2.0,
            x_grid: GridSpec::default(),
            eta_grid: PolarGridSpec::default(),
        }
    }
}

impl MeasurementConfig {
    pub fn homodyne(phi: f64) -> Self {
        Self {
            phi,
            ..Self::default()
        }
    }

    pub fn heterodyne() -> Self {
        Self {
            scheme: Scheme::Heterodyne,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.phi.is_finite() {
            return Err(Error::InvalidArgument("phi must be finite".into()));
        }
        if self.x_grid.points < 3 {
            return Err(Error::InvalidArgument("x_grid needs >= 3 points".into()));
        }
        if let Some(w) = self.x_grid.half_width {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidArgument("x_grid half_width must be > 0".into()));
            }
        }
        if self.eta_grid.radial_points < 3 || self.eta_grid.angular_points < 4 {
            return Err(Error::InvalidArgument(
                "eta_grid needs >= 3 radial and >= 4 angular points".into(),
            ));
        }
        if let Some(r) = self.eta_grid.radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidArgument("eta_grid radius must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// `4(<dψ|dψ> − |<dψ|ψ>|²)`.
pub fn qfi_pure(psi: &FockVector, dpsi: &FockVector) -> Result<f64> {
    psi.check_normalized()?;
    let dd = dpsi.norm_sqr();
    let overlap = psi.inner(dpsi)?;
    Ok((4.0 * (dd - overlap.norm_sqr())).max(0.0))
}

/// `λ⁸(16N⁷ + 216N⁶ + 964N⁵ + 1640N⁴ + 952N³ + 126N² + N)`.
pub fn qfi_quartic_closed(lambda: f64, n_p: f64) -> f64 {
    let poly = [1.0, 126.0, 952.0, 1640.0, 964.0, 216.0, 16.0]
        .iter()
        .rev()
        .fold(0.0, |acc, c| acc * n_p + c)
        * n_p;
    lambda.powi(8) * poly
}

/// `(16/81)λ⁶(9N⁵ + 54N⁴ + 84N³ + 30N² + N)`.
pub fn qfi_cubic_closed(lambda: f64, n_p: f64) -> f64 {
    let poly = [1.0, 30.0, 84.0, 54.0, 9.0]
        .iter()
        .rev()
        .fold(0.0, |acc, c| acc * n_p + c)
        * n_p;
    16.0 / 81.0 * lambda.powi(6) * poly
}

/// `16λ⁸N⁷`.
pub fn qfi_quartic_leading(lambda: f64, n_p: f64) -> f64 {
    16.0 * lambda.powi(8) * n_p.powi(7)
}

/// `(16/9)λ⁶N⁵`.
pub fn qfi_cubic_leading(lambda: f64, n_p: f64) -> f64 {
    16.0 / 9.0 * lambda.powi(6) * n_p.powi(5)
}

pub fn qfi_closed(kind: Anharmonicity, lambda: f64, n_p: f64) -> f64 {
    match kind {
        Anharmonicity::Quartic => qfi_quartic_closed(lambda, n_p),
        Anharmonicity::Cubic => qfi_cubic_closed(lambda, n_p),
    }
}

pub fn qfi_leading(kind: Anharmonicity, lambda: f64, n_p: f64) -> f64 {
    match kind {
        Anharmonicity::Quartic => qfi_quartic_leading(lambda, n_p),
        Anharmonicity::Cubic => qfi_cubic_leading(lambda, n_p),
    }
}

/// `1/(M·value)`.
pub fn cramer_rao(value: f64, m: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("M must be >= 1".into()));
    }
    if !(value > 0.0) {
        return Err(Error::ZeroInformation);
    }
    Ok(1.0 / (m as f64 * value))
}

/// `value²·M·Q`.
pub fn snr_bound(value: f64, qfi: f64, m: u64) -> f64 {
    value * value * m as f64 * qfi
}

/// Coherent probe after the effective Kerr map, as a function of the
/// anharmonic strength `s`: `c_m(s) = <m|α> exp(i(θ⁰_m + s g_m))`.
///
/// The generator is stored centred on its Poisson mean. That only changes a
/// global phase, but keeps `∂c` free of the large common part.
#[derive(Debug, Clone)]
pub struct KerrModel {
    pub kind: Anharmonicity,
    pub strength: f64,
    coherent: Vec<Complex64>,
    base_phase: Vec<f64>,
    centred: Vec<f64>,
    raw_generator: Vec<f64>,
}

impl KerrModel {
    pub fn new(params: &ProtocolParams, kind: Anharmonicity) -> Result<Self> {
        params.validate()?;
        let n_p = params.photon_number();
        if n_p > MAX_LIKELIHOOD_PHOTONS {
            return Err(Error::Capability(format!(
                "N_p = {n_p:e} exceeds the likelihood limit {MAX_LIKELIHOOD_PHOTONS}; only closed forms apply"
            )));
        }
        let dim = suggested_dim(n_p);
        let psi = coherent_vector_with_threshold(params.alpha, dim, params.truncation_threshold)?;
        let unshifted = EffectiveKerrMap::build(&params.with_strength(kind, 0.0), kind, dim);
        let coherent: Vec<Complex64> = psi.amplitudes().iter().copied().collect();
        let pops: Vec<f64> = coherent.iter().map(|c| c.norm_sqr()).collect();
        let raw = unshifted.generator;
        let weighted: Vec<f64> = raw.iter().zip(&pops).map(|(g, p)| g * p).collect();
        let mean = pairwise_sum(&weighted);
        Ok(Self {
            kind,
            strength: params.strength(kind),
            coherent,
            base_phase: unshifted.theta,
            centred: raw.iter().map(|g| g - mean).collect(),
            raw_generator: raw,
        })
    }

    pub fn dim(&self) -> usize {
        self.coherent.len()
    }

    /// `∂θ_n/∂s`, uncentred.
    pub fn generator(&self) -> &[f64] {
        &self.raw_generator
    }

    pub fn amplitudes(&self, s: f64) -> Vec<Complex64> {
        self.coherent
            .iter()
            .zip(&self.base_phase)
            .zip(&self.centred)
            .map(|((c, th), g)| c * Complex64::from_polar(1.0, th + s * g))
            .collect()
    }

    /// `(ψ, ∂ψ)` at strength `s` with the uncentred generator.
    pub fn state_and_derivative(&self, s: f64) -> Result<(FockVector, FockVector)> {
        let c: Vec<Complex64> = self
            .coherent
            .iter()
            .zip(&self.base_phase)
            .zip(&self.raw_generator)
            .map(|((c, th), g)| c * Complex64::from_polar(1.0, th + s * g))
            .collect();
        let dc = c
            .iter()
            .zip(&self.raw_generator)
            .map(|(c, g)| c * Complex64::new(0.0, *g))
            .collect();
        Ok((FockVector::from_amplitudes(c)?, FockVector::from_amplitudes(dc)?))
    }

    /// `4 Var(g)` over the photon-number distribution.
    pub fn qfi(&self) -> f64 {
        let terms: Vec<f64> = self
            .coherent
            .iter()
            .zip(&self.centred)
            .map(|(c, g)| c.norm_sqr() * g * g)
            .collect();
        4.0 * pairwise_sum(&terms)
    }

    /// `c_m(s)` together with the centred generator, for repeated
    /// evaluation at one strength.
    pub fn coefficients(&self, s: f64) -> KerrCoefficients {
        KerrCoefficients {
            c: self.amplitudes(s),
            g: self.centred.clone(),
        }
    }

    /// `(A, ∂A, ∂²A)` of `Σ_m c_m(s) basis_m`.
    pub fn amplitude_derivatives(&self, s: f64, basis: &[Complex64]) -> [Complex64; 3] {
        self.coefficients(s).apply(basis)
    }
}

/// Amplitudes `c_m(s)` frozen at one strength.
#[derive(Debug, Clone)]
pub struct KerrCoefficients {
    c: Vec<Complex64>,
    g: Vec<f64>,
}

impl KerrCoefficients {
    /// `(A, ∂A, ∂²A)` of `Σ_m c_m basis_m`.
    pub fn apply(&self, basis: &[Complex64]) -> [Complex64; 3] {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for ((c, g), b) in self.c.iter().zip(&self.g).zip(basis) {
            let a = c * b;
            out[0] += a;
            out[1] += a * Complex64::new(0.0, *g);
            out[2] -= a * (g * g);
        }
        out
    }

    pub fn pdf(&self, basis: &[Complex64]) -> f64 {
        let a: Complex64 = self.c.iter().zip(basis).map(|(c, b)| c * b).sum();
        a.norm_sqr()
    }
}

/// `(p, ∂p, ∂²p)` from amplitude derivatives.
pub fn pdf_derivatives(a: [Complex64; 3]) -> (f64, f64, f64) {
    let p = a[0].norm_sqr();
    let dp = 2.0 * (a[1] * a[0].conj()).re;
    let d2p = 2.0 * (a[2] * a[0].conj()).re + 2.0 * a[1].norm_sqr();
    (p, dp, d2p)
}

fn fisher_integrand(p: f64, dp: f64) -> f64 {
    if p < PDF_FLOOR {
        0.0
    } else {
        dp * dp / p
    }
}

/// Number-state wavefunctions `ψ_m(x)` for `m < dim` by the normalized
/// three-term recurrence. Intermediate values are rescaled so neither the
/// Gaussian prefactor nor large `m` underflows or overflows.
pub fn number_wavefunctions(x: f64, dim: usize) -> Vec<f64> {
    const BIG: f64 = 1e150;
    let mut out = vec![0.0; dim];
    if dim == 0 {
        return out;
    }
    // values carry an implicit factor exp(log_scale[m]) · π^{-1/4} e^{-x²/2}
    let mut log_scale = vec![0.0; dim];
    let (mut prev2, mut prev1) = (0.0, 1.0);
    let mut scale = 0.0;
    out[0] = 1.0;
    for m in 1..dim {
        let mf = m as f64;
        let next = x * (2.0 / mf).sqrt() * prev1 - ((mf - 1.0) / mf).sqrt() * prev2;
        prev2 = prev1;
        prev1 = next;
        if next.abs() > BIG {
            prev1 /= BIG;
            prev2 /= BIG;
            scale += BIG.ln();
        }
        out[m] = prev1;
        log_scale[m] = scale;
    }
    let base = -0.25 * PI.ln() - 0.5 * x * x;
    let factor = base.exp();
    for (v, s) in out.iter_mut().zip(&log_scale) {
        if *s == 0.0 && factor > 1e-280 {
            *v *= factor;
        } else if *v != 0.0 {
            let mag = v.abs().ln() + s + base;
            *v = v.signum() * mag.exp();
        }
    }
    out
}

/// Homodyne basis `ψ_m(x) e^{−imφ}`.
pub fn homodyne_basis(x: f64, phi: f64, dim: usize) -> Vec<Complex64> {
    number_wavefunctions(x, dim)
        .into_iter()
        .enumerate()
        .map(|(m, v)| Complex64::from_polar(v, -(m as f64) * phi))
        .collect()
}

/// Heterodyne basis `<η|m> = e^{−|η|²/2} (η*)^m / √m!`.
pub fn heterodyne_basis(eta: Complex64, dim: usize) -> Vec<Complex64> {
    let r = eta.norm();
    let arg = eta.arg();
    let mut out = Vec::with_capacity(dim);
    let mut log_mag = -0.5 * r * r;
    let ln_r = r.ln();
    for m in 0..dim {
        if m > 0 {
            log_mag += ln_r - 0.5 * (m as f64).ln();
        }
        let mag = if r == 0.0 {
            if m == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            log_mag.exp()
        };
        out.push(Complex64::from_polar(mag, -(m as f64) * arg));
    }
    out
}

/// Homodyne grid nodes and Simpson weights for a probe of amplitude `|α|`.
pub fn homodyne_grid(spec: &GridSpec, alpha_abs: f64) -> (Vec<f64>, Vec<f64>) {
    let w = spec
        .half_width
        .unwrap_or(2f64.sqrt() * alpha_abs + GRID_MARGIN);
    let xs = linspace(-w, w, spec.points);
    let h = 2.0 * w / (spec.points - 1) as f64;
    (xs, simpson_weights(spec.points, h))
}

fn check_mass(mass: f64) -> Result<()> {
    if (mass - 1.0).abs() > COVERAGE_TOLERANCE || !mass.is_finite() {
        return Err(Error::GridCoverage { mass });
    }
    Ok(())
}

/// Homodyne likelihood model at a fixed phase.
#[derive(Debug, Clone)]
pub struct HomodyneModel {
    pub kerr: KerrModel,
    pub phi: f64,
    alpha_abs: f64,
}

impl HomodyneModel {
    pub fn new(params: &ProtocolParams, kind: Anharmonicity, phi: f64) -> Result<Self> {
        Ok(Self {
            kerr: KerrModel::new(params, kind)?,
            phi,
            alpha_abs: params.alpha.norm(),
        })
    }

    pub fn alpha_abs(&self) -> f64 {
        self.alpha_abs
    }

    pub fn basis(&self, x: f64) -> Vec<Complex64> {
        homodyne_basis(x, self.phi, self.kerr.dim())
    }

    pub fn pdf(&self, s: f64, x: f64) -> f64 {
        pdf_derivatives(self.kerr.amplitude_derivatives(s, &self.basis(x))).0
    }

    pub fn derivatives(&self, s: f64, x: f64) -> (f64, f64, f64) {
        pdf_derivatives(self.kerr.amplitude_derivatives(s, &self.basis(x)))
    }

    /// Tabulated `(x, p, ∂p)` over the grid together with the Simpson
    /// weights; fails if the grid misses probability mass.
    pub fn tabulate(&self, spec: &GridSpec) -> Result<HomodyneTable> {
        let (xs, ws) = homodyne_grid(spec, self.alpha_abs);
        let coeffs = self.kerr.coefficients(self.kerr.strength);
        let vals: Vec<(f64, f64)> = xs
            .par_iter()
            .map(|&x| {
                let (p, dp, _) = pdf_derivatives(coeffs.apply(&self.basis(x)));
                (p, dp)
            })
            .collect();
        let (p, dp): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
        let mass = pairwise_sum(&p.iter().zip(&ws).map(|(p, w)| p * w).collect::<Vec<_>>());
        check_mass(mass)?;
        Ok(HomodyneTable {
            xs,
            weights: ws,
            pdf: p,
            dpdf: dp,
            mass,
        })
    }

    pub fn fisher(&self, spec: &GridSpec) -> Result<f64> {
        Ok(self.tabulate(spec)?.fisher())
    }
}

#[derive(Debug, Clone)]
pub struct HomodyneTable {
    pub xs: Vec<f64>,
    pub weights: Vec<f64>,
    pub pdf: Vec<f64>,
    pub dpdf: Vec<f64>,
    pub mass: f64,
}

impl HomodyneTable {
    pub fn fisher(&self) -> f64 {
        let terms: Vec<f64> = self
            .pdf
            .iter()
            .zip(&self.dpdf)
            .zip(&self.weights)
            .map(|((p, dp), w)| w * fisher_integrand(*p, *dp))
            .collect();
        pairwise_sum(&terms)
    }

    pub fn derivative_mass(&self) -> f64 {
        pairwise_sum(
            &self
                .dpdf
                .iter()
                .zip(&self.weights)
                .map(|(d, w)| d * w)
                .collect::<Vec<_>>(),
        )
    }
}

pub fn homodyne_pdf(
    x: f64,
    config: &MeasurementConfig,
    params: &ProtocolParams,
    kind: Anharmonicity,
) -> Result<f64> {
    let m = HomodyneModel::new(params, kind, config.phi)?;
    Ok(m.pdf(m.kerr.strength, x))
}

pub fn homodyne_pdf_dtheta(
    x: f64,
    config: &MeasurementConfig,
    params: &ProtocolParams,
    kind: Anharmonicity,
) -> Result<f64> {
    let m = HomodyneModel::new(params, kind, config.phi)?;
    Ok(m.derivatives(m.kerr.strength, x).1)
}

/// `∫ (∂p)²/p dx` on the configured grid.
pub fn fisher_homodyne(
    config: &MeasurementConfig,
    params: &ProtocolParams,
    kind: Anharmonicity,
) -> Result<f64> {
    config.validate()?;
    HomodyneModel::new(params, kind, config.phi)?.fisher(&config.x_grid)
}

/// Scans `phi_grid`, then refines the best point by golden section between
/// its neighbours. Ties resolve to the smaller phase.
pub fn optimize_phase(
    params: &ProtocolParams,
    kind: Anharmonicity,
    config: &MeasurementConfig,
    phi_grid: &[f64],
) -> Result<(f64, f64)> {
    if phi_grid.is_empty() {
        return Err(Error::InvalidArgument("phi_grid is empty".into()));
    }
    let base = HomodyneModel::new(params, kind, 0.0)?;
    let fi_at = |phi: f64| -> Result<f64> {
        let m = HomodyneModel { phi, ..base.clone() };
        m.fisher(&config.x_grid)
    };
    let scan: Vec<f64> = phi_grid
        .par_iter()
        .map(|&phi| fi_at(phi))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, v) in scan.iter().enumerate() {
        if *v > scan[best] || (*v == scan[best] && phi_grid[i] < phi_grid[best]) {
            best = i;
        }
    }
    let (mut phi_star, mut fi_star) = (phi_grid[best], scan[best]);
    if phi_grid.len() >= 3 {
        let lo = if best == 0 { phi_grid[0] } else { phi_grid[best - 1] };
        let hi = if best + 1 == phi_grid.len() {
            phi_grid[best]
        } else {
            phi_grid[best + 1]
        };
        if hi > lo {
            let mut failure = None;
            let g = golden_section_max(
                |phi| match fi_at(phi) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NEG_INFINITY
                    }
                },
                lo,
                hi,
                1e-6,
                200,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            if g.value > fi_star {
                phi_star = g.x;
                fi_star = g.value;
            }
        }
    }
    Ok((phi_star, fi_star))
}

/// Heterodyne likelihood model.
#[derive(Debug, Clone)]
pub struct HeterodyneModel {
    pub kerr: KerrModel,
    alpha_abs: f64,
}

impl HeterodyneModel {
    pub fn new(params: &ProtocolParams, kind: Anharmonicity) -> Result<Self> {
        Ok(Self {
            kerr: KerrModel::new(params, kind)?,
            alpha_abs: params.alpha.norm(),
        })
    }

    pub fn alpha_abs(&self) -> f64 {
        self.alpha_abs
    }

    pub fn basis(&self, eta: Complex64) -> Vec<Complex64> {
        heterodyne_basis(eta, self.kerr.dim())
    }

    /// `|<η|ψ>|²`, bounded by one.
    pub fn pdf(&self, s: f64, eta: Complex64) -> f64 {
        pdf_derivatives(self.kerr.amplitude_derivatives(s, &self.basis(eta))).0
    }

    pub fn derivatives(&self, s: f64, eta: Complex64) -> (f64, f64, f64) {
        pdf_derivatives(self.kerr.amplitude_derivatives(s, &self.basis(eta)))
    }

    pub fn radius(&self, spec: &PolarGridSpec) -> f64 {
        spec.radius.unwrap_or(self.alpha_abs + GRID_MARGIN)
    }

    /// `((1/π)∫p d²η, (1/π)∫(∂p)²/p d²η)` on the polar grid.
    pub fn integrate(&self, spec: &PolarGridSpec) -> Result<(f64, f64)> {
        let r_max = self.radius(spec);
        let nr = spec.radial_points;
        let na = spec.angular_points;
        let rs = linspace(0.0, r_max, nr);
        let wr = simpson_weights(nr, r_max / (nr - 1) as f64);
        let wa = TAU / na as f64;
        let coeffs = self.kerr.coefficients(self.kerr.strength);
        let rows: Vec<(f64, f64)> = rs
            .par_iter()
            .zip(wr.par_iter())
            .map(|(&r, &w)| {
                let mut mass = Vec::with_capacity(na);
                let mut info = Vec::with_capacity(na);
                for k in 0..na {
                    let eta = Complex64::from_polar(r, wa * k as f64);
                    let (p, dp, _) = pdf_derivatives(coeffs.apply(&self.basis(eta)));
                    mass.push(p);
                    info.push(fisher_integrand(p, dp));
                }
                let f = w * r * wa / PI;
                (f * pairwise_sum(&mass), f * pairwise_sum(&info))
            })
            .collect();
        let mass = pairwise_sum(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
        let info = pairwise_sum(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
        Ok((mass, info))
    }

    pub fn fisher(&self, spec: &PolarGridSpec) -> Result<f64> {
        let (mass, info) = self.integrate(spec)?;
        check_mass(mass)?;
        Ok(info)
    }
}

pub fn heterodyne_pdf(eta: Complex64, params: &ProtocolParams, kind: Anharmonicity) -> Result<f64> {
    let m = HeterodyneModel::new(params, kind)?;
    Ok(m.pdf(m.kerr.strength, eta))
}

pub fn fisher_heterodyne(
    config: &MeasurementConfig,
    params: &ProtocolParams,
    kind: Anharmonicity,
) -> Result<f64> {
    config.validate()?;
    HeterodyneModel::new(params, kind)?.fisher(&config.eta_grid)
}

/// `4 Var(∂θ)` on the Kerr-evolved coherent probe, thermal generator term
/// included when `n̄ > 0`.
pub fn qfi_numeric(params: &ProtocolParams, kind: Anharmonicity) -> Result<f64> {
    Ok(KerrModel::new(params, kind)?.qfi())
}

/// Fisher information summary for one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FisherReport {
    pub kind: Anharmonicity,
    pub scheme: Scheme,
    pub phi: f64,
    pub lambda: f64,
    pub n_p: f64,
    pub nbar: f64,
    pub strength: f64,
    pub qfi: f64,
    pub fi: f64,
    pub ratio: f64,
    pub m: u64,
    pub crb_var: f64,
    pub snr_bound: f64,
}

pub fn fisher_report(
    params: &ProtocolParams,
    kind: Anharmonicity,
    config: &MeasurementConfig,
    m: u64,
) -> Result<FisherReport> {
    let qfi = qfi_numeric(params, kind)?;
    let fi = match config.scheme {
        Scheme::Homodyne => fisher_homodyne(config, params, kind)?,
        Scheme::Heterodyne => fisher_heterodyne(config, params, kind)?,
    };
    let strength = params.strength(kind);
    Ok(FisherReport {
        kind,
        scheme: config.scheme,
        phi: config.phi,
        lambda: params.lambda,
        n_p: params.photon_number(),
        nbar: params.nbar,
        strength,
        qfi,
        fi,
        ratio: if qfi > 0.0 { fi / qfi } else { 0.0 },
        m,
        crb_var: if fi > 0.0 { cramer_rao(fi, m.max(1))? } else { f64::INFINITY },
        snr_bound: snr_bound(strength, qfi, m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: f64, n_p: f64) -> ProtocolParams {
        ProtocolParams {
            lambda,
            ..ProtocolParams::default()
        }
        .with_photon_number(n_p)
    }

    fn poisson_var(k: i32, mean: f64) -> f64 {
        let mut p = (-mean).exp();
        let (mut m1, mut m2) = (0.0, 0.0);
        for n in 0..80 {
            if n > 0 {
                p *= mean / n as f64;
            }
            let v = (n as f64).powi(k);
            m1 += p * v;
            m2 += p * v * v;
        }
        m2 - m1 * m1
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(qfi_quartic_closed(1.0, 1.0), 3915.0);
        assert_eq!(qfi_quartic_closed(0.3, 0.0), 0.0);
        assert!((qfi_cubic_closed(1.0, 1.0) - 16.0 / 81.0 * 178.0).abs() < 1e-12);
        assert_eq!(qfi_cubic_closed(0.3, 0.0), 0.0);
        assert!((poisson_var(4, 1.0) - 3915.0).abs() < 1e-8);
        assert!((poisson_var(3, 1.0) - 178.0).abs() < 1e-9);
        let big = 1e6;
        assert!((qfi_quartic_leading(1.0, big) / qfi_quartic_closed(1.0, big) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn numeric_qfi_matches_poisson_moments() {
        let p = params(1.0, 1.0);
        let q = qfi_numeric(&p, Anharmonicity::Quartic).unwrap();
        // generator −n⁴/2, so Q = 4·Var(n⁴)/4
        assert!((q / 3915.0 - 1.0).abs() < 1e-9);
        let c = qfi_numeric(&p, Anharmonicity::Cubic).unwrap();
        assert!((c / (16.0 / 81.0 * 178.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn qfi_pure_blind_to_global_phase() {
        let psi = coherent_vector_with_threshold(Complex64::new(1.0, 0.5), 30, 1e-10).unwrap();
        let d: Vec<Complex64> = psi
            .amplitudes()
            .iter()
            .map(|a| a * Complex64::new(0.0, 0.7))
            .collect();
        let dpsi = FockVector::from_amplitudes(d).unwrap();
        assert!(qfi_pure(&psi, &dpsi).unwrap() < 1e-14);
    }

    #[test]
    fn bounds() {
        assert_eq!(cramer_rao(3915.0, 1).unwrap(), 1.0 / 3915.0);
        assert_eq!(cramer_rao(2.0, 4).unwrap(), 0.5 * cramer_rao(2.0, 2).unwrap());
        assert!(matches!(cramer_rao(0.0, 10), Err(Error::ZeroInformation)));
        assert_eq!(snr_bound(0.0, 5.0, 10), 0.0);
        let r = snr_bound(1e-20, qfi_quartic_leading(1e-4, 1e9), 10_000);
        // 16 · 1e-40 · 1e-32 · 1e63 · 1e4
        assert!((r / 1.6e-4 - 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn wavefunctions_are_orthonormal() {
        let n = 40;
        let (xs, ws) = homodyne_grid(
            &GridSpec {
                half_width: Some(14.0),
                points: 4001,
            },
            0.0,
        );
        let table: Vec<Vec<f64>> = xs.iter().map(|&x| number_wavefunctions(x, n)).collect();
        for i in [0, 1, 7, 39] {
            for j in [0, 1, 7, 39] {
                let s: f64 = table.iter().zip(&ws).map(|(t, w)| w * t[i] * t[j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((s - e).abs() < 1e-10, "<{i}|{j}> = {s}");
            }
        }
        let v = number_wavefunctions(0.0, 1)[0];
        assert!((v * v - 1.0 / PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn large_x_wavefunction_does_not_underflow_early() {
        // ψ_m(x) near the classical turning point of a high level
        let m = 1200;
        let x = (2.0 * m as f64 + 1.0).sqrt();
        let psi = number_wavefunctions(x, m + 1);
        assert!(psi[m].abs() > 1e-3 && psi[m].is_finite());
    }

    #[test]
    fn vacuum_homodyne_pdf() {
        let p = ProtocolParams {
            alpha: Complex64::new(0.0, 0.0),
            ..ProtocolParams::default()
        };
        let cfg = MeasurementConfig::default();
        let v = homodyne_pdf(0.0, &cfg, &p, Anharmonicity::Quartic).unwrap();
        assert!((v - 1.0 / PI.sqrt()).abs() < 1e-14);
        let x = 1.3;
        let v = homodyne_pdf(x, &cfg, &p, Anharmonicity::Quartic).unwrap();
        assert!((v - (-x * x).exp() / PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn homodyne_normalization_and_zero_coupling() {
        let p = ProtocolParams {
            lambda: 0.0,
            gamma: 1e-2,
            ..params(0.0, 9.0)
        };
        let m = HomodyneModel::new(&p, Anharmonicity::Quartic, 0.4).unwrap();
        let t = m.tabulate(&GridSpec::default()).unwrap();
        assert!((t.mass - 1.0).abs() < 1e-8);
        assert!(t.dpdf.iter().all(|d| d.abs() < 1e-15));
        assert_eq!(t.fisher(), 0.0);
        // coherent quadrature Gaussian centred at √2 Re(α e^{−iφ})
        let centre = 2f64.sqrt() * (p.alpha * Complex64::from_polar(1.0, -0.4)).re;
        for x in [-1.0, 0.3, 2.0, 4.5] {
            let g = (-(x - centre) * (x - centre)).exp() / PI.sqrt();
            assert!((m.pdf(0.0, x) - g).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = ProtocolParams {
            gamma: 1e-2,
            ..params(0.3, 4.0)
        };
        let m = HomodyneModel::new(&p, Anharmonicity::Quartic, 1.1).unwrap();
        let h = 1e-5;
        for x in [-2.0, -0.3, 0.8, 2.5] {
            let (_, dp, d2p) = m.derivatives(p.gamma, x);
            let fd = (m.pdf(p.gamma + h, x) - m.pdf(p.gamma - h, x)) / (2.0 * h);
            assert!(((dp - fd) / dp).abs() < 1e-5, "x={x}: {dp} vs {fd}");
            let h2 = 1e-6;
            let fd2 = (m.derivatives(p.gamma + h2, x).1 - m.derivatives(p.gamma - h2, x).1) / (2.0 * h2);
            assert!(((d2p - fd2) / d2p).abs() < 1e-5, "x={x}: {d2p} vs {fd2}");
        }
        let t = m.tabulate(&GridSpec::default()).unwrap();
        assert!(t.derivative_mass().abs() < 1e-8);
    }

    #[test]
    fn fisher_below_qfi() {
        for kind in [Anharmonicity::Quartic, Anharmonicity::Cubic] {
            let p = params(0.2, 6.0).with_strength(kind, 1e-3);
            let q = qfi_numeric(&p, kind).unwrap();
            let f = fisher_homodyne(&MeasurementConfig::default(), &p, kind).unwrap();
            assert!(f > 0.0 && f <= q * (1.0 + 1e-6));
            let h = fisher_heterodyne(&MeasurementConfig::heterodyne(), &p, kind).unwrap();
            assert!(h > 0.0 && h <= q * (1.0 + 1e-6));
        }
    }

    #[test]
    fn vacuum_heterodyne_and_normalization() {
        let p = ProtocolParams {
            alpha: Complex64::new(0.0, 0.0),
            ..ProtocolParams::default()
        };
        let eta = Complex64::new(0.7, -0.4);
        let v = heterodyne_pdf(eta, &p, Anharmonicity::Quartic).unwrap();
        assert!((v - (-eta.norm_sqr()).exp()).abs() < 1e-15);
        let p = ProtocolParams {
            gamma: 1e-3,
            ..params(0.2, 5.0)
        };
        let (mass, _) = HeterodyneModel::new(&p, Anharmonicity::Quartic)
            .unwrap()
            .integrate(&PolarGridSpec::default())
            .unwrap();
        assert!((mass - 1.0).abs() < 1e-8);
    }

    #[test]
    fn small_grid_fails_coverage() {
        let p = params(0.1, 9.0);
        let cfg = MeasurementConfig {
            x_grid: GridSpec {
                half_width: Some(2.0),
                points: 401,
            },
            ..MeasurementConfig::default()
        };
        assert!(matches!(
            fisher_homodyne(&cfg, &p, Anharmonicity::Quartic),
            Err(Error::GridCoverage { .. })
        ));
    }

    #[test]
    fn physical_scale_is_a_capability_error() {
        let p = params(1e-4, 1e9);
        assert!(matches!(
            qfi_numeric(&p, Anharmonicity::Quartic),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn phase_optimum_beats_grid() {
        let p = ProtocolParams {
            gamma: 1e-3,
            ..params(0.2, 4.0)
        };
        let grid = linspace(0.0, PI, 13);
        let cfg = MeasurementConfig::default();
        let (_, best) = optimize_phase(&p, Anharmonicity::Quartic, &cfg, &grid[..12]).unwrap();
        for phi in &grid[..12] {
            let f = fisher_homodyne(&MeasurementConfig::homodyne(*phi), &p, Anharmonicity::Quartic).unwrap();
            assert!(best >= f);
        }
    }
}
