//! Brute-force simulation of the four-pulse loop on the joint
//! field ⊗ mechanics space with exact (numerically diagonalized) free
//! evolution of the anharmonic oscillator.
//!
//! The pulse `exp(iλ n_c X_m)` is block diagonal in the photon number, so the
//! whole loop reduces to one mechanical operator `W_n` per Fock level of the
//! field. The joint state is assembled from those blocks.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    lossy_harmonic_expectation, lossy_sequence, Anharmonicity, EffectiveKerrMap, ProtocolParams,
    PulseSequence, OPERATOR_BUFFER,
};
use crate::error::{Error, Result};
use crate::fock::{
    annihilation_matrix, coherent_vector_with_threshold, fidelity, hermitian_eigen,
    thermal_density_with_threshold, CMatrix, FockDensity, HermitianEigen, JointState,
    OperatorMatrix,
};

/// Default cap on `dim_c · dim_m`.
pub const DEFAULT_JOINT_CAP: usize = 1600;

/// Mechanical levels counted as the truncation edge when monitoring leakage.
const EDGE_LEVELS: usize = 2;

/// Free mechanical potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Harmonic,
    Quartic,
    Cubic,
}

impl From<Anharmonicity> for PotentialKind {
    fn from(k: Anharmonicity) -> Self {
        match k {
            Anharmonicity::Quartic => PotentialKind::Quartic,
            Anharmonicity::Cubic => PotentialKind::Cubic,
        }
    }
}

/// `H₀/ħ` of the mechanics in a truncated number basis.
#[derive(Debug, Clone)]
pub struct MechHamiltonian {
    pub kind: PotentialKind,
    pub strength: f64,
    pub omega_m: f64,
    op: OperatorMatrix,
}

impl MechHamiltonian {
    pub fn dim_m(&self) -> usize {
        self.op.dim()
    }

    pub fn operator(&self) -> &OperatorMatrix {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn eigen(&self) -> Result<HermitianEigen> {
        hermitian_eigen(self.op.matrix())
    }
}

/// `ω_m[(n + ½) + (γ/4)X⁴]` or `ω_m[(n + ½) + (δ/3)X³]`, with the power of
/// `X` taken at `dim_m + 8` levels and cropped.
pub fn build_hamiltonian(
    kind: PotentialKind,
    strength: f64,
    omega_m: f64,
    dim_m: usize,
) -> Result<MechHamiltonian> {
    if dim_m < 8 {
        return Err(Error::InvalidArgument(format!(
            "dim_m = {dim_m} too small for the anharmonic term (need >= 8)"
        )));
    }
    if !strength.is_finite() || !omega_m.is_finite() || omega_m <= 0.0 {
        return Err(Error::InvalidArgument(
            "strength and omega_m must be finite, omega_m > 0".into(),
        ));
    }
    let big = dim_m + OPERATOR_BUFFER;
    let b = annihilation_matrix(big);
    let x = (&b + b.adjoint()) * Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut h = CMatrix::from_fn(big, big, |i, j| {
        if i == j {
            Complex64::new(i as f64 + 0.5, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    match kind {
        PotentialKind::Harmonic => {}
        PotentialKind::Quartic => {
            let x2 = &x * &x;
            h += &x2 * &x2 * Complex64::new(strength / 4.0, 0.0);
        }
        PotentialKind::Cubic => {
            h += &x * &x * &x * Complex64::new(strength / 3.0, 0.0);
        }
    }
    let h = h.view((0, 0), (dim_m, dim_m)) * Complex64::new(omega_m, 0.0);
    Ok(MechHamiltonian {
        kind,
        strength,
        omega_m,
        op: OperatorMatrix::new(h, true)?,
    })
}

/// `E_{level+1} − E_level` from exact diagonalization.
pub fn energy_gap_check(h: &MechHamiltonian, level: usize) -> Result<f64> {
    let dim = h.dim_m();
    // the upper half of a cropped spectrum is not trusted
    if 2 * (level + 2) > dim {
        return Err(Error::Truncation {
            deficit: (level + 2) as f64 / dim as f64,
            threshold: 0.5,
            dim,
        });
    }
    let e = h.eigen()?;
    Ok(e.values[level + 1] - e.values[level])
}

/// Run-time knobs of the joint simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub joint_cap: usize,
    /// Assemble the full joint density matrix (`dim_c²·dim_m²` entries).
    pub keep_joint: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            joint_cap: DEFAULT_JOINT_CAP,
            keep_joint: true,
        }
    }
}

/// Scalar diagnostics of one run, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunDiagnostics {
    /// Fidelity of the reduced field with `ξ_eff ϱ₀ ξ_eff†`.
    pub effective_map_fidelity: f64,
    pub field_purity: f64,
    /// Fidelity of the final mechanics with the initial thermal state.
    pub mechanics_return_fidelity: f64,
    /// Population-weighted leakage into the top mechanical levels.
    pub truncation_deficit: f64,
    /// See [`coherence_visibility`].
    pub coherence_visibility: f64,
    /// `|<a>_out| / Σ √(n+1) |ϱ₀[n+1,n]|`.
    pub mean_field_visibility: f64,
}

impl RunDiagnostics {
    pub fn as_map(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::from([
            ("effective_map_fidelity", self.effective_map_fidelity),
            ("field_purity", self.field_purity),
            ("mechanics_return_fidelity", self.mechanics_return_fidelity),
            ("truncation_deficit", self.truncation_deficit),
            ("coherence_visibility", self.coherence_visibility),
            ("mean_field_visibility", self.mean_field_visibility),
        ])
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub params: ProtocolParams,
    pub seq: PulseSequence,
    pub kind: Anharmonicity,
    /// Present when [`OracleOptions::keep_joint`] is set.
    pub final_joint: Option<JointState>,
    pub reduced_field: FockDensity,
    pub reduced_mechanics: FockDensity,
    pub diagnostics: RunDiagnostics,
}

/// Uniform pulses of strength `λ(1 − ε)^{i−1}` closing after the loop
/// period of `kind`.
pub fn default_sequence(params: &ProtocolParams, kind: Anharmonicity) -> Result<PulseSequence> {
    Ok(lossy_sequence(params.lambda, params.epsilon)?.with_period(params.loop_period(kind)?))
}

/// `|α><α|` on `dim_c` levels.
pub fn coherent_input(params: &ProtocolParams) -> Result<FockDensity> {
    Ok(
        coherent_vector_with_threshold(params.alpha, params.dim_c, params.truncation_threshold)?
            .to_density(),
    )
}

/// Phase-insensitive first-order coherence retained by the field:
/// `Σ √(n+1) |ρ[n+1,n]| / Σ √(n+1) |ϱ₀[n+1,n]|`. Diagonal phase maps leave
/// it at one; residual field–mechanics correlations lower it. Returns 1 when
/// the input carries no first-order coherence.
pub fn coherence_visibility(out: &FockDensity, input: &FockDensity) -> f64 {
    let num = sub_diagonal_weight(out.matrix());
    let den = sub_diagonal_weight(input.matrix());
    if den == 0.0 {
        1.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

fn sub_diagonal_weight(m: &CMatrix) -> f64 {
    (0..m.nrows().saturating_sub(1))
        .map(|n| ((n + 1) as f64).sqrt() * m[(n + 1, n)].norm())
        .sum()
}

pub fn run_protocol(
    params: &ProtocolParams,
    seq: &PulseSequence,
    field_state: &FockDensity,
    kind: Anharmonicity,
) -> Result<ProtocolRun> {
    run_protocol_with(params, seq, field_state, kind, &OracleOptions::default())
}

/// Schrödinger-picture loop `F P₄ F P₃ F P₂ F P₁` with `P_k = exp(iλ_k n X)`
/// and `F = exp(−iH₀τ/4)`. The trailing `F` only rotates the mechanics and
/// leaves the reduced field untouched; it makes the mechanical return
/// fidelity refer to time `τ`.
pub fn run_protocol_with(
    params: &ProtocolParams,
    seq: &PulseSequence,
    field_state: &FockDensity,
    kind: Anharmonicity,
    opts: &OracleOptions,
) -> Result<ProtocolRun> {
    params.validate()?;
    let (dim_c, dim_m) = (params.dim_c, params.dim_m);
    if dim_c * dim_m > opts.joint_cap {
        return Err(Error::DimensionCap {
            requested: dim_c * dim_m,
            cap: opts.joint_cap,
        });
    }
    if field_state.dim() != dim_c {
        return Err(Error::DimensionMismatch {
            expected: dim_c,
            found: field_state.dim(),
        });
    }
    if !seq.tau.is_finite() || seq.lambdas.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidArgument("pulse sequence must be finite".into()));
    }
    let nu = thermal_density_with_threshold(params.nbar, dim_m, params.truncation_threshold)?;
    let h = build_hamiltonian(
        kind.into(),
        params.strength(kind),
        params.omega_m,
        dim_m,
    )?;
    let free = h.eigen()?.propagator(seq.tau / 4.0);
    let b = annihilation_matrix(dim_m);
    let x = (&b + b.adjoint()) * Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let x_eig = hermitian_eigen(&x)?;

    let sqrt_nu = CMatrix::from_diagonal(&nu.matrix().diagonal().map(|p| p.re.max(0.0).sqrt().into()));
    let rho0 = field_state.matrix();

    // K_n = W_n √ν, and the worst edge population met along the loop
    let blocks: Vec<(CMatrix, f64)> = (0..dim_c)
        .into_par_iter()
        .map(|n| {
            let mut k = sqrt_nu.clone();
            let mut edge = edge_population(&k);
            for lam in seq.lambdas {
                let shift = lam * n as f64;
                let pulse = x_eig.apply_fn(|v| Complex64::from_polar(1.0, shift * v));
                k = &free * (pulse * k);
                edge = edge.max(edge_population(&k));
            }
            (k, edge)
        })
        .collect();

    let truncation_deficit: f64 = (0..dim_c)
        .map(|n| rho0[(n, n)].re.max(0.0) * blocks[n].1)
        .sum();
    if truncation_deficit > params.truncation_threshold {
        return Err(Error::Truncation {
            deficit: truncation_deficit,
            threshold: params.truncation_threshold,
            dim: dim_m,
        });
    }

    let mut reduced = CMatrix::zeros(dim_c, dim_c);
    for n in 0..dim_c {
        for m in 0..=n {
            let overlap: Complex64 = blocks[n]
                .0
                .iter()
                .zip(blocks[m].0.iter())
                .map(|(a, b)| a * b.conj())
                .sum();
            reduced[(n, m)] = rho0[(n, m)] * overlap;
            reduced[(m, n)] = reduced[(n, m)].conj();
        }
    }
    let reduced_field = FockDensity::from_matrix_unchecked(reduced);

    let mut mech = CMatrix::zeros(dim_m, dim_m);
    for (n, (k, _)) in blocks.iter().enumerate() {
        let p = rho0[(n, n)].re;
        if p != 0.0 {
            mech += k * k.adjoint() * Complex64::new(p, 0.0);
        }
    }
    let reduced_mechanics = FockDensity::from_matrix_unchecked(mech);

    let final_joint = if opts.keep_joint {
        let mut joint = JointState::zeros(dim_c, dim_m);
        for n in 0..dim_c {
            for m in 0..dim_c {
                if rho0[(n, m)] != Complex64::new(0.0, 0.0) {
                    let blk = &blocks[n].0 * blocks[m].0.adjoint() * rho0[(n, m)];
                    joint.set_block(n, m, &blk);
                }
            }
        }
        Some(joint)
    } else {
        None
    };

    let map = EffectiveKerrMap::build(params, kind, dim_c);
    let target = map.apply_density(field_state)?;
    let out_a: Complex64 = (0..dim_c.saturating_sub(1))
        .map(|n| reduced_field.matrix()[(n + 1, n)] * ((n + 1) as f64).sqrt())
        .sum();
    let a_ref = sub_diagonal_weight(rho0);
    let diagnostics = RunDiagnostics {
        effective_map_fidelity: fidelity(&reduced_field, &target)?,
        field_purity: reduced_field.purity().clamp(0.0, 1.0),
        mechanics_return_fidelity: fidelity(&reduced_mechanics, &nu)?,
        truncation_deficit,
        coherence_visibility: coherence_visibility(&reduced_field, field_state),
        mean_field_visibility: if a_ref == 0.0 {
            1.0
        } else {
            (out_a.norm() / a_ref).clamp(0.0, 1.0)
        },
    };

    Ok(ProtocolRun {
        params: *params,
        seq: *seq,
        kind,
        final_joint,
        reduced_field,
        reduced_mechanics,
        diagnostics,
    })
}

fn edge_population(k: &CMatrix) -> f64 {
    let d = k.nrows();
    let lo = d.saturating_sub(EDGE_LEVELS);
    (lo..d).map(|i| k.row(i).norm_squared()).sum()
}

/// One row of a loss sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRow {
    pub epsilon: f64,
    /// Purity of the reduced field for the anharmonic run.
    pub purity: f64,
    /// `arg κ₁₀` of the harmonic run, the phase acquired by `|1>` per `n²`.
    pub harmonic_phase: f64,
    /// `λ₃λ₂ + ½(λ₂ − λ₄)(λ₁ − λ₃)`.
    pub harmonic_phase_formula: f64,
    /// `|κ₁₀|` of the harmonic run.
    pub harmonic_modulus: f64,
    /// `exp(−|μ|²(1 + 2n̄)/2)`.
    pub harmonic_modulus_formula: f64,
    /// `arg(<a>_anh / <a>_harm)`, the phase added by the anharmonicity.
    pub anharmonic_phase: f64,
    /// `ε n̄ / N_p`.
    pub loss_condition: f64,
}

/// Runs the lossy loop for every `ε` at the parameters' `λ`, `n̄`, `α`.
/// The harmonic reference closes at `2π/ω_m`; the anharmonic run uses the
/// loop period of `kind`.
pub fn loss_sweep(
    params: &ProtocolParams,
    kind: Anharmonicity,
    epsilons: &[f64],
) -> Result<Vec<LossRow>> {
    params.validate()?;
    let rho0 = coherent_input(params)?;
    let opts = OracleOptions {
        keep_joint: false,
        ..OracleOptions::default()
    };
    let harmonic = params.with_strength(kind, 0.0);
    epsilons
        .iter()
        .map(|&eps| {
            let p = ProtocolParams {
                epsilon: eps,
                ..*params
            };
            p.validate()?;
            let seq_h = lossy_sequence(p.lambda, eps)?.with_period(2.0 * PI / p.omega_m);
            let seq_a = lossy_sequence(p.lambda, eps)?.with_period(p.loop_period(kind)?);
            let run_h = run_protocol_with(&ProtocolParams { epsilon: eps, ..harmonic }, &seq_h, &rho0, kind, &opts)?;
            let run_a = run_protocol_with(&p, &seq_a, &rho0, kind, &opts)?;
            let kappa = coherence_factor(&run_h.reduced_field, &rho0, 1);
            let predicted = lossy_harmonic_expectation(&seq_h, p.nbar, 1);
            let a_h = run_h.reduced_field.mean_annihilation();
            let a_a = run_a.reduced_field.mean_annihilation();
            Ok(LossRow {
                epsilon: eps,
                purity: run_a.diagnostics.field_purity,
                harmonic_phase: kappa.arg(),
                harmonic_phase_formula: seq_h.harmonic_phase_coefficient(),
                harmonic_modulus: kappa.norm(),
                harmonic_modulus_formula: predicted.norm(),
                anharmonic_phase: (a_a / a_h).arg(),
                loss_condition: p.validity_flags().loss_condition,
            })
        })
        .collect()
}

/// `ρ_out[n,0] / ϱ₀[n,0]`, the mechanical overlap factor `Tr[W_n ν W_0†]`.
pub fn coherence_factor(out: &FockDensity, input: &FockDensity, n: usize) -> Complex64 {
    out.matrix()[(n, 0)] / input.matrix()[(n, 0)]
}
