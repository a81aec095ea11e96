use std::f64::consts::FRAC_PI_2;

use anharmonic_core::dynamics::{Anharmonicity, ProtocolParams};
use anharmonic_core::inference::{crb_saturation_experiment, CrbOptions};
use anharmonic_core::metrology::{optimize_phase, MeasurementConfig};
use anharmonic_core::Error;

fn desk() -> ProtocolParams {
    ProtocolParams {
        lambda: 0.3,
        gamma: 1e-3,
        delta: 1e-3,
        ..ProtocolParams::default()
    }
    .with_photon_number(9.0)
}

#[test]
fn heterodyne_costs_the_fisher_ratio_in_variance() {
    let p = desk();
    let opts = CrbOptions {
        m: 1000,
        n_repeats: 120,
        seed: 77,
        bootstrap: 200,
        ..CrbOptions::default()
    };
    let hom = crb_saturation_experiment(
        &p,
        Anharmonicity::Quartic,
        &MeasurementConfig::homodyne(FRAC_PI_2),
        &opts,
    )
    .unwrap();
    let het = crb_saturation_experiment(
        &p,
        Anharmonicity::Quartic,
        &MeasurementConfig::heterodyne(),
        &opts,
    )
    .unwrap();
    let predicted = hom.fisher / het.fisher;
    let observed = het.variance / hom.variance;
    // each variance carries ~13% relative noise at 120 repeats
    assert!(
        (observed / predicted - 1.0).abs() < 0.45,
        "observed {observed}, predicted {predicted}"
    );
    assert!((0.6..1.5).contains(&het.saturation), "{}", het.saturation);
    for rep in [&hom, &het] {
        let se = (rep.variance / rep.n_repeats as f64).sqrt();
        assert!(rep.bias.abs() < 4.0 * se, "bias {} se {se}", rep.bias);
        let mean_se = rep.std_errors.iter().sum::<f64>() / rep.std_errors.len() as f64;
        assert!((mean_se / rep.crb.sqrt() - 1.0).abs() < 0.2);
    }
}

#[test]
fn cubic_estimator_is_unbiased_and_efficient() {
    let p = desk();
    let opts = CrbOptions {
        m: 1000,
        n_repeats: 100,
        seed: 5,
        bootstrap: 200,
        ..CrbOptions::default()
    };
    let rep = crb_saturation_experiment(
        &p,
        Anharmonicity::Cubic,
        &MeasurementConfig::homodyne(FRAC_PI_2),
        &opts,
    )
    .unwrap();
    let se = (rep.variance / rep.n_repeats as f64).sqrt();
    assert!(rep.bias.abs() < 4.0 * se);
    assert!((0.6..1.5).contains(&rep.saturation), "{}", rep.saturation);
}

#[test]
fn rescaled_parameter_keeps_saturation() {
    let p = desk();
    let base = CrbOptions {
        m: 500,
        n_repeats: 40,
        seed: 1,
        bootstrap: 50,
        ..CrbOptions::default()
    };
    let cfg = MeasurementConfig::homodyne(FRAC_PI_2);
    let a = crb_saturation_experiment(&p, Anharmonicity::Quartic, &cfg, &base).unwrap();
    let b = crb_saturation_experiment(
        &p,
        Anharmonicity::Quartic,
        &cfg,
        &CrbOptions {
            scale: 1e3,
            ..base
        },
    )
    .unwrap();
    assert!((b.truth / a.truth - 1e3).abs() < 1e-9);
    assert!((b.saturation / a.saturation - 1.0).abs() < 1e-4);
}

#[test]
fn optimized_phase_beats_fixed_quadrature() {
    let p = desk();
    let cfg = MeasurementConfig::homodyne(FRAC_PI_2);
    let grid: Vec<f64> = (0..24).map(|i| i as f64 * std::f64::consts::PI / 24.0).collect();
    let (phi, fi) = optimize_phase(&p, Anharmonicity::Quartic, &cfg, &grid).unwrap();
    let fixed = anharmonic_core::metrology::fisher_homodyne(&cfg, &p, Anharmonicity::Quartic).unwrap();
    assert!(fi >= fixed * (1.0 - 1e-9));
    assert!((0.0..std::f64::consts::PI).contains(&phi));
}

#[test]
fn zero_coupling_has_no_information() {
    let p = ProtocolParams {
        lambda: 0.0,
        ..desk()
    };
    let r = crb_saturation_experiment(
        &p,
        Anharmonicity::Quartic,
        &MeasurementConfig::heterodyne(),
        &CrbOptions::default(),
    );
    assert!(matches!(r, Err(Error::ZeroInformation)));
}
