mod common;

use common::uniform_layout;
use dixon_core::phantom::{simulate_phantom, PhantomLayout, Region, Shape};
use dixon_core::signal::{ComplexVoxelTruth, FatSpectrum};
use dixon_core::twopoint::*;
use dixon_core::{BinaryMask, ScalarVolume};

/// Opposed- and in-phase echo times (ms) for a -434 Hz single fat peak.
fn op_ip_ms() -> [f64; 2] {
    [1e3 / (2.0 * 434.0), 1e3 / 434.0]
}

fn tissue(pdff: f64) -> ComplexVoxelTruth {
    ComplexVoxelTruth { rho_w: 100.0 * (1.0 - pdff), rho_f: 100.0 * pdff, r2star: 0.0, psi: 0.0, phi0: 0.0 }
}

fn layout() -> PhantomLayout {
    PhantomLayout {
        dims: [20, 20, 4],
        voxel_size_mm: [1.64, 1.64, 4.0],
        background: tissue(0.1),
        regions: vec![
            Region { name: "fatty".into(), shape: Shape::Box { min: [2.0, 2.0, 0.0], max: [9.0, 18.0, 4.0] }, truth: tissue(0.8) },
            Region {
                name: "mixed".into(),
                shape: Shape::Ellipsoid { center: [14.0, 10.0, 1.5], radii: [4.0, 6.0, 3.0] },
                truth: tissue(0.3),
            },
        ],
    }
}

fn opposed_in_phase(layout: &PhantomLayout, sigma: f64) -> (ScalarVolume, ScalarVolume, dixon_core::phantom::Phantom) {
    let ph = simulate_phantom(layout, &FatSpectrum::single_peak_3t(), &op_ip_ms(), sigma, 21).unwrap();
    let e = ph.echoes.echoes();
    (e[0].clone(), e[1].clone(), ph)
}

#[test]
fn noiseless_oracle_prior_recovers_truth() {
    let (s0, s1, ph) = opposed_in_phase(&layout(), 0.0);
    let mask = BinaryMask::full(*s0.geometry());
    let r = select_volume_with_prior(&s0, &s1, &ph.oracle_prior, &mask, default_tolerance(&s1, None)).unwrap();
    for i in 0..mask.len() {
        assert!((r.water.get(i) - ph.truth.rho_w.get(i)).abs() < 1e-4);
        assert!((r.fat.get(i) - ph.truth.rho_f.get(i)).abs() < 1e-4);
    }
    assert_eq!(r.count(TwoPointFlags::INFEASIBLE), 0);
}

#[test]
fn zero_prior_selects_min_candidate() {
    let (s0, s1, _) = opposed_in_phase(&layout(), 0.0);
    let g = *s0.geometry();
    let r = select_volume_with_prior(&s0, &s1, &ScalarVolume::zeros(g), &BinaryMask::full(g), 1e-6).unwrap();
    for i in 0..g.len() {
        let pair = two_point_candidates(s0.get(i) as f64, s1.get(i) as f64, 1e-6);
        assert_eq!(r.water.get(i), pair.candidate_b as f32);
    }
}

#[test]
fn exchanged_inputs_are_flagged_almost_everywhere() {
    let (s0, s1, ph) = opposed_in_phase(&layout(), 0.5);
    let g = *s0.geometry();
    let sigma_hat = 0.5;
    let r = select_volume_with_prior(&s1, &s0, &ph.oracle_prior, &BinaryMask::full(g), 3.0 * sigma_hat).unwrap();
    let fraction = r.count(TwoPointFlags::INFEASIBLE) as f64 / g.len() as f64;
    assert!(fraction > 0.99, "{fraction}");
}

#[test]
fn equal_densities_tie() {
    let (s0, s1, _) = opposed_in_phase(&uniform_layout([3, 3, 1], tissue(0.5)), 0.0);
    let g = *s0.geometry();
    let prior = ScalarVolume::from_fn(g, |_| 10.0).unwrap();
    let r = select_volume_with_prior(&s0, &s1, &prior, &BinaryMask::full(g), 1e-6).unwrap();
    assert_eq!(r.count(TwoPointFlags::TIE), g.len());
    assert!(r.water.data().iter().all(|&w| (w - 50.0).abs() < 1e-4));
}
