//! Property tests of the public API across randomly drawn parameters.

use nalgebra::DMatrix;
use optofock::calibration::{first_zero, laguerre};
use optofock::dynamics::{
    chi_ref, displaced_frame_reduce, effective_liouvillian, full_liouvillian, steady_state, unvectorize, vectorize,
};
use optofock::fock::{displacement, tensor_state, DensityMatrix, FockSpace};
use optofock::metrics::{fidelity_to_fock, phonon_distribution, purity};
use optofock::model::SystemParams;
use optofock::Complex64;
use proptest::prelude::*;

fn fs(d: usize) -> FockSpace {
    FockSpace::new(d).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn vectorization_round_trips(dim in 1usize..8, seed in any::<u64>()) {
        let mut x = seed;
        let m = DMatrix::from_fn(dim, dim, |_, _| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            Complex64::new((x >> 40) as f64, (x >> 20 & 0xfff) as f64)
        });
        let v = vectorize(&m);
        // column stacking: element (i, j) sits at i + dim·j
        for i in 0..dim {
            for j in 0..dim {
                prop_assert_eq!(v[i + dim * j], m[(i, j)]);
            }
        }
        prop_assert_eq!(unvectorize(&v, dim), m);
    }

    #[test]
    fn calibrated_coupling_is_a_laguerre_zero(m in 1usize..=40) {
        let cal = first_zero(m).unwrap();
        prop_assert!(laguerre(m, 1, cal.x_star).abs() <= 1e-12);
        prop_assert!((cal.detuning - (1.0 - cal.eta * cal.eta)).abs() < 1e-15);
        if m > 1 {
            prop_assert!(cal.eta < first_zero(m - 1).unwrap().eta);
        }
    }

    #[test]
    fn displacement_composes_to_identity_on_low_levels(re in -1.5f64..1.5, im in -1.5f64..1.5) {
        let alpha = Complex64::new(re, im);
        let space = fs(60);
        let d = displacement(alpha, space).unwrap().to_dense();
        let back = displacement(-alpha, space).unwrap().to_dense();
        let product = back * d;
        for i in 0..20 {
            for j in 0..20 {
                let expect = if i == j { 1.0 } else { 0.0 };
                prop_assert!((product[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn full_liouvillian_preserves_trace(
        m in 1usize..5,
        kappa in 0.01f64..0.5,
        gamma in 0.0f64..0.05,
        nbar_m in 0.0f64..1.0,
        nbar_c in 0.0f64..0.2,
    ) {
        let cal = first_zero(m).unwrap();
        let params = SystemParams {
            kappa, gamma, nbar_m, nbar_c, n_optical: 3, n_mech: m + 4,
            ..SystemParams::from_calibration(&cal)
        };
        let l = full_liouvillian(&params).unwrap();
        prop_assert!(l.trace_preservation_error() < 1e-12);
    }

    #[test]
    fn undamped_effective_model_settles_in_the_target(m in 1usize..10) {
        let cal = first_zero(m).unwrap();
        let base = SystemParams { n_mech: m + 1, ..SystemParams::from_calibration(&cal) };
        let params = SystemParams { kappa: 20.0 * chi_ref(&base, &cal).unwrap(), ..base };
        let rho = steady_state(&effective_liouvillian(&params, &cal).unwrap()).unwrap();
        prop_assert!(fidelity_to_fock(&rho, m).unwrap() > 1.0 - 1e-9);
        prop_assert!((purity(&rho) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reduction_preserves_trace(nbar in 0.0f64..1.0, photons in 0usize..3) {
        let cal = first_zero(3).unwrap();
        let params = SystemParams { n_optical: 3, n_mech: 12, ..SystemParams::from_calibration(&cal) };
        let rho = tensor_state(
            &DensityMatrix::fock(fs(3), photons).unwrap(),
            &DensityMatrix::thermal(fs(12), nbar).unwrap(),
        ).unwrap();
        let reduced = displaced_frame_reduce(&rho, &params).unwrap();
        let p = phonon_distribution(&reduced).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}
