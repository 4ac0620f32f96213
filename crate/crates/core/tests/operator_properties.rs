// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

use nalgebra::{DMatrix, Matrix2};
use proptest::prelude::*;

use cqsim_core::hilbert::{gksl_apply, heisenberg_rate, GKSLMatrix, QuantumOperator, C64};
use cqsim_core::semi_wigner::{PhaseSpaceGrid, SemiWignerState};

fn hermitian(d: usize, entries: &[f64]) -> QuantumOperator {
    let mut m = DMatrix::<C64>::zeros(d, d);
    let mut it = entries.iter().copied();
    for r in 0..d {
        m[(r, r)] = C64::new(it.next().unwrap(), 0.0);
        for c in r + 1..d {
            let z = C64::new(it.next().unwrap(), it.next().unwrap());
            m[(r, c)] = z;
            m[(c, r)] = z.conj();
        }
    }
    QuantumOperator::from_matrix(m).unwrap()
}

fn herm_strategy(d: usize) -> impl Strategy<Value = QuantumOperator> {
    prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |v| hermitian(d, &v))
}

fn gksl_strategy() -> impl Strategy<Value = GKSLMatrix> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b, re, im)| {
        let off = C64::new(re, im);
        GKSLMatrix::new(Matrix2::new(C64::new(a, 0.0), off, off.conj(), C64::new(b, 0.0))).unwrap()
    })
}

fn operator_case() -> impl Strategy<Value = (GKSLMatrix, QuantumOperator, QuantumOperator, QuantumOperator)> {
    (1usize..=4).prop_flat_map(|d| (gksl_strategy(), herm_strategy(d), herm_strategy(d), herm_strategy(d)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gksl_is_traceless_and_keeps_hermiticity((d0, l1, l2, w) in operator_case()) {
        let out = gksl_apply(&d0, (&l1, &l2), &w).unwrap();
        // Absolute deviations; the output itself may cancel to round-off.
        let m = out.matrix();
        let defect = (m - m.adjoint()).iter().fold(0.0f64, |a, z| a.max(z.norm()));
        prop_assert!(out.trace().norm() <= 1e-12);
        prop_assert!(defect <= 1e-12);
    }

    #[test]
    fn heisenberg_rate_is_hermitian(
        (h, f) in (1usize..=4).prop_flat_map(|d| (herm_strategy(d), herm_strategy(d))),
        hbar in 0.1f64..10.0,
    ) {
        let r = heisenberg_rate(&h, &f, hbar).unwrap();
        let m = r.matrix();
        prop_assert!((m - m.adjoint()).iter().all(|z| z.norm() <= 1e-12));
    }

    #[test]
    fn derivatives_keep_hermiticity_exactly(
        rho_entries in prop::collection::vec(-1.0f64..1.0, 4),
        h0 in -1.0f64..1.0,
        pi0 in -1.0f64..1.0,
    ) {
        // Mix a random Hermitian part into a valid density matrix.
        let x = hermitian(2, &rho_entries).scale(0.1);
        let rho = &QuantumOperator::identity(2).scale(0.5) + &x;
        let rho = QuantumOperator::from_matrix(rho.matrix() / rho.trace()).unwrap();
        prop_assume!(cqsim_core::hilbert::min_eigenvalue(&rho).unwrap() >= 0.0);
        let g = PhaseSpaceGrid::symmetric(6.0, 6.0, 32).unwrap();
        let w = SemiWignerState::init_gaussian_product(g, h0, pi0, 0.8, 0.6, &rho).unwrap();
        for d in [w.partial_h(), w.partial_pi(), w.partial2_h(), w.partial2_pi()] {
            prop_assert_eq!(d.hermiticity_defect(), 0.0);
        }
    }
}

#[test]
fn pi_derivative_sums_to_zero_for_compact_data() {
    let g = PhaseSpaceGrid::symmetric(8.0, 8.0, 64).unwrap();
    let rho = QuantumOperator::diagonal(&[0.25, 0.75]);
    let w = SemiWignerState::init_gaussian_product(g, 0.3, -0.2, 0.7, 0.7, &rho).unwrap();
    let s: f64 = w.partial_pi().total_trace();
    assert!(s.abs() <= 1e-10, "Σ Tr ∂π W ΔhΔπ = {s:e}");
}
