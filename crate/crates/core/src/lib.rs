// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Hybrid classical–quantum dynamics derived from nonlocal environment
//! kernels: kernel moments, Markov coefficients, the semi-Wigner master
//! equation on a phase-space grid, complete-positivity certificates and a
//! stochastic unraveling.

pub mod cq_coeffs;
pub mod cq_master;
pub mod hilbert;
pub mod kernels;
pub mod positivity;
pub mod semi_wigner;
pub mod unraveling;
