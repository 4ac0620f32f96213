// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Built-in scenarios. Each is an ordinary config document; a user config
//! naming one with `scenario = "..."` overrides it key by key.

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub toml: String,
}

const PAULI_OBSERVABLES: &str = r#"
[[observables]]
name = "sx"
op = [[0.0, 1.0], [1.0, 0.0]]

[[observables]]
name = "sy"
op = [[[0.0, 0.0], [0.0, -1.0]], [[0.0, 1.0], [0.0, 0.0]]]

[[observables]]
name = "sz"
op = [[1.0, 0.0], [0.0, -1.0]]
"#;

const CUBIC_WHITE: &str = r#"
# Qubit coupled through σz to an oscillator, with white noise placing the
# model exactly on the decoherence-diffusion boundary N22·N33 = ħ²λ₁²/16.
[model]
hbar = 1.0
lambda1 = 1.0
omega_c = 1.0
h_psi = [[0.0, 0.5], [0.5, 0.0]]
f2 = [[1.0, 0.0], [0.0, -1.0]]

[moments]
N22 = 0.25
N33 = 0.25

[grid]
h_min = -8.0
h_max = 8.0
n_h = 128
pi_min = -8.0
pi_max = 8.0
n_pi = 128

[initial]
h0 = 0.5
pi0 = 0.0
sigma_h = 0.5
sigma_pi = 0.5
rho = [[0.5, 0.5], [0.5, 0.5]]

[evolution]
t_final = 2.0
records = 10
boundary_threshold = 1e-6

[unravel]
trajectories = 10000
dt = 0.001
t_final = 2.0
output_stride = 200
seed = 20261017
"#;

const CUBIC_THERMAL: &str = r#"
# Qubit and oscillator coupled to one thermal bath mode. The run is a short
# transient dominated by the strong classical diffusion of the bath.
[model]
hbar = 1.0
lambda1 = 6.6
omega_c = 2.73616
h_psi = [[0.0, 1.0], [1.0, 0.0]]
f2 = [[1.0, 0.0], [0.0, -1.0]]

[environment]
correlator = "thermal_mode"
omega = 1.0
linewidth = 0.5
temperature = 0.2
lambda2 = 1.0
lambda3 = 4.0

[grid]
h_min = -7.75
h_max = 7.75
n_h = 32
pi_min = -7.75
pi_max = 7.75
n_pi = 32

[initial]
sigma_h = 0.575
sigma_pi = 0.575
rho = [[0.5, 0.45], [0.45, 0.5]]

[evolution]
dt = 2.5e-6
t_final = 0.025
output_stride = 1000

[unravel]
trajectories = 1000
dt = 2.5e-5
t_final = 0.025
output_stride = 100
seed = 20261017
"#;

const OU_CLASSICAL: &str = r#"
# One-dimensional quantum sector and no coupling: the oscillator alone is an
# Ornstein-Uhlenbeck process with damping D33_1/ħ = 1.
[model]
hbar = 1.0
lambda1 = 0.0
omega_c = 1.0
h_psi = [[0.0]]
f2 = [[1.0]]

[moments]
N33 = 0.5
N33_2 = 0.1
D33_1 = 1.0

[grid]
h_min = -7.0
h_max = 7.0
n_h = 64
pi_min = -7.0
pi_max = 7.0
n_pi = 64

[initial]
h0 = 1.0
pi0 = 0.0
sigma_h = 0.5
sigma_pi = 0.5
rho = [[1.0]]

[evolution]
t_final = 5.0
records = 10
boundary_threshold = 1e-6

[unravel]
trajectories = 1000
dt = 0.005
t_final = 5.0
output_stride = 100
seed = 20261017
"#;

const LINDBLAD_FROZEN: &str = r#"
# Classical sector frozen at a point: no drift, no diffusion, and D32 = −ħλ₁
# cancels the backreaction. The qubit then follows a fixed Lindblad equation.
[model]
hbar = 1.0
lambda1 = 1.0
omega_c = 0.0
h_psi = [[0.0, 0.5], [0.5, 0.0]]
f2 = [[1.0, 0.0], [0.0, -1.0]]

[moments]
N22 = 0.05
N22_2 = 0.02
D22 = 0.1
D22_1 = 0.01
D32 = -1.0

[grid]
h_min = -2.0
h_max = 2.0
n_h = 41
pi_min = -1.0
pi_max = 1.0
n_pi = 21

[initial]
shape = "point_mass"
h0 = 0.5
pi0 = 0.0
rho = [[1.0, 0.0], [0.0, 0.0]]

[evolution]
dt = 1e-3
t_final = 10.0
output_stride = 1000
"#;

const TRADEOFF_VIOLATED: &str = r#"
# Backreaction without any diffusion or decoherence: the trade-off fails and
# the evolved state loses positivity.
[model]
hbar = 1.0
lambda1 = 1.0
omega_c = 1.0
h_psi = [[0.0, 0.0], [0.0, 0.0]]
f2 = [[1.0, 0.0], [0.0, -1.0]]

[moments]
N22 = 0.0
N33 = 0.0

[grid]
h_min = -8.0
h_max = 8.0
n_h = 64
pi_min = -8.0
pi_max = 8.0
n_pi = 64

[initial]
sigma_h = 1.0
sigma_pi = 1.0
rho = [[0.5, 0.5], [0.5, 0.5]]

[evolution]
t_final = 0.5
records = 5
boundary_threshold = 1e-4
"#;

const PRESETS: &[(&str, &str, &str, bool)] = &[
    (
        "cubic-white",
        "white-noise cubic model at the trade-off boundary",
        CUBIC_WHITE,
        true,
    ),
    (
        "cubic-thermal",
        "cubic model driven by a thermal bath mode",
        CUBIC_THERMAL,
        true,
    ),
    (
        "ou-classical",
        "classical Ornstein-Uhlenbeck oscillator (d = 1)",
        OU_CLASSICAL,
        false,
    ),
    (
        "lindblad-frozen",
        "qubit Lindblad dynamics at a frozen classical point",
        LINDBLAD_FROZEN,
        true,
    ),
    (
        "tradeoff-violated",
        "backreaction without diffusion; not completely positive",
        TRADEOFF_VIOLATED,
        true,
    ),
];

fn with_observables(toml: &str, qubit: bool) -> String {
    if qubit {
        format!("{toml}{PAULI_OBSERVABLES}")
    } else {
        toml.to_string()
    }
}

pub fn find(name: &str) -> Option<Preset> {
    PRESETS
        .iter()
        .find(|p| p.0 == name)
        .map(|&(name, description, toml, qubit)| Preset {
            name,
            description,
            toml: with_observables(toml, qubit),
        })
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.0).collect()
}

pub fn all() -> impl Iterator<Item = Preset> {
    names().into_iter().filter_map(find)
}
