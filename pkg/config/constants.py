"""
Configuration constants for the dressed-pair fiber calculations
"""

import math

TOOL_VERSION = "0.3.0"

# Physical constants (energies in eV, ħ = 1 so times are in eV⁻¹)
PHYSICAL_CONSTANTS = {
    'kB_eV_per_K': 8.617333e-5,  # CODATA Boltzmann constant
}

# Sentinel for the U → ∞ (no double occupancy) limit
HARD_CORE = math.inf

# Prototypical cuprate-like parameter set
PROTOTYPICAL_PARAMS = {
    'epsilon_eV': 0.266,
    'h_b': 0.00575,
    'U_eV': 1.461,
    'lattice_spacing_nm': 0.2672,
    'p1': 'one_range 1.0',
    'p2': 'one_range_even 1.0',
    'u_variant': 'none',
    'upsilon_profile': 'antinodal_lorentzian',
    'upsilon_peak_eV': 0.11,
    'upsilon_alpha': 1.0,
}

# Extended repulsion variants shipped with the code (u is not fixed by the model)
U_VARIANTS = {
    'none': {
        'label': 'u = 0 (no extended repulsion)',
    },
    'nearest_neighbor': {
        'label': 'u = u_nn on the four nearest neighbours',
        'default_u_nn_eV': 0.3,
    },
}

# Momentum profile forms for the exchange coupling
PROFILE_FORMS = {
    'antinodal_lorentzian': {
        'centers': ((math.pi, 0.0), (0.0, math.pi)),
        'default_alpha': 1.0,
    },
}

# Grid and window defaults
GRID_DEFAULTS = {
    'sweep_N': 64,
    'localization_N': 128,
    'scattering_max_N': 32,
    'window': 24,
    'min_N': 4,
    'rotation_check_samples': 64,
    'nondegeneracy_samples': 32,
}

# Solver tolerances, all relative to the energy scale epsilon
SOLVER_TOLERANCES = {
    'spectrum_proximity': 1e-12,    # min(f_k) - x must stay above this
    'bracket_delta_start': 1e-6,    # first upper-bracket offset below min(b, z)
    'bracket_delta_shrink': 10.0,
    'bracket_delta_floor': 1e-13,
    'lower_bracket_max_doublings': 80,
    'bisection_xtol': 1e-8,
    'newton_phi_tol': 1e-12,
    'newton_max_iter': 30,
    'upsilon_zero': 1e-15,          # eV; |υ̂(k)| below this counts as a node
    'birman_schwinger_certify': 1e-9,
    'rotation_invariance': 1e-12,
    'nondegeneracy_min_d': 1e-10,
    'density_threshold': 1e-12,
    'min_fit_points': 4,
}

# Finite-difference steps in quasi-momentum
FD_STEPS = {
    'gradient': 2.0 * math.pi / 1024,
    'hessian': 2.0 * math.pi / 512,
    'singular_det_rel': 1e-12,
}

# U ladder used by the limit and monotonicity checks, in units of epsilon
U_LADDER = (0.0, 1.0, 10.0, 1e2, 1e3, 1e4, 1e6)

# Scattering defaults
SCATTERING_DEFAULTS = {
    'gl_order': 8,
    'min_panels': 16,
    'panel_phase_budget': 2.0,      # max spectral phase swept per panel (radians)
    'max_dyson_order': 6,
    'min_ode_steps': 4,
    'default_ode_steps': 2000,
    'ladder_levels': 6,
    'unitarity_tol': 1e-8,
}

# Calibration defaults
CALIBRATION_DEFAULTS = {
    'peak_bounds_eps': (1e-4, 10.0),
    'scan_points': 25,
    'tolerance': 1e-6,
    'target_binding_K': 1250.0,
    'binding_tolerance': 0.2,
}

# File formats
FILE_FORMATS = {
    'grid_function_format': 'dressed-pairs/grid-function',
    'propagator_format': 'dressed-pairs/propagator',
    'pair_state_format': 'dressed-pairs/pair-state',
    'format_version': 1,
    'float_format': '%.17g',
    'sweep_columns': [
        'k1', 'k2', 'E_eV', 'gap_eV', 'rho', 'v1', 'v2',
        'm11', 'm12', 'm22', 'w_s', 'w_d', 'w_p',
    ],
    'grid_function_columns': ['p1', 'p2', 're', 'im'],
    'density_columns': ['x', 'y', 'density'],
    'cache_index': 'index.json',
    'manifest_name': 'manifest.json',
}

# CLI exit codes
EXIT_CODES = {
    'success': 0,
    'validation': 2,
    'numerical': 3,
}

# Error messages
ERROR_MESSAGES = {
    'VALIDATION_FAILED': "Parameter validation failed",
    'CONFIG_INVALID': "Configuration file is invalid",
    'DIMENSION_MISMATCH': "Grid function length does not match the grid",
    'WINDOW_TOO_LARGE': "Lattice window half-width must not exceed N/2",
    'WINDOW_TOO_SMALL': "Lattice window too small for a decay fit (fewer than 4 points)",
    'HARD_CORE_UNSUPPORTED': "Hard-core repulsion has no dense fiber matrix; use a finite U",
    'ZERO_VECTOR': "Symmetry decomposition of the zero vector is undefined",
    'STEP_COUNT': "At least 4 integration steps are required",
    'ORDER_INVALID': "Dyson order must be between 1 and 6",
    'UNDEFINED_AT_SINGULAR': "Group velocity is undefined at the singular fiber k = 0",
    'DIVISION_AT_B': "Birman-Schwinger value is undefined at lambda = b(k)",
    'SPECTRUM_PROXIMITY': "Spectral parameter too close to the bottom of diag(f_k)",
    'NO_ROOT': "Characteristic equation has no bracketed root below min(b, z)",
    'NON_CONVERGENCE': "Root polishing did not converge",
    'SINGULAR_HESSIAN': "Dispersion Hessian is singular at this fiber",
    'GAP_CONDITION_FAILED': "Combes-Thomas gap condition 4 eps (e^alpha - 1) < g fails",
    'TARGET_UNREACHABLE': "Calibration target not reachable within the amplitude bounds",
    'DEGENERATE_PAIR_SHAPE': "p1 and p2 are multiples of the delta at the origin (r_p = 0)",
    'h_b_range': "h_b must lie in [0, 1/2] for bound-pair operations (b(k) <= z(k))",
}
