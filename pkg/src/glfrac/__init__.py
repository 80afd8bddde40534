"""Lattice phase-field fracture energies, recovery constructions and solvers."""

from .lattice import (LatticeDomain, DirectionSet, ScalarField, VectorField,
                      build_domain, direction_set, range_nodes, range_div,
                      apply_dirichlet, save_field, load_field)
from .energy import (EnergyParams, EnergyBreakdown, Region, GriffithReference,
                     elastic_energy_xi, elastic_energy, divergence_energy,
                     divergence_energy_ni, modica_mortola, total_energy,
                     quadratic_form_identity, form_coefficients,
                     griffith_energy)
from .interpolation import (Simplex, freudenthal, AffineInterpolant, cell_min,
                            translate, hat_interpolant_1d)
from .recovery import (OptimalProfile, optimal_profile, CrackGeometry,
                       RecoveryPair, build_recovery_pair, cap_at_one,
                       translation_scan)
from .solver import (SolverConfig, SolveReport, minimize_displacement,
                     minimize_phase, minimize_displacement_ni,
                     nearest_datum_extension, alternate_minimize)
from .harness import (ConfigError, ExperimentConfig, SweepRow,
                      config_from_dict, load_config, run_sweep, run_verify,
                      main)

__version__ = "0.1.0"
