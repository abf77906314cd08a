"""Switching problems with controlled randomisation.

Domain geometry, oblique reflection operators, a lattice solver for the
obliquely reflected BSDE and a Monte Carlo strategy simulator.
"""
from .errors import (CapabilityError, ConfigError, ConstructionError, DomainError,
                     ObliqueSwitchError, ProjectionError, StabilityError,
                     StructuralError, ValidationError)
from .markov import (absorption_moments, adjugate_identity_check, analyze_chain,
                     irreducible, validate_model)
from .model import (ControlledTransitionModel, classical_embedding,
                    controlled_costs_counterexample, dim3_model, example1, example2,
                    example3, symmetric_model, uncontrolled)
from .domain import (build_domain, emit_slice_polygon, euclidean_project, membership,
                     nonemptiness_report, oblique_project, obstacle, shift_to_positive_costs,
                     slice_vertices, triangle_check)

__version__ = "0.1.0"
