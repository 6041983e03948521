"""Big-pieces constructions on epsilon-resolution point clouds.

Ahlfors-David regular sets are modelled as epsilon-separated point clouds
with mass ``count * epsilon**k``.  The package builds dyadic cubes, fits and
scripts big-pieces oracles over Lipschitz graphs, runs the stopping-time
superset construction and the net-based regular extension, and verifies
their claims by sampling.
"""
__version__ = "0.1.0"

from .geometry import (GeometryError, MetricSpace, PointCloudSet, RegularityReport, ball_points,
                       diameter, estimate_adr, greedy_maximal_net, point_set_distance, read_pcs,
                       set_distance, set_mass, write_pcs)
from .cubes import Cube, CubeTree, build_tree, descendants, maximal_stopping_cubes, verify_center_ball
from .families import (FamilyWitness, LipschitzGraphSpec, OracleError, certify_bp, fit_big_piece,
                       sample_graph)
from .scenario import load_scenario
from .construct import (ConstructionParams, ConstructionTrace, ExtensionTrace, calibrate_alpha,
                        collapse_bp_level, construct_superset, glue_unbounded, interior,
                        regular_extension)
from .verify import (VerificationReport, verify_adr, verify_bp, verify_containment, verify_extension,
                     verify_trace)


def scripted_bpbp_oracle(scenario, validate=True):
    """Two-level scripted oracle of a scenario (object, path or shipped name)."""
    if not hasattr(scenario, "oracle"):
        scenario = load_scenario(scenario)
    return scenario.oracle(validate=validate)
