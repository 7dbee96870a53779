"""Finsler geometry toolkit: metrics, tensors, curvature, transport and detectors."""

import json

from ._finsler import (
    Curve,
    FinslerError,
    Metric,
    __version__,
    binet_legendre_metric,
    bonnet_diameter,
    cartan_tensor,
    chern_coefficients,
    flag_curvature,
    fundamental_tensor,
    geodesic,
    hh_curvature,
    holonomy,
    is_berwald,
    is_riemannian,
    linearity_defect,
    nonlinear_connection,
    parallel_transport,
    product,
    spray,
    spray_riemann,
    verify_rigidity,
)
from ._finsler import run_experiment as _run_experiment


def metric(spec):
    """Builds a catalog metric from a spec dict (the config-file metric schema)."""
    return Metric.from_json(json.dumps(spec))


def euclidean(dimension=2):
    return metric({"family": "euclidean", "dimension": dimension})


def sphere(radius=1.0):
    return metric({"family": "sphere", "radius": radius})


def minkowski_quartic(epsilon=0.1, dimension=2):
    return metric({"family": "minkowski_quartic", "epsilon": epsilon, "dimension": dimension})


def randers(alpha, constant, linear=None, chart_domain=None):
    spec = {"family": "randers", "alpha": alpha, "beta": {"constant": list(constant)}}
    if linear is not None:
        spec["beta"]["linear"] = [list(r) for r in linear]
    if chart_domain is not None:
        spec["chart_domain"] = [list(iv) for iv in chart_domain]
    return metric(spec)


def run_experiment(config, base_dir="."):
    """Runs one experiment config (dict) and returns (exit_code, report dict, csv text)."""
    code, report, csv = _run_experiment(json.dumps(config), str(base_dir))
    return code, json.loads(report), csv
