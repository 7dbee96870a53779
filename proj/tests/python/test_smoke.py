import math

import numpy as np
import pytest

import finsler


def test_euclidean_norm_and_flat_tensors():
    m = finsler.euclidean(2)
    assert m.F([0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0, abs=1e-14)
    x, y = [0.3, -1.2], [0.7, 0.4]
    assert np.allclose(finsler.fundamental_tensor(m, x, y), np.eye(2), atol=1e-14)
    assert np.abs(finsler.chern_coefficients(m, x, y)).max() < 1e-12
    assert np.abs(finsler.hh_curvature(m, x, y)).max() < 1e-12


def test_sphere_metric_and_curvature():
    r = 2.0
    m = finsler.sphere(r)
    theta = 1.1
    g = finsler.fundamental_tensor(m, [theta, 0.4], [1.0, 0.5])
    assert np.allclose(g, np.diag([r * r, (r * math.sin(theta)) ** 2]), rtol=1e-12)
    K = finsler.flag_curvature(m, [theta, 0.4], [1.0, 0.5], [0.2, 1.0])
    assert K == pytest.approx(1.0 / (r * r), rel=1e-6)


def test_cartan_symmetry_on_quartic():
    C = finsler.cartan_tensor(finsler.minkowski_quartic(0.1), [0.0, 0.0], [1.0, 0.3])
    assert C.shape == (2, 2, 2)
    assert np.allclose(C, np.transpose(C, (1, 0, 2)), atol=1e-13)
    assert np.abs(C).max() > 1e-3


def test_detectors():
    quartic = finsler.minkowski_quartic(0.1)
    assert finsler.is_berwald(quartic, seed=1)["berwald"]
    assert not finsler.is_riemannian(quartic, seed=1)["riemannian"]
    fixture = finsler.randers({"family": "euclidean", "dimension": 2}, [0.0, 0.0],
                              linear=[[0.0, 0.0], [1.0, 0.0]], chart_domain=[[-0.8, 0.8], [-2.0, 2.0]])
    assert not finsler.is_berwald(fixture, seed=1)["berwald"]


def test_rigidity_verdicts():
    assert finsler.verify_rigidity(finsler.sphere(1.0), seed=3)["consistency"] == "consistent_with_theorem"
    prod = finsler.metric({"family": "product", "factors": [{"family": "sphere"},
                                                             {"family": "minkowski_quartic", "epsilon": 0.1}]})
    v = finsler.verify_rigidity(prod, seed=3)
    assert v["consistency"] == "consistent_with_theorem"
    assert v["witness"] is not None and abs(v["witness"]["K"]) < 1e-6
    assert v["witness_mixed"]


def test_transport_and_holonomy():
    m = finsler.sphere(1.0)
    theta = math.pi / 2 - 0.2
    loop = finsler.Curve().line([theta, 0.0], [theta, 2 * math.pi])
    h = finsler.holonomy(m, loop)
    expected = 2 * math.pi * math.cos(theta)
    gap = min(abs(math.remainder(h["rotation_angle"] - s * expected, 2 * math.pi)) for s in (1, -1))
    assert gap < 1e-4
    t = finsler.parallel_transport(m, loop, [1.0, 0.5])
    assert t["max_drift"] < 1e-6


def test_geodesic_period():
    sol = finsler.geodesic(finsler.sphere(1.0), [math.pi / 2, 0.0], [0.0, 1.0], 2 * math.pi)
    assert sol["status"] == "completed"
    end = sol["x"][-1]
    assert abs(end[0] - math.pi / 2) < 1e-4
    assert abs(math.remainder(end[1], 2 * math.pi)) < 1e-4


def test_binet_legendre_euclidean():
    bl = finsler.binet_legendre_metric(finsler.euclidean(2), [0.0, 0.0], mc_samples=20000, seed=5)
    assert np.all(np.abs(bl["g"] - np.eye(2)) < 4 * bl["std_error"] + 1e-12)


def test_errors_are_typed():
    with pytest.raises(finsler.FinslerError, match="ConfigError"):
        finsler.metric({"family": "sphere", "radius": -1.0})
    with pytest.raises(finsler.FinslerError, match="SpecValidation"):
        finsler.randers({"family": "euclidean", "dimension": 2}, [1.2, 0.0])
    with pytest.raises(finsler.FinslerError, match="OutOfChart"):
        finsler.sphere(1.0).F([0.0, 0.0], [1.0, 0.0])


def test_run_experiment_round_trip():
    cfg = {"kind": "berwald_check", "seed": 9, "metric": {"family": "minkowski_quartic", "epsilon": 0.1},
           "expect": {"berwald": True, "riemannian": False}}
    code, report, _ = finsler.run_experiment(cfg)
    assert code == 0
    assert report["verdict"] == "berwald,not_riemannian"
    assert report["seed"] == 9
    again = finsler.run_experiment(cfg)[1]
    assert again == report
    cfg["expect"]["berwald"] = False
    assert finsler.run_experiment(cfg)[0] == 2
