import math

import numpy as np
import pytest

from rnm_insertion.errors import PreconditionError
from rnm_insertion.kernel_engine import RadialModel, limiting_density, limiting_kernel
from rnm_insertion.quadrature import composite_rule, trapezoid_angles
from rnm_insertion.ward import (berezin, cauchy_parts, cauchy_transform_quad, cauchy_transform_radial,
                                ward_residual)


def annulus(count, r0=0.3, r1=2.0):
    radii = np.geomspace(r0, r1, count)
    return radii * np.exp(2j * math.pi * 0.381966011250105 * np.arange(count))


def closed_form_cauchy(z):
    # k = 1, c = 1: C(z) = (1/z)[e^{-s} - s e^{-s} / (1 - e^{-s})]
    s = abs(z) ** 2
    return (math.exp(-s) - s * math.exp(-s) / -math.expm1(-s)) / z


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("c", [-0.5, 0.0, 1.0])
@pytest.mark.parametrize("z", [0.5, 1.0, 2.0])
def test_berezin_is_a_probability_density(k, c, z):
    model = RadialModel(k, c)
    # plain polar Gauss-Legendre about the origin; r^(2c+1) is smooth for these charges
    r, wr = composite_rule(np.linspace(0.0, z + 6.0, 25), 24)
    theta, wth = trapezoid_angles(256)
    W = r[:, None] * np.exp(1j * theta)[None, :]
    total = np.sum(berezin(model, z, W) * (wr * r)[:, None] * wth[None, :]) / math.pi
    assert abs(total - 1) < 1e-6


@pytest.mark.parametrize("k,c", [(1, 0.0), (2, 0.5), (2, -0.5), (3, 1.0)])
def test_berezin_diagonal(k, c):
    model = RadialModel(k, c)
    for z in (0.4, 1.0 + 0.5j, -1.7j):
        assert berezin(model, z, z) == pytest.approx(limiting_density(model, z), rel=1e-12)


def test_berezin_precondition():
    with pytest.raises(PreconditionError):
        berezin(RadialModel(1, 1.0), 0.0, 0.5)


def test_radial_cauchy_closed_form():
    model = RadialModel(1, 1.0)
    for z in annulus(20, 0.05, 4.0):
        assert abs(cauchy_transform_radial(model, z) - closed_form_cauchy(z)) < 1e-13 * max(1, abs(closed_form_cauchy(z)))


@pytest.mark.parametrize("k,c", [(1, 1.0), (2, 0.5), (2, -0.5)])
def test_rotational_covariance(k, c):
    model = RadialModel(k, c)
    for z in (0.6, 1.3 + 0.2j):
        for th in (0.4, 2.0):
            lhs = cauchy_transform_radial(model, np.exp(1j * th) * z)
            assert abs(lhs - np.exp(-1j * th) * cauchy_transform_radial(model, z)) < 1e-8
    lhs = cauchy_transform_quad(model, 0.8 * np.exp(0.9j))
    assert abs(lhs - np.exp(-0.9j) * cauchy_transform_quad(model, 0.8)) < 1e-8


@pytest.mark.parametrize("k,c", [(1, 0.5), (2, 0.5), (3, -0.5)])
def test_second_part_is_d_log_kernel(k, c):
    # S2 = d/dz log L0(z, z), checked by a central difference in x (d = (d_x - i d_y)/2 on a radial function)
    model = RadialModel(k, c)
    z = 0.7 + 0.4j
    h = 1e-5

    def logL(x):
        return math.log(limiting_kernel(model, x, x).real)

    d = 0.5 * ((logL(z + h) - logL(z - h)) - 1j * (logL(z + 1j * h) - logL(z - 1j * h))) / (2 * h)
    _, s2 = cauchy_parts(model, z)
    assert abs(s2 - d) < 1e-8


@pytest.mark.slow
def test_two_cauchy_routes_agree():
    model = RadialModel(2, 0.5)
    for z in annulus(20):
        assert abs(cauchy_transform_quad(model, z) - cauchy_transform_radial(model, z)) < 1e-6


@pytest.mark.parametrize("k,c", [(1, 0.0), (1, 1.0), (2, -0.5)])
def test_two_cauchy_routes_agree_sparse(k, c):
    model = RadialModel(k, c)
    for z in annulus(4):
        r = cauchy_transform_quad(model, z, return_error=True)
        assert abs(r.value - cauchy_transform_radial(model, z)) < 1e-6
        assert r.error_estimate < 1e-4  # coarse-vs-fine change bounds the coarse rule


@pytest.mark.parametrize("k,c", [(1, 1.0), (2, 0.5), (3, -0.5)])
def test_ward_residual_second_order(k, c):
    model = RadialModel(k, c)
    for z in (0.35, 1.1 * np.exp(0.5j), 1.9j):
        res = [ward_residual(model, z, h) for h in (1e-2, 5e-3, 2.5e-3)]
        for coarse, fine in zip(res, res[1:]):
            assert fine.residual <= 0.35 * coarse.residual + fine.quad_error_estimate


def test_ward_residual_quad_route():
    model = RadialModel(2, 0.5)
    rep = ward_residual(model, 0.9 + 0.3j, 1e-2, cauchy="quad")
    ref = ward_residual(model, 0.9 + 0.3j, 1e-2)
    assert abs(rep.residual - ref.residual) < 1e-5
    assert rep.residual < 1e-3


def test_ward_residual_detects_wrong_density():
    # perturbing R by a non-Ward term leaves an O(1) residual
    model = RadialModel(1, 1.0)
    rep = ward_residual(model, 1.0, 1e-3)
    comp = rep.components
    assert abs(comp.dbar_C - 1.1 * comp.R + comp.laplace_V0 + comp.laplace_log_R) > 1e-2


def test_ward_preconditions():
    model = RadialModel(1, 1.0)
    with pytest.raises(PreconditionError):
        ward_residual(model, 0.0)
    with pytest.raises(PreconditionError):
        ward_residual(model, 1.0, -1.0)
    with pytest.raises(PreconditionError):
        ward_residual(model, 1.0, 1e-3, cauchy="other")
    with pytest.raises(PreconditionError):
        cauchy_transform_quad(model, 0.0)
