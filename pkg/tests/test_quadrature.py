"""Tests for quadrature module."""

import math

import numpy as np
import pytest

from blmart.quadrature import (
    DIVERGENT,
    FINITE,
    UNDETERMINED,
    CellSampler,
    IntegralResult,
    _invert_trapezoid,
    combine,
    fsum_number,
    integrate_half_line,
    integrate_interval,
)


def test_integrate_interval_polynomial() -> None:
    """Test a smooth integrand on a bounded interval."""
    res = integrate_interval(lambda s: s * s, 0.0, 1.0)
    assert res.finite
    assert res.value == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_integrate_interval_empty_range() -> None:
    """Test an empty interval integrates to zero."""
    assert integrate_interval(lambda s: 1.0, 2.0, 1.0).value == 0.0


def test_integrate_interval_with_kink() -> None:
    """Test splitting at a kink point."""
    res = integrate_interval(lambda s: abs(s - 0.3), 0.0, 1.0, points=[0.3])
    assert res.value == pytest.approx(0.5 * (0.3 ** 2 + 0.7 ** 2), abs=1e-12)


def test_half_line_exponential() -> None:
    """Test ∫_{-inf}^0 e^s ds = 1."""
    res = integrate_half_line(math.exp, 0.0)
    assert res.finite
    assert res.value == pytest.approx(1.0, abs=1e-10)


def test_half_line_complex() -> None:
    """Test ∫_{-inf}^0 e^{(1+i)s} ds = 1/(1+i)."""
    res = integrate_half_line(lambda s: complex(math.exp(s) * math.cos(s),
                                                math.exp(s) * math.sin(s)),
                              0.0, complex_valued=True)
    assert isinstance(res.value, complex)
    assert res.value.real == pytest.approx(0.5, abs=1e-10)
    assert res.value.imag == pytest.approx(-0.5, abs=1e-10)


def test_half_line_zero_near_start() -> None:
    """Test an integrand that only switches on deep to the left."""
    res = integrate_half_line(lambda s: math.exp(s + 5.0) if s < -5.0 else 0.0, 0.0,
                              points=[-5.0])
    assert res.value == pytest.approx(1.0, abs=1e-9)


def test_half_line_constant_diverges() -> None:
    """Test a non-decaying integrand is reported divergent."""
    res = integrate_half_line(lambda s: 1.0, 0.0, span=64.0)
    assert res.status == DIVERGENT
    assert res.divergent
    assert math.isinf(res.value)


def test_half_line_growing_diverges() -> None:
    """Test an integrand growing to the left is not reported finite."""
    res = integrate_half_line(lambda s: math.exp(-0.5 * s), 0.0, span=64.0)
    assert not res.finite


def test_combine_worst_status_wins() -> None:
    """Test combining partial results keeps the worst status."""
    a = IntegralResult(1.0)
    b = IntegralResult(math.nan, UNDETERMINED, "quad")
    c = IntegralResult(math.inf, DIVERGENT, "quad")
    assert combine([a, a]).status == FINITE
    assert combine([a, a]).value == 2.0
    assert combine([a, b]).status == UNDETERMINED
    assert combine([a, b, c]).status == DIVERGENT


def test_fsum_number_mixed() -> None:
    """Test exact summation with complex terms."""
    assert fsum_number([1e16, 1.0, -1e16]) == 1.0
    assert fsum_number([1.0, 1j]) == complex(1.0, 1.0)


def test_to_dict_complex() -> None:
    """Test complex values serialize as [re, im]."""
    d = IntegralResult(complex(1.0, -2.0)).to_dict()
    assert d["value"] == [1.0, -2.0]
    assert d["status"] == FINITE


def test_invert_trapezoid() -> None:
    """Test the in-cell inversion."""
    assert _invert_trapezoid(1.0, 1.0, 0.25) == pytest.approx(0.25)
    # weight 2x on [0, 1]: CDF x^2
    assert _invert_trapezoid(0.0, 2.0, 0.25) == pytest.approx(0.5)


def test_cell_sampler_linear_weight() -> None:
    """Test draws from the density 2x on [0, 1]."""
    sampler = CellSampler(lambda s: 2.0 * s, [0.0, 1.0], cells=256)
    assert sampler.total == pytest.approx(1.0, abs=1e-12)
    rng = np.random.default_rng(7)
    draws = np.array([sampler.draw(rng) for _ in range(20000)])
    assert draws.min() >= 0.0 and draws.max() <= 1.0
    # mean 2/3, sd 0.2357
    assert abs(draws.mean() - 2.0 / 3.0) < 4 * 0.2357 / math.sqrt(draws.size)


def test_cell_sampler_respects_edges() -> None:
    """Test a step weight is sampled on its support only."""
    sampler = CellSampler(lambda s: 1.0 if s > 0.5 else 0.0, [0.0, 0.5, 1.0], cells=64)
    rng = np.random.default_rng(3)
    assert all(sampler.draw(rng) >= 0.5 for _ in range(2000))


def test_cell_sampler_needs_interval() -> None:
    """Test a degenerate interval is rejected."""
    with pytest.raises(ValueError, match="two distinct edges"):
        CellSampler(lambda s: 1.0, [1.0, 1.0])
