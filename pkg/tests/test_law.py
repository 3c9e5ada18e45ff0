import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sepmix.errors import NotTransient, NotTrapped, SchemaError
from sepmix.law import (LawSpec, analytics, f_minimizer, kappa, lambda_root,
                        log_mgf, q_n)

# two-point(alpha=0.25, p=0.3): rho takes values 3 and 1/3, so
# F(u) = log(0.3 * 3^u + 0.7 * 3^-u) and the positive root solves
# 0.3 x^2 - x + 0.7 = 0 in x = 3^u, giving x = 7/3.
LAM = math.log(7.0 / 3.0) / math.log(3.0)       # 0.7712437491614222
U0 = LAM / 2.0                                  # minimiser, by symmetry of the quadratic
F_U0 = math.log(2.0 * math.sqrt(0.21))          # -0.0871766935723889
KAPPA = 0.4 * math.log(3.0)                     # (1 - 2p) log 3

REF = LawSpec.two_point(0.25, 0.3)


def test_two_point_closed_forms():
    assert abs(lambda_root(REF) - LAM) < 1e-9
    u0, f0 = f_minimizer(REF)
    assert abs(u0 - U0) < 1e-9
    assert abs(f0 - F_U0) < 1e-12
    assert abs(kappa(REF) - KAPPA) < 1e-9


def test_two_point_q_n():
    # ceil((3 u0 + 2) / |F(u0)| * log 1024) with the constants above
    assert q_n(REF, 1024) == 252
    assert q_n(REF, 2) >= 1
    with pytest.raises(ValueError):
        q_n(REF, 1)


def test_log_mgf_basics():
    assert log_mgf(REF, 0.0) == pytest.approx(0.0, abs=1e-15)
    # hand value: log(0.3 * 3 + 0.7 / 3)
    assert log_mgf(REF, 1.0) == pytest.approx(math.log(0.3 * 3 + 0.7 / 3),
                                              abs=1e-12)
    assert abs(log_mgf(REF, LAM)) < 1e-10


@given(st.floats(-2.0, 4.0), st.floats(-2.0, 4.0), st.floats(0.01, 0.99))
@settings(max_examples=60, deadline=None)
def test_log_mgf_convex(u1, u2, w):
    um = w * u1 + (1 - w) * u2
    chord = w * log_mgf(REF, u1) + (1 - w) * log_mgf(REF, u2)
    assert log_mgf(REF, um) <= chord + 1e-10


def test_balanced_law_not_transient():
    # p = 1/2 makes E[log rho] = 0: no rightward drift, no root
    with pytest.raises(NotTransient):
        lambda_root(LawSpec.two_point(0.2, 0.5))


def test_ballistic_law_infinite_root():
    law = LawSpec.finite_discrete(0.2, (0.6, 0.8), (0.5, 0.5))
    assert lambda_root(law) == math.inf
    with pytest.raises(NotTrapped):
        f_minimizer(law)
    with pytest.raises(NotTrapped):
        kappa(law)
    a = analytics(law)
    assert a.lam == math.inf and a.u0 is None and a.kappa is None


def test_finite_discrete_matches_two_point():
    alt = LawSpec.finite_discrete(0.25, (0.25, 0.75), (0.3, 0.7))
    for u in (-1.0, 0.5, LAM, 2.5):
        assert log_mgf(alt, u) == pytest.approx(log_mgf(REF, u), abs=1e-12)
    assert lambda_root(alt) == pytest.approx(lambda_root(REF), abs=1e-10)


def test_quantile_table_quadrature():
    # uniform omega on [0.3, 0.7]; reference values from adaptive
    # quadrature of rho^u over the interval
    law = LawSpec.quantile_table(0.3, (0.0, 1.0), (0.3, 0.7))
    assert log_mgf(law, 1.0) == pytest.approx(0.111760179923904, abs=1e-9)
    assert log_mgf(law, 1.5) == pytest.approx(0.245281848192584, abs=1e-9)
    assert log_mgf(law, 2.0) == pytest.approx(0.422266805722697, abs=1e-9)
    # symmetric support means zero drift, hence no positive root
    with pytest.raises(NotTransient):
        lambda_root(law)


def test_quantile_table_root():
    # uniform omega on [0.35, 0.7] drifts right; quadrature references
    law = LawSpec.quantile_table(0.3, (0.0, 1.0), (0.35, 0.7))
    assert law.mean_log_rho() == pytest.approx(-0.10452096279925, abs=1e-9)
    assert log_mgf(law, 1.0) == pytest.approx(-0.019773701511265, abs=1e-9)
    assert log_mgf(law, 2.0) == pytest.approx(0.114035240361495, abs=1e-9)
    assert lambda_root(law) == pytest.approx(1.245118602532894, abs=1e-7)


def test_round_trip_dict():
    for law in (REF,
                LawSpec.finite_discrete(0.2, (0.3, 0.5, 0.8), (0.2, 0.5, 0.3)),
                LawSpec.quantile_table(0.3, (0.0, 0.4, 1.0), (0.3, 0.5, 0.7))):
        assert LawSpec.from_dict(law.to_dict()) == law


def test_schema_errors_carry_paths():
    with pytest.raises(SchemaError) as e:
        LawSpec.two_point(0.6, 0.3)
    assert e.value.path == "law.alpha"
    with pytest.raises(SchemaError) as e:
        LawSpec.two_point(0.25, 1.4)
    assert e.value.path == "law.p"
    with pytest.raises(SchemaError) as e:
        LawSpec.finite_discrete(0.25, (0.3, 0.6), (0.6, 0.6))
    assert e.value.path == "law.weights"
    with pytest.raises(SchemaError) as e:
        LawSpec.finite_discrete(0.25, (0.1, 0.6), (0.5, 0.5))
    assert e.value.path == "law.values"
    with pytest.raises(SchemaError) as e:
        LawSpec.quantile_table(0.3, (0.0, 0.5), (0.3, 0.7, 0.7))
    assert e.value.path == "law.quantiles"
    with pytest.raises(SchemaError) as e:
        LawSpec(kind="triangular", alpha=0.25)
    assert e.value.path == "law.kind"


def test_analytics_bundle_consistent():
    a = analytics(REF)
    assert a.lam == pytest.approx(LAM, abs=1e-9)
    assert a.u0 == pytest.approx(U0, abs=1e-9)
    assert a.f_at_u0 == pytest.approx(F_U0, abs=1e-10)
    assert a.kappa == pytest.approx(KAPPA, abs=1e-9)
    assert a.mean_log_rho == pytest.approx(-0.4 * math.log(3.0), abs=1e-12)
