"""The compiled kernels must agree bit-for-bit with the numpy fallback."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from forgetaudit import _backend

pytestmark = pytest.mark.skipif(
    "cython" not in _backend.available(), reason="compiled extension not built"
)

py = _backend.get("python")


@pytest.fixture(scope="module")
def cy():
    return _backend.get("cython")


def test_default_backend_is_compiled():
    if os.environ.get("FORGETAUDIT_PURE_PYTHON"):
        pytest.skip("fallback forced by environment")
    assert _backend.BACKEND == "cython"


def test_env_var_forces_fallback():
    code = "from forgetaudit import _backend; print(_backend.BACKEND)"
    env = {**os.environ, "FORGETAUDIT_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend_name():
    with pytest.raises(ValueError):
        _backend.get("fortran")


sorted_unit = arrays(
    np.float64, st.integers(1, 60), elements=st.sampled_from([0.0, 0.1, 0.5, 0.9, 1.0]) | st.floats(0, 1)
).map(np.sort)


@given(sorted_unit)
def test_ecdf_identical(cy, x):
    a = py.ecdf_from_sorted(x)
    b = cy.ecdf_from_sorted(x)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


@given(sorted_unit, sorted_unit)
def test_ks_identical(cy, x, y):
    ex, ey = py.ecdf_from_sorted(x), py.ecdf_from_sorted(y)
    d_py, loc_py = py.ks_sup(*ex, *ey)
    d_cy, loc_cy = cy.ks_sup(*ex, *ey)
    assert d_py == d_cy
    assert loc_py == loc_cy


def test_gather_identical(cy):
    rng = np.random.default_rng(0)
    t = rng.random((500, 7))
    y = rng.integers(0, 7, 500)
    np.testing.assert_array_equal(py.gather_true_class(t, y), cy.gather_true_class(t, y))


@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_adam_identical(cy, seed, steps):
    rng = np.random.default_rng(seed)
    n = 37
    state = {name: [rng.standard_normal(n), np.zeros(n), np.zeros(n)] for name in ("py", "cy")}
    state["cy"] = [a.copy() for a in state["py"]]
    for k in range(1, steps + 1):
        g = rng.standard_normal(n) * 10.0 ** rng.integers(-6, 3)
        bc1, bc2 = 1 - 0.5**k, 1 - 0.999**k
        py.adam_update(*state["py"][:1], g, *state["py"][1:], 1e-3, 0.5, 0.999, 1e-8, bc1, bc2)
        cy.adam_update(*state["cy"][:1], g, *state["cy"][1:], 1e-3, 0.5, 0.999, 1e-8, bc1, bc2)
    for a, b in zip(state["py"], state["cy"]):
        np.testing.assert_array_equal(a, b)


def test_end_to_end_audit_identical_across_backends():
    code = (
        "from forgetaudit import audit as A, data as D, model as M\n"
        "dom = D.DomainSpec.generate(3, 4, 1.0, 1.0, seed=2)\n"
        "q = D.sample_domain(dom.provider(2.0, seed=1), 120, seed=3)\n"
        "design = M.ClassifierConfig(4, 3, 5)\n"
        "t = M.train(design.with_seed(8), D.sample_domain(dom, 300, seed=4))\n"
        "r = A.run_audit(A.AuditInput(t, q, dom, design, M.TrainConfig(), 300, seed=6))\n"
        "print(t.weights.tobytes().hex()); print(repr(r.rho)); print(r.provenance['models'])\n"
    )
    outs = []
    for flag in ("0", "1"):
        env = {**os.environ, "FORGETAUDIT_PURE_PYTHON": flag}
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        outs.append(res.stdout)
    assert outs[0] == outs[1]
