"""The compiled and pure-python kernel sets must be interchangeable:
same numbers bit for bit, selected by environment variable."""

import os
import subprocess
import sys

import numpy as np
import pytest

import drshapley
from drshapley import _backend

PROBE = r"""
import numpy as np
from drshapley import _backend, backend_name
from drshapley.estimator import estimate_shapley, uniform_permutation_estimate
from drshapley.exact import shapley_exact_subsets, exact_strata_moments
from drshapley.games import generate_load_follow_game, generate_reserve_game
from drshapley.policies import make_policy
from drshapley.rng import Stream, derive

import os
want = os.environ["DRSHAPLEY_BACKEND"]
assert backend_name() == want, (backend_name(), want)

out = []
st = Stream(7)
out.append([st.u64() for _ in range(5)])
out.append([Stream(3).double() for _ in range(3)])
out.append(derive(11, 1, 2, 3))

rg = generate_reserve_game(9, seed=17)
lf = generate_load_follow_game(6, seed=17)
out.append(rg.delta_x.tobytes().hex())
out.append(lf.target.tobytes().hex())

for game in (rg, lf):
    for pname in ("equal", "random", "sigmoid"):
        rep = estimate_shapley(game, make_policy(pname), 400, seed=23)
        out.append(rep.T.tobytes().hex())
        out.append(rep.var_T.tobytes().hex())
        out.append(rep.phi_hat.tobytes().hex())
        out.append(rep.counts.tobytes().hex())
    pe = uniform_permutation_estimate(game, 200, Stream(5))
    out.append(pe.phi.tobytes().hex())
    out.append(pe.variance.tobytes().hex())
    out.append(shapley_exact_subsets(game).phi.tobytes().hex())
    c, m, q = exact_strata_moments(game)
    out.append(m.tobytes().hex())
    out.append(q.tobytes().hex())

for chunk in out:
    print(chunk)
"""


def _run_probe(backend: str, extra_args=()):
    env = dict(os.environ, DRSHAPLEY_BACKEND=backend)
    res = subprocess.run([sys.executable, *extra_args, "-c", PROBE],
                         capture_output=True, text=True, env=env, timeout=600)
    assert res.returncode == 0, res.stderr
    return res.stdout


def test_backends_produce_identical_bytes():
    pure = _run_probe("numpy")
    jit = _run_probe("numba")
    assert pure == jit
    assert len(pure.splitlines()) > 30


def test_pure_path_is_overflow_warning_clean():
    # uint64 counter arithmetic wraps on purpose; the pure path must
    # suppress the overflow warning locally rather than spray it
    _run_probe("numpy", extra_args=("-W", "error::RuntimeWarning"))


def test_active_backend_exposes_kernels():
    K = _backend.active()
    for fn in ("rng_u64", "draw_subset", "select_stratum",
               "reserve_stratified_run", "loadfollow_stratified_run",
               "greedy_value", "reserve_value_table", "table_weighted_phi"):
        assert hasattr(K, fn)
    assert drshapley.backend_name() in ("numba", "numpy")


def test_invalid_backend_request_warns_and_falls_back():
    env = dict(os.environ, DRSHAPLEY_BACKEND="fortran")
    res = subprocess.run(
        [sys.executable, "-c",
         "import warnings; warnings.simplefilter('always');\n"
         "import drshapley; print(drshapley.backend_name())"],
        capture_output=True, text=True, env=env, timeout=600)
    assert res.returncode == 0, res.stderr
    assert res.stdout.strip() in ("numba", "numpy")
    assert "DRSHAPLEY_BACKEND" in res.stderr
