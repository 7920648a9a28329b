import os
import subprocess
import sys

import numpy as np
import pytest

from stopped_euler import _kernels_py, kernels
from stopped_euler.model import ModelSpec
from stopped_euler.spectral import cosine_moments

ext = pytest.importorskip("stopped_euler._kernels", reason="compiled extension not built")


def inputs(rng, S, n, L):
    c = rng.standard_normal((S, n)) / np.arange(1, n + 1)
    return np.ascontiguousarray(cosine_moments(c, L + n)), ModelSpec().noise_weights(L)


def brute(g, r, n):
    L = r.size
    out = np.zeros(g.shape[0])
    for l in range(1, L + 1):
        for k in range(1, n + 1):
            out += r[l - 1] * (g[:, abs(l - k)] - g[:, l + k]) ** 2
    return out


@pytest.mark.parametrize("n", [1, 3, 16])
def test_backends_agree_with_brute_force(rng, n):
    g, r = inputs(rng, 5, n, 4 * n)
    want = brute(g, r, n)
    np.testing.assert_allclose(ext.hs_weighted_sums(g, r, n, 1), want, rtol=1e-13)
    np.testing.assert_allclose(_kernels_py.hs_weighted_sums(g, r, n, 1), want, rtol=1e-13)


def test_threads_do_not_change_results(rng):
    g, r = inputs(rng, 33, 32, 128)
    one = ext.hs_weighted_sums(g, r, 32, 1)
    assert np.array_equal(one, ext.hs_weighted_sums(g, r, 32, 4))
    kernels.set_threads(2)
    try:
        assert np.array_equal(kernels.hs_weighted_sums(g, r, 32), one) or kernels.BACKEND == "python"
    finally:
        kernels.set_threads(1)


def test_short_moment_table_rejected(rng):
    g, r = inputs(rng, 2, 4, 16)
    with pytest.raises(ValueError):
        ext.hs_weighted_sums(g[:, :10], r, 4, 1)


def test_pure_python_fallback_selected_by_env():
    code = ("from stopped_euler import kernels;from stopped_euler.model import ModelSpec;"
            "from stopped_euler.scheme import SchemeParams, run_batch;"
            "from stopped_euler.noise import increment_tables;import sys;"
            "r=run_batch(SchemeParams(16,8,8),ModelSpec(sigma=0.8),increment_tables([1,2],16,8,1.0));"
            "sys.stdout.write(kernels.BACKEND+' '+' '.join(repr(float(x)) for x in r.states[:,-1].ravel()))")
    outs = {}
    for pure in ("0", "1"):
        env = dict(os.environ, STOPPED_EULER_PURE=pure)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        name, *vals = out.stdout.split()
        outs[name] = np.array([float(v) for v in vals])
    assert set(outs) == {"cython", "python"}
    np.testing.assert_allclose(outs["cython"], outs["python"], rtol=1e-12, atol=1e-15)
