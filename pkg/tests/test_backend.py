"""Parity checks between the compiled kernels and their numpy twins."""

import numpy as np
import pytest

from ridkit import _pykernels, backend

compiled = pytest.importorskip("ridkit._ckernels", reason="compiled kernels not built")


@pytest.fixture
def arrays():
    rng = np.random.default_rng(0)
    return {
        "p": rng.standard_normal((40, 17)),
        "g": rng.standard_normal((40, 17)),
        "m": rng.standard_normal((40, 17)) * 0.1,
        "v": np.abs(rng.standard_normal((40, 17))) * 0.01,
    }


def test_backend_selected_and_listed():
    assert backend.BACKEND_NAME in ("compiled", "python")
    assert "python" in backend.available_backends()


def test_adam_update_bitwise_parity(arrays):
    # arithmetic-only kernel: both implementations must round identically
    for t in (1, 2, 50):
        out_c = compiled.adam_update(
            arrays["p"], arrays["g"], arrays["m"], arrays["v"],
            t, 1e-3, 0.9, 0.999, 1e-8, 1e-5,
        )
        out_p = _pykernels.adam_update(
            arrays["p"], arrays["g"], arrays["m"], arrays["v"],
            t, 1e-3, 0.9, 0.999, 1e-8, 1e-5,
        )
        for c, p in zip(out_c, out_p):
            np.testing.assert_array_equal(c, p)


def test_softclamp_bound(arrays):
    # the transcendental kernels delegate to the numpy twins by design
    assert compiled.softclamp is _pykernels.softclamp
    big = arrays["p"] * 100.0
    assert np.abs(_pykernels.softclamp(big, 2.0)).max() < 2.0


def test_coupling_kernels_invert(arrays):
    a, s, t = arrays["p"], arrays["g"], arrays["m"]
    fc, sc = compiled.coupling_fwd(a, s, t, 2.0)
    back, sb = compiled.coupling_inv(fc, s, t, 2.0)
    np.testing.assert_allclose(back, a, atol=1e-12)
    np.testing.assert_array_equal(sc, sb)


def test_row_sumsq_parity(arrays):
    c = compiled.row_sumsq_diff(arrays["p"], arrays["g"])
    p = _pykernels.row_sumsq_diff(arrays["p"], arrays["g"])
    assert c.shape == (40, 1)
    np.testing.assert_allclose(c, p, rtol=1e-12)


def test_backend_use_switches_and_restores():
    original = backend.BACKEND_NAME
    try:
        backend.use("python")
        assert backend.BACKEND_NAME == "python"
        r = backend.row_sumsq_diff(np.ones((2, 2)), np.zeros((2, 2)))
        np.testing.assert_array_equal(r, [[2.0], [2.0]])
        backend.use("compiled")
        assert backend.BACKEND_NAME == "compiled"
    finally:
        backend.use(original)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        backend.use("gpu")
