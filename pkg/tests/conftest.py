import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def central_difference(f, arrays, step=1e-5):
    """Central finite differences of scalar f() w.r.t. every entry of the
    given parameter arrays (mutated in place during probing)."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            h = step * max(1.0, abs(arr[ix]))
            old = arr[ix]
            arr[ix] = old + h
            fp = f()
            arr[ix] = old - h
            fm = f()
            arr[ix] = old
            g[ix] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor_frac=1e-6):
    """Worst relative disagreement, ignoring entries that vanish against
    the gradient scale (finite differences are pure noise there)."""
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    scale = max(np.max(np.abs(a)), np.max(np.abs(n)), 1e-300)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor_frac * scale)
    return float(np.max(np.abs(a - n) / denom))
