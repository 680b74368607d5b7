import numpy as np
import pytest


def finite_difference(f, arrays, h=1e-5):
    """Central finite differences of the scalar ``f()`` wrt each array.

    ``f`` must re-evaluate from the current contents of ``arrays``; entries
    are perturbed in place and restored. Independent of the tape machinery on
    purpose: this is the oracle the analytic gradients are checked against.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gf = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def rel_err(a, b):
    """Max elementwise error relative to magnitude, floored at absolute."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


@pytest.fixture
def fd_oracle():
    return finite_difference
