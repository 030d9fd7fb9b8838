"""Independent reference computations shared by several test modules."""

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline


def identity_c1_oracle(space, factor=10):
    """Jump integral on two_patch_identity by direct scipy evaluation."""
    sp1 = space.space.space_u
    kv, p, n = sp1.knots, sp1.degree, sp1.dim
    q = factor * (p + 1)
    x, w = leggauss(q)
    brk = np.linspace(0, 1, sp1.num_spans + 1)
    v = np.concatenate([(a + b) / 2 + (b - a) / 2 * x for a, b in zip(brk[:-1], brk[1:])])
    wv = np.concatenate([(b - a) / 2 * w for a, b in zip(brk[:-1], brk[1:])])

    def basis(t, nu):
        out = np.zeros((len(t), n))
        for i in range(n):
            c = np.zeros(n)
            c[i] = 1
            out[:, i] = BSpline(kv, c, p)(t, nu=nu)
        return out

    bv = basis(v, 0)
    # d/dx of N_i(u) N_j(v) at the interface; left patch at u = 1, right at u = 0
    du_l, du_r = basis(np.array([1.0]), 1)[0], basis(np.array([0.0]), 1)[0]
    rows = np.zeros((v.size, space.n_unconstrained))
    for k, du in ((0, du_l), (1, -du_r)):
        loc = (bv[:, :, None] * du[None, None, :]).reshape(v.size, -1)
        rows[:, space.patch_dofs(k)] = loc
    rows *= np.sqrt(wv)[:, None]
    full = rows.T @ rows
    n0 = space.N0.toarray()
    return (n0.T @ full @ n0)[np.ix_(space.coupled, space.coupled)]
