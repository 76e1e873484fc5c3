"""Pure-numpy reference versions of the compiled MPS kernels.

Every function here has the same signature and semantics as its
counterpart in ``_ckernels.pyx``.  The environment vectors passed around
are row-normalized: only ratios such as psi'/psi are ever needed, and those
are invariant to per-row scale.
"""
import numpy as np

_TINY = 1e-300


def _normalize_rows(mat):
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return mat / norms


def two_site_descent(left, right, s1, s2, weights, merged, lr, n_steps):
    """Gradient steps on the log-likelihood of a merged two-site tensor.

    ``merged`` (shape ``(Dl, 2, 2, Dr)``) is updated in place and renormalized
    after each step, so the model stays at unit norm with its canonical centre
    on this bond.
    """
    s1 = np.asarray(s1, dtype=np.intp)
    s2 = np.asarray(s2, dtype=np.intp)
    groups = [(s, t, np.flatnonzero((s1 == s) & (s2 == t))) for s in (0, 1) for t in (0, 1)]
    for _ in range(n_steps):
        grad = np.zeros_like(merged)
        for s, t, idx in groups:
            if idx.size == 0:
                continue
            lv = left[idx]
            rv = right[idx]
            psi = np.einsum("na,ab,nb->n", lv, merged[:, s, t, :], rv)
            tiny = np.abs(psi) < _TINY
            psi[tiny] = np.where(psi[tiny] >= 0, _TINY, -_TINY)
            coef = 2.0 * weights[idx] / psi
            grad[:, s, t, :] = np.einsum("n,na,nb->ab", coef, lv, rv)
        merged += lr * (grad - 2.0 * merged)
        norm = np.linalg.norm(merged)
        if norm > 0:
            merged /= norm


def advance_left(left, tensor, bits):
    out = np.einsum("na,anb->nb", left, tensor[:, np.asarray(bits, dtype=np.intp), :])
    return _normalize_rows(out)


def advance_right(right, tensor, bits):
    out = np.einsum("anb,nb->na", tensor[:, np.asarray(bits, dtype=np.intp), :], right)
    return _normalize_rows(out)


def sample_chain(tensors, uniforms):
    n, n_sites = uniforms.shape
    bits = np.empty((n, n_sites), dtype=np.uint8)
    vec = np.ones((n, 1))
    for k in range(n_sites):
        tensor = np.asarray(tensors[k], dtype=np.float64)
        w0 = vec @ tensor[:, 0, :]
        w1 = vec @ tensor[:, 1, :]
        p0 = np.maximum(np.einsum("nb,nb->n", w0, w0), 0.0)
        p1 = np.maximum(np.einsum("nb,nb->n", w1, w1), 0.0)
        take0 = uniforms[:, k] * (p0 + p1) < p0
        bits[:, k] = np.where(take0, 0, 1)
        chosen = np.where(take0[:, None], w0, w1)
        norm = np.sqrt(np.where(take0, p0, p1))
        norm[norm == 0] = 1.0
        vec = chosen / norm[:, None]
    return bits
