"""Matrix-product-state Born machine over binary strings.

The model stores ``N`` real rank-3 tensors of shape ``(D_left, 2, D_right)``.
The amplitude of a bitstring is the product of the selected matrices and its
probability is ``psi(x)**2 / Z``.  Training follows the two-site DMRG-style
scheme: merge neighbouring tensors, take gradient steps on the negative
log-likelihood, split again with a truncated SVD and move on.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InvalidArgument, OutOfSupportError
from .sampling import unique_rows

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TrainingWarning(UserWarning):
    """Training finished with a higher NLL than it started with."""


@dataclass
class TrainConfig:
    max_bond_dim: int = 10
    svd_cutoff: float = 1e-7
    learning_rate: float = 0.05
    n_sweeps: int = 10
    grad_steps_per_bond: int = 5
    rng_seed: int = 0

    def validate(self):
        lr = self.learning_rate
        if not (isinstance(lr, (int, float)) and math.isfinite(lr) and lr > 0):
            raise InvalidArgument(f"learning_rate must be a positive finite number, got {lr!r}")
        if self.max_bond_dim < 1:
            raise InvalidArgument("max_bond_dim must be >= 1")
        if not 0 <= self.svd_cutoff < 1:
            raise InvalidArgument("svd_cutoff must lie in [0, 1)")
        if self.n_sweeps < 1 or self.grad_steps_per_bond < 1:
            raise InvalidArgument("n_sweeps and grad_steps_per_bond must be >= 1")
        return self


@dataclass
class BitstringDataset:
    """A multiset of equal-length binary rows (duplicates carry weight)."""

    n_vars: int
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.uint8)
        if rows.ndim == 1:
            rows = rows.reshape(1, -1)
        if rows.shape[0] == 0:
            raise InvalidArgument("dataset must contain at least one row")
        if rows.shape[1] != self.n_vars:
            raise InvalidArgument(f"rows have length {rows.shape[1]}, expected {self.n_vars}")
        if np.any(rows > 1):
            raise InvalidArgument("rows must be binary")
        self.rows = rows

    @classmethod
    def from_strings(cls, strings):
        strings = list(strings)
        if not strings:
            raise InvalidArgument("dataset must contain at least one row")
        rows = np.array([[int(c) for c in s] for s in strings], dtype=np.uint8)
        return cls(rows.shape[1], rows)

    def __len__(self):
        return self.rows.shape[0]

    def unique_weighted(self):
        """Distinct rows and their empirical frequencies (summing to 1)."""
        uniq, counts = unique_rows(self.rows)
        return uniq, counts / counts.sum()


@dataclass
class MpsModel:
    tensors: list
    canonical_center: int | None = None
    history: list = field(default_factory=list, compare=False)

    @property
    def n_vars(self):
        return len(self.tensors)

    @property
    def bond_dims(self):
        return [self.tensors[0].shape[0]] + [t.shape[2] for t in self.tensors]

    def copy(self):
        return MpsModel([t.copy() for t in self.tensors], self.canonical_center, list(self.history))

    def validate(self):
        if not self.tensors:
            raise InvalidArgument("an MPS needs at least one site")
        dims = self.bond_dims
        if dims[0] != 1 or dims[-1] != 1:
            raise InvalidArgument("boundary bond dimensions must be 1")
        for k, t in enumerate(self.tensors):
            if t.ndim != 3 or t.shape[1] != 2:
                raise InvalidArgument(f"site {k} must have shape (Dl, 2, Dr), got {t.shape}")
            if k and t.shape[0] != self.tensors[k - 1].shape[2]:
                raise InvalidArgument(f"bond mismatch between sites {k - 1} and {k}")
        return self


def _as_bits(x, n_vars):
    if isinstance(x, str):
        x = [int(c) for c in x]
    arr = np.asarray(x, dtype=np.uint8)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.shape[1] != n_vars:
        raise InvalidArgument(f"bitstring length {arr.shape[1]} does not match n_vars={n_vars}")
    return arr


def _qr_positive(mat):
    q, r = np.linalg.qr(mat)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, r * signs[:, None]


def init_mps(n_vars, init_bond=2, seed=0):
    """Random near-uniform MPS with entries in [0.9, 1.1], normalized to Z = 1."""
    if n_vars < 1:
        raise InvalidArgument("n_vars must be >= 1")
    if init_bond < 1:
        raise InvalidArgument("init_bond must be >= 1")
    rng = np.random.default_rng(seed)
    dims = [min(init_bond, 2 ** min(k, n_vars - k)) for k in range(n_vars + 1)]
    tensors = [rng.uniform(0.9, 1.1, size=(dims[k], 2, dims[k + 1])) for k in range(n_vars)]
    return canonicalize(MpsModel(tensors), 0)


def canonicalize(model, center=0):
    """Mixed-canonical copy of ``model`` with unit norm and the given centre.

    Sites left of ``center`` become left-orthonormal, sites right of it
    right-orthonormal.  QR factors are sign-fixed, which makes the operation
    idempotent.
    """
    n = model.n_vars
    if not 0 <= center < n:
        raise InvalidArgument(f"center {center} out of range for {n} sites")
    ts = [np.array(t, dtype=np.float64) for t in model.tensors]
    for k in range(center):
        dl, _, dr = ts[k].shape
        q, r = _qr_positive(ts[k].reshape(dl * 2, dr))
        ts[k] = q.reshape(dl, 2, q.shape[1])
        ts[k + 1] = np.einsum("ab,bsc->asc", r, ts[k + 1])
    for k in range(n - 1, center, -1):
        dl, _, dr = ts[k].shape
        q, r = _qr_positive(ts[k].reshape(dl, 2 * dr).T)
        ts[k] = q.T.reshape(q.shape[1], 2, dr)
        ts[k - 1] = np.einsum("asb,cb->asc", ts[k - 1], r)
    norm = np.linalg.norm(ts[center])
    if not norm > 0:
        raise InvalidArgument("model has zero norm")
    ts[center] /= norm
    return MpsModel([np.ascontiguousarray(t) for t in ts], center, list(model.history))


def log_norm(model):
    """ln Z, computed with per-site rescaling of the transfer environment."""
    env = np.ones((1, 1))
    acc = 0.0
    for t in model.tensors:
        env = np.einsum("ab,asc,bsd->cd", env, t, t)
        scale = np.abs(env).max()
        if scale == 0:
            return -math.inf
        env /= scale
        acc += math.log(scale)
    return acc + math.log(env[0, 0])


def log_amplitudes(model, bits):
    """ln |psi(x)| for each row of ``bits`` (``-inf`` where psi vanishes)."""
    bits = _as_bits(bits, model.n_vars).astype(np.intp)
    n = bits.shape[0]
    vec = np.ones((n, 1))
    acc = np.zeros(n)
    for k, t in enumerate(model.tensors):
        one = bits[:, k] == 1
        nxt = vec @ t[:, 0, :]
        if one.any():
            nxt[one] = vec[one] @ t[:, 1, :]
        vec = nxt
        scale = np.abs(vec).max(axis=1)
        dead = scale == 0
        scale[dead] = 1.0
        vec /= scale[:, None]
        acc += np.log(scale)
        acc[dead] = -np.inf
    with np.errstate(divide="ignore"):
        return acc + np.log(np.abs(vec[:, 0]))


def log_probabilities(model, bits):
    return 2.0 * log_amplitudes(model, bits) - log_norm(model)


def born_probabilities(model, bits):
    return np.exp(log_probabilities(model, bits))


def born_probability(model, x):
    """Born probability ``|psi(x)|^2 / Z`` of a single bitstring."""
    return float(born_probabilities(model, _as_bits(x, model.n_vars))[0])


def negative_log_likelihood(model, data):
    """Average ``-ln P(row)`` over the dataset rows.

    Raises :class:`OutOfSupportError` naming the first row whose probability
    is exactly zero.
    """
    if data.n_vars != model.n_vars:
        raise InvalidArgument(f"dataset has {data.n_vars} variables, model has {model.n_vars}")
    return _weighted_nll(model, *data.unique_weighted())


def _weighted_nll(model, uniq, freq):
    logp = log_probabilities(model, uniq)
    bad = np.flatnonzero(~np.isfinite(logp))
    if bad.size:
        raise OutOfSupportError("".join(map(str, uniq[bad[0]])))
    return float(max(-(freq @ logp), 0.0))


def split_merged(merged, max_bond_dim, svd_cutoff, move_right):
    """Split a two-site tensor by truncated SVD.

    Keeps the smallest rank whose discarded squared weight fraction is at
    most ``svd_cutoff`` (capped at ``max_bond_dim``).  The singular values are
    absorbed into the right tensor when ``move_right`` and into the left one
    otherwise, so the canonical centre ends on that side.
    """
    dl, _, _, dr = merged.shape
    u, s, vt = np.linalg.svd(merged.reshape(dl * 2, 2 * dr), full_matrices=False)
    weight = s**2
    total = weight.sum()
    if total > 0:
        # tail[r] = discarded weight when keeping r singular values
        tail = np.concatenate([np.cumsum(weight[::-1])[::-1], [0.0]]) / total
        rank = int(np.flatnonzero(tail <= svd_cutoff)[0])
    else:
        rank = 1
    rank = max(1, min(rank, max_bond_dim))
    u, s, vt = u[:, :rank], s[:rank], vt[:rank]
    norm = np.linalg.norm(s)
    if norm > 0:
        s = s / norm
    if move_right:
        a = u.reshape(dl, 2, rank)
        b = (s[:, None] * vt).reshape(rank, 2, dr)
    else:
        a = (u * s).reshape(dl, 2, rank)
        b = vt.reshape(rank, 2, dr)
    return np.ascontiguousarray(a), np.ascontiguousarray(b)


def merge_pair(model, bond):
    a, b = model.tensors[bond], model.tensors[bond + 1]
    return np.ascontiguousarray(np.einsum("asb,btc->astc", a, b))


def _environments(model, bits, bond):
    """Row-normalized left environments at ``bond`` and right ones past ``bond+1``."""
    n = bits.shape[0]
    left = np.ones((n, 1))
    ts = [np.ascontiguousarray(t, dtype=np.float64) for t in model.tensors]
    for k in range(bond):
        left = kernels.advance_left(left, ts[k], np.ascontiguousarray(bits[:, k]))
    right = np.ones((n, 1))
    for k in range(model.n_vars - 1, bond + 1, -1):
        right = kernels.advance_right(right, ts[k], np.ascontiguousarray(bits[:, k]))
    return left, right


def two_site_nll_gradient(model, data, bond):
    """Merged tensor at ``bond`` and the NLL gradient with respect to it.

    Works for any gauge: the norm term uses explicit transfer environments,
    so the model does not need to be canonical.
    """
    if not 0 <= bond < model.n_vars - 1:
        raise InvalidArgument(f"bond {bond} out of range")
    uniq, freq = data.unique_weighted()
    bits = np.ascontiguousarray(uniq, dtype=np.int8)
    left, right = _environments(model, bits, bond)
    merged = merge_pair(model, bond)
    s1, s2 = bits[:, bond].astype(np.intp), bits[:, bond + 1].astype(np.intp)
    psi = np.einsum("na,nab,nb->n", left, merged[:, s1, s2, :].transpose(1, 0, 2), right)
    data_term = np.zeros_like(merged)
    np.add.at(data_term, (slice(None), s1, s2, slice(None)),
              np.einsum("n,na,nb->nab", freq / psi, left, right).transpose(1, 0, 2))
    env_l = np.ones((1, 1))
    for t in model.tensors[:bond]:
        env_l = np.einsum("ab,asc,bsd->cd", env_l, t, t)
    env_r = np.ones((1, 1))
    for t in model.tensors[:bond + 1:-1]:
        env_r = np.einsum("cd,asc,bsd->ab", env_r, t, t)
    z_grad = np.einsum("ab,bstd,cd->astc", env_l, merged, env_r)
    z = np.einsum("astc,astc->", z_grad, merged)
    return merged, 2.0 * z_grad / z - 2.0 * data_term


def _train_single_site(model, data):
    counts = np.bincount(data.rows[:, 0], minlength=2).astype(float)
    amp = np.sqrt(counts / counts.sum())
    return MpsModel([amp.reshape(1, 2, 1)], 0, list(model.history))


def train(model, data, cfg=None):
    """Fit ``model`` to ``data`` by two-site sweeps; returns a new model.

    Each sweep visits every bond left-to-right and then right-to-left.  At a
    bond the two tensors are merged, ``cfg.grad_steps_per_bond`` gradient
    steps are taken on the NLL and the result is split again by truncated
    SVD.  The returned model is canonical with its centre at site 0.  If the
    final NLL exceeds the initial one a :class:`TrainingWarning` is issued.
    """
    cfg = (cfg or TrainConfig()).validate()
    if data.n_vars != model.n_vars:
        raise InvalidArgument(f"dataset has {data.n_vars} variables, model has {model.n_vars}")
    model.validate()
    uniq, freq = data.unique_weighted()
    try:
        nll_before = _weighted_nll(model, uniq, freq)
    except OutOfSupportError:
        nll_before = math.inf
    n = model.n_vars
    if n == 1:
        out = _train_single_site(model, data)
    else:
        out = canonicalize(model, 0)
        bits = np.ascontiguousarray(uniq, dtype=np.int8)
        cols = [np.ascontiguousarray(bits[:, k]) for k in range(n)]
        rows = bits.shape[0]
        ts = out.tensors
        left = [np.ones((rows, 1))] + [None] * n
        right = [None] * (n + 1)
        right[n] = np.ones((rows, 1))
        for k in range(n - 1, 0, -1):
            right[k] = kernels.advance_right(right[k + 1], ts[k], cols[k])

        def update(k, move_right):
            merged = np.ascontiguousarray(np.einsum("asb,btc->astc", ts[k], ts[k + 1]))
            kernels.two_site_descent(left[k], right[k + 2], cols[k], cols[k + 1], freq,
                                     merged, cfg.learning_rate, cfg.grad_steps_per_bond)
            ts[k], ts[k + 1] = split_merged(merged, cfg.max_bond_dim, cfg.svd_cutoff, move_right)

        for _ in range(cfg.n_sweeps):
            for k in range(n - 1):
                update(k, True)
                left[k + 1] = kernels.advance_left(left[k], ts[k], cols[k])
            for k in range(n - 2, -1, -1):
                update(k, False)
                right[k + 1] = kernels.advance_right(right[k + 2], ts[k + 1], cols[k + 1])
        out.canonical_center = 0
    try:
        nll_after = _weighted_nll(out, uniq, freq)
    except OutOfSupportError:
        nll_after = math.inf
    record = {"nll_before": nll_before, "nll_after": nll_after, "bond_dims": out.bond_dims}
    if nll_after > nll_before + 1e-6:
        msg = f"training increased NLL from {nll_before:.6g} to {nll_after:.6g}"
        record["warning"] = msg
        warnings.warn(msg, TrainingWarning, stacklevel=2)
    log.debug("trained MPS: %s", record)
    out.history.append(record)
    return out


def sample(model, n_samples, seed=0):
    """Exact i.i.d. samples, drawn site by site from the conditionals.

    Returns a ``(n_samples, N)`` uint8 array.
    """
    if n_samples < 1:
        raise InvalidArgument("n_samples must be >= 1")
    if model.canonical_center != 0:
        model = canonicalize(model, 0)
    rng = np.random.default_rng(seed)
    uniforms = rng.random((n_samples, model.n_vars))
    tensors = [np.ascontiguousarray(t) for t in model.tensors]
    return kernels.sample_chain(tensors, uniforms)


def to_strings(bits):
    return ["".join(map(str, row)) for row in np.asarray(bits, dtype=np.uint8)]


def save_model(model, path, train_cfg=None):
    """Write ``model`` to ``path``; ``.json`` gives JSON, anything else ``.npz``."""
    path = Path(path)
    cfg = asdict(train_cfg) if train_cfg is not None else None
    if path.suffix == ".json":
        doc = {
            "format": "geo_opt.mps",
            "version": FORMAT_VERSION,
            "n_vars": model.n_vars,
            "bond_dims": model.bond_dims,
            "canonical_center": model.canonical_center,
            "tensors": [t.ravel(order="C").tolist() for t in model.tensors],
            "train_config": cfg,
        }
        path.write_text(json.dumps(doc))
    else:
        header = json.dumps({"version": FORMAT_VERSION, "n_vars": model.n_vars,
                             "canonical_center": model.canonical_center,
                             "train_config": cfg})
        with open(path, "wb") as fh:
            np.savez(fh, header=np.array(header),
                     **{f"site_{k:05d}": t for k, t in enumerate(model.tensors)})


def load_model(path):
    """Read a model written by :func:`save_model`; returns ``(model, train_cfg)``."""
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        if doc.get("version") != FORMAT_VERSION:
            raise InvalidArgument(f"unsupported model format version {doc.get('version')}")
        dims = doc["bond_dims"]
        tensors = [np.array(flat, dtype=np.float64).reshape(dims[k], 2, dims[k + 1])
                   for k, flat in enumerate(doc["tensors"])]
        header = doc
    else:
        with np.load(path) as z:
            header = json.loads(str(z["header"]))
            if header.get("version") != FORMAT_VERSION:
                raise InvalidArgument(f"unsupported model format version {header.get('version')}")
            tensors = [z[f"site_{k:05d}"] for k in range(header["n_vars"])]
    cfg = TrainConfig(**header["train_config"]) if header.get("train_config") else None
    return MpsModel(tensors, header.get("canonical_center")).validate(), cfg
