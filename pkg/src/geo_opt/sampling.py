"""Uniform sampling of fixed-weight bitstrings."""
import numpy as np


def random_selection(rng, n, k):
    """Partial Fisher-Yates: ``k`` distinct positions out of ``n``, as a key string."""
    pos = list(range(n))
    for i in range(k):
        j = i + int(rng.integers(n - i))
        pos[i], pos[j] = pos[j], pos[i]
    bits = ["0"] * n
    for i in pos[:k]:
        bits[i] = "1"
    return "".join(bits)


def uniform_cardinality_selections(rng, n, k, count, distinct=False):
    if not distinct:
        return [random_selection(rng, n, k) for _ in range(count)]
    seen, out = set(), []
    while len(out) < count:
        s = random_selection(rng, n, k)
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


def unique_rows(rows):
    """Distinct binary rows (lexicographic order) and their counts."""
    rows = np.asarray(rows, dtype=np.uint8)
    n = rows.shape[1]
    packed = np.ascontiguousarray(np.packbits(rows, axis=1))
    keys = packed.view(np.dtype((np.void, packed.shape[1]))).ravel()
    _, first, counts = np.unique(keys, return_index=True, return_counts=True)
    return rows[first].reshape(-1, n), counts


def rows_to_keys(rows):
    rows = np.asarray(rows, dtype=np.uint8)
    if rows.size == 0:
        return []
    n = rows.shape[1]
    text = (rows + ord("0")).tobytes().decode("ascii")
    return [text[i:i + n] for i in range(0, len(text), n)]


def keys_to_rows(keys):
    n = len(keys[0])
    buf = np.frombuffer("".join(keys).encode("ascii"), dtype=np.uint8)
    return (buf - ord("0")).reshape(len(keys), n)
