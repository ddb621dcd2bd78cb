"""Full-joint enumeration kernel for discrete BNs.

The numba path walks every joint state once; the numpy path multiplies
broadcast CPT tables. Set ``FIDENT_DISABLE_NUMBA=1`` to force numpy.
"""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np

__all__ = ["JointKernel", "USE_NUMBA", "numba_available"]


def _flag_off(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


try:
    from numba import njit

    numba_available = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_available = False

USE_NUMBA = numba_available and not _flag_off("FIDENT_DISABLE_NUMBA")


if numba_available:

    @njit(cache=True, nogil=True)
    def _joint_numba(cards, tab_flat, tab_off, par_flat, par_off, par_stride, bucket_off, bucket_fac, out):
        # factors are bucketed by their highest axis; pref[i] is the product of all
        # factors living on axes <= i, recomputed only from the lowest changed digit
        n = cards.shape[0]
        state = np.zeros(n, dtype=np.int64)
        pref = np.ones(n + 1, dtype=np.float64)
        start = 0
        for k in range(out.shape[0]):
            for i in range(start, n):
                p = pref[i]
                for b in range(bucket_off[i], bucket_off[i + 1]):
                    f = bucket_fac[b]
                    idx = tab_off[f] + state[f]
                    for j in range(par_off[f], par_off[f + 1]):
                        idx += state[par_flat[j]] * par_stride[j]
                    p *= tab_flat[idx]
                pref[i + 1] = p
            out[k] = pref[n]
            i = n - 1
            while i >= 0:
                state[i] += 1
                if state[i] < cards[i]:
                    break
                state[i] = 0
                i -= 1
            start = i if i >= 0 else 0


class JointKernel:
    """Precomputed layout for repeated joint enumeration over a fixed structure.

    ``parents[i]`` lists axis indices of node ``i``'s parents; node ``i``'s table has
    shape ``(*cards[parents[i]], cards[i])`` and is passed flattened (C order).
    """

    def __init__(self, cards: Sequence[int], parents: Sequence[Sequence[int]], use_numba: bool | None = None):
        self.cards = np.asarray(cards, dtype=np.int64)
        self.parents = [list(p) for p in parents]
        self.use_numba = USE_NUMBA if use_numba is None else (use_numba and numba_available)
        n = len(self.cards)
        self.shapes = [tuple(int(self.cards[q]) for q in ps) + (int(self.cards[i]),) for i, ps in enumerate(self.parents)]
        sizes = [int(np.prod(s)) for s in self.shapes]
        self.tab_off = np.zeros(n, dtype=np.int64)
        if n:
            self.tab_off[1:] = np.cumsum(sizes)[:-1]
        self.size = int(sum(sizes))
        self.par_off = np.zeros(n + 1, dtype=np.int64)
        flat, strides = [], []
        for i, ps in enumerate(self.parents):
            shape = self.shapes[i]
            st = np.cumprod((shape[1:] + (1,))[::-1])[::-1]
            flat.extend(ps)
            strides.extend(int(s) for s in st[: len(ps)])
            self.par_off[i + 1] = len(flat)
        self.par_flat = np.asarray(flat, dtype=np.int64)
        self.par_stride = np.asarray(strides, dtype=np.int64)
        self.n_states = int(np.prod(self.cards)) if n else 1
        home = [max([i] + ps) for i, ps in enumerate(self.parents)]
        fac = sorted(range(n), key=lambda i: (home[i], i))
        self.bucket_fac = np.asarray(fac, dtype=np.int64)
        self.bucket_off = np.searchsorted(np.asarray([home[i] for i in fac], dtype=np.int64), np.arange(n + 1)).astype(np.int64)

    def pack(self, tables: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(t, dtype=np.float64).ravel() for t in tables]) if tables else np.zeros(0)

    def __call__(self, tab_flat: np.ndarray) -> np.ndarray:
        if self.use_numba:
            out = np.empty(self.n_states, dtype=np.float64)
            _joint_numba(self.cards, np.ascontiguousarray(tab_flat, dtype=np.float64), self.tab_off,
                         self.par_flat, self.par_off, self.par_stride, self.bucket_off, self.bucket_fac, out)
            return out.reshape(tuple(self.cards))
        return self._joint_numpy(tab_flat)

    def _joint_numpy(self, tab_flat: np.ndarray) -> np.ndarray:
        n = len(self.cards)
        joint = np.ones(tuple(self.cards), dtype=np.float64)
        for i, ps in enumerate(self.parents):
            off = self.tab_off[i]
            size = int(np.prod(self.shapes[i]))
            t = np.asarray(tab_flat[off:off + size]).reshape(self.shapes[i])
            axes = list(ps) + [i]
            perm = np.argsort(axes)
            t = t.transpose(perm)
            shape = [1] * n
            for a in axes:
                shape[a] = int(self.cards[a])
            joint *= t.reshape(shape)
        return joint
