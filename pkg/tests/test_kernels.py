import os
import subprocess
import sys

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from fident._kernels import JointKernel, numba_available
from fident.bn import random_parameterization

from strategies import dags


@settings(max_examples=60, deadline=None)
@given(dags(min_nodes=1, max_nodes=8), st.integers(0, 10**6))
def test_numba_and_numpy_kernels_agree(g, seed):
    m = random_parameterization(g, seed=seed, cards={n: 2 + (len(n) + i) % 2 for i, n in enumerate(g.sorted_nodes())})
    nodes = m.nodes
    idx = {n: i for i, n in enumerate(nodes)}
    cards = [m.cards[n] for n in nodes]
    parents = [[idx[p] for p in m.graph.parents(n)] for n in nodes]
    a = JointKernel(cards, parents, use_numba=False)
    flat = a.pack([m.cpts[n].table for n in nodes])
    ref = a(flat)
    assert ref.shape == tuple(cards)
    assert abs(ref.sum() - 1.0) < 1e-12
    if numba_available:
        b = JointKernel(cards, parents, use_numba=True)
        assert np.allclose(b(flat), ref, rtol=0, atol=1e-15)


def test_env_flag_disables_numba():
    code = "from fident._kernels import USE_NUMBA; print(USE_NUMBA)"
    env = dict(os.environ, FIDENT_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
