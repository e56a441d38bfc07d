"""Hot loops with a compiled implementation and a pure-Python fallback.

``match_embeddings`` (subgraph monomorphism enumeration) and ``louvain_move``
(one local-moving sweep of Louvain) come from the Cython extension when it is
built, otherwise from :mod:`pwrules._kernels.pykernels`. Set
``PWRULES_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import pykernels

BACKEND = "python"
match_embeddings = pykernels.match_embeddings
louvain_move = pykernels.louvain_move

if os.environ.get("PWRULES_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        match_embeddings = _ckernels.match_embeddings
        louvain_move = _ckernels.louvain_move
        BACKEND = "cython"

__all__ = ["BACKEND", "match_embeddings", "louvain_move", "pykernels"]
