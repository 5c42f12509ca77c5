"""Kernel backend selection: compiled extension when available, numpy otherwise.

EARLYWARN_BACKEND=python forces the fallback; EARLYWARN_BACKEND=compiled
demands the extension and fails loudly if it is missing. Both backends expose
probs_values / ppo_grads / ppo_update with identical semantics.
"""

from __future__ import annotations

import os

from . import _kernels_py


def _select():
    choice = os.environ.get("EARLYWARN_BACKEND", "").strip().lower()
    if choice == "python":
        return _kernels_py
    try:
        from . import _kernels
    except ImportError:
        if choice == "compiled":
            raise ImportError(
                "EARLYWARN_BACKEND=compiled but the earlywarn.rl._kernels extension "
                "is not built; reinstall the package or unset the variable")
        return _kernels_py
    return _kernels


DEFAULT = _select()


def active_name() -> str:
    return DEFAULT.NAME


def available_backends() -> dict:
    """Name -> module for every importable backend (used by tests and the benchmark)."""
    backends = {_kernels_py.NAME: _kernels_py}
    try:
        from . import _kernels
        backends[_kernels.NAME] = _kernels
    except ImportError:
        pass
    return backends
