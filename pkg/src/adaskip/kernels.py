"""Kernel backend selection.

Two interchangeable backends implement the network program:

* ``cython`` — the compiled extension (adaskip._kernels), used when it was
  built and importable;
* ``python`` — the numpy fallback (adaskip._kernels_np), always available.

Selection happens at import time and can be forced with the ADASKIP_KERNELS
environment variable ("auto", "cython" or "python") or at runtime with
use_backend().  The active backend is part of a run's identity: results are
bit-reproducible per backend, not across backends.
"""

from __future__ import annotations

import os

from .errors import ValidationError
from . import _kernels_np

_active = None


def available_backends() -> list[str]:
    names = []
    try:
        from . import _kernels  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    names.append("python")
    return names


def use_backend(name: str):
    """Activate a backend by name; "auto" prefers the compiled one."""
    global _active
    if name == "auto":
        name = available_backends()[0]
    if name == "python":
        _active = _kernels_np
    elif name == "cython":
        try:
            from . import _kernels
        except ImportError as exc:
            raise ValidationError(
                "the compiled kernel backend is not available in this install"
            ) from exc
        _active = _kernels
    else:
        raise ValidationError(f"unknown kernel backend {name!r}")
    return _active


def backend_name() -> str:
    return _active.NAME


def forward(program, params, x, mask):
    return _active.forward(program, params, x, mask)


def loss_grad(program, params, x, labels, mask):
    return _active.loss_grad(program, params, x, labels, mask)


use_backend(os.environ.get("ADASKIP_KERNELS", "auto"))
