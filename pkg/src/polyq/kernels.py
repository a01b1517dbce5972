"""Select the compiled kernels when available, else the numpy fallback.

Set ``POLYQ_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

if os.environ.get("POLYQ_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

IMPLEMENTATION = _impl.IMPLEMENTATION
enum_stats = _impl.enum_stats
enum_exp_table_sum = _impl.enum_exp_table_sum
enum_site_local_times = _impl.enum_site_local_times
ChainCore = _impl.ChainCore
shard_steps = _pykernels.shard_steps
shard_positions = _pykernels.shard_positions


def implementations():
    """Every kernel implementation importable in this build, by name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
