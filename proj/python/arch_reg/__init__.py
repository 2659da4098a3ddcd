"""Adversarial regularization training engine with perturbation caching."""

try:
    from ._core import (
        build_neighbor_index,
        count_passes_expected,
        ema_update,
        kl_divergence,
        project_l2,
        project_linf,
        run_experiment,
        run_oracles,
    )
except ImportError:  # pragma: no cover - in-tree runs against a build dir
    import os
    import sys

    _core_dir = os.environ.get("ARCH_CORE_DIR")
    if _core_dir:
        sys.path.insert(0, _core_dir)
    from _core import (  # noqa: F401
        build_neighbor_index,
        count_passes_expected,
        ema_update,
        kl_divergence,
        project_l2,
        project_linf,
        run_experiment,
        run_oracles,
    )

__all__ = [
    "build_neighbor_index",
    "count_passes_expected",
    "ema_update",
    "kl_divergence",
    "project_l2",
    "project_linf",
    "run_experiment",
    "run_oracles",
]
