"""SVG plots of chi(t) against the exact-diagonalization reference."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

Y_RANGE = (-1.1, 1.1)


def _column(rows, name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in rows], dtype=float)


def emit_plot(row_sets: dict, path, reference=None, t_max: float | None = None,
              column: str = "chi_norm", title: str | None = None):
    """One marker series per labelled row set plus an optional reference curve
    ``(t, chi)``. Rows whose ``column`` is NaN fall back to ``chi_post``, then
    ``chi_raw``. Returns the axis limits ``(xlim, ylim)``."""
    if not row_sets and reference is None:
        raise ValueError("nothing to plot")
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    t_hi = 0.0
    if reference is not None:
        ts, chis = (np.asarray(v, dtype=float) for v in reference)
        ax.plot(ts, chis, "-", color="black", lw=1.2, label="exact")
        t_hi = max(t_hi, float(ts.max(initial=0.0)))
    markers = "os^dvx"
    for k, (label, rows) in enumerate(row_sets.items()):
        t = _column(rows, "t")
        y = _column(rows, column)
        for fallback in ("chi_post", "chi_raw"):
            y = np.where(np.isnan(y), _column(rows, fallback), y)
        err = _column(rows, "stderr")
        ax.errorbar(t, y, yerr=np.nan_to_num(err), fmt=markers[k % len(markers)],
                    ms=4, capsize=2, label=label)
        if len(t):
            t_hi = max(t_hi, float(t.max()))
    t_max = t_hi if t_max is None else t_max
    ax.set_xlim(0.0, t_max if t_max > 0 else 1.0)
    ax.set_ylim(*Y_RANGE)
    ax.set_xlabel("t J")
    ax.set_ylabel(r"$\chi_{ij}(t)$")
    if title:
        ax.set_title(title)
    ax.axhline(0.0, color="0.8", lw=0.6, zorder=0)
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    limits = (ax.get_xlim(), ax.get_ylim())
    fig.savefig(path, format="svg")
    plt.close(fig)
    return limits


def reference_curve(params, t_max: float, n_points: int = 121, i=None, j=None):
    """Exact chi(t) of the continuous-time model on an even grid."""
    from .oracle import ReferenceEvolution

    ref = ReferenceEvolution("direct", params)
    ts = np.linspace(0.0, t_max, max(2, n_points))
    return ts, np.array([ref.chi(float(t), i, j) for t in ts])


def default_t_max(rows_sets: dict) -> float:
    t = [r.t for rows in rows_sets.values() for r in rows]
    return max(t) if t else 1.0


__all__ = ["emit_plot", "reference_curve", "default_t_max", "Y_RANGE"]
