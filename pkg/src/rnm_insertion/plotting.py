"""Matplotlib renderings of the CLI data products (PNG, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def plot_radial_curves(x, curves: dict, reference, path, title="") -> Path:
    """Densities along the positive real axis, one line per charge."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in curves.items():
        ax.plot(x, np.where(np.isfinite(y), y, np.nan), label=label)
    ax.plot(x, reference, "k--", lw=1, label="laplace Q0")
    finite = np.concatenate([np.asarray(y)[np.isfinite(y)] for y in curves.values()] + [np.asarray(reference)])
    ax.set_ylim(0, min(float(np.max(finite)) * 1.1, 3.0 * float(np.max(reference)) + 1.0))
    ax.set_xlabel("x")
    ax.set_ylabel("R(x)")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_grid_field(points, values, path, title="", diverging=False, levels=21) -> Path:
    """Filled contours of a field sampled on a row-major square grid."""
    points = np.asarray(points)
    values = np.real(np.asarray(values, dtype=complex if np.iscomplexobj(values) else float))
    xs = np.unique(points.real)
    ys = np.unique(points.imag)
    if xs.size * ys.size != points.size:
        fig, ax = plt.subplots(figsize=(5, 5))
        sc = ax.scatter(points.real, points.imag, c=values, s=6, cmap="RdBu_r" if diverging else "viridis")
        fig.colorbar(sc, ax=ax)
    else:
        Z = values.reshape(ys.size, xs.size)
        fig, ax = plt.subplots(figsize=(5.5, 5))
        finite = np.isfinite(Z)
        if diverging:
            vmax = float(np.max(np.abs(Z[finite]))) or 1.0
            cs = ax.contourf(xs, ys, np.where(finite, Z, np.nan), levels=np.linspace(-vmax, vmax, levels), cmap="RdBu_r")
        else:
            cs = ax.contourf(xs, ys, np.where(finite, Z, np.nan), levels=levels, cmap="viridis")
        fig.colorbar(cs, ax=ax)
    ax.set_aspect("equal")
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_pair(points, left, right, titles, path) -> Path:
    """Two diverging fields side by side on the same grid."""
    points = np.asarray(points)
    xs, ys = np.unique(points.real), np.unique(points.imag)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.6))
    for ax, vals, title in zip(axes, (left, right), titles):
        Z = np.asarray(vals, dtype=float).reshape(ys.size, xs.size)
        vmax = float(np.max(np.abs(Z))) or 1.0
        cs = ax.contourf(xs, ys, Z, levels=np.linspace(-vmax, vmax, 25), cmap="RdBu_r")
        ax.contour(xs, ys, Z, levels=[0.0], colors="k", linewidths=0.6)
        ax.add_patch(plt.Circle((0, 0), 1.0, fill=False, ls=":", color="k"))
        ax.set_aspect("equal")
        ax.set_title(title)
        fig.colorbar(cs, ax=ax)
    fig.tight_layout()
    return _save(fig, path)


def plot_histogram(values, path, title="", reference=None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(values, bins=60, density=True, alpha=0.7)
    if reference is not None:
        x, y = reference
        ax.plot(x, y, "k-", lw=1)
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
