import numpy as np
import matplotlib as mpl

mpl.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from pymetawave.utils.wavesolver import evaluate  # noqa: E402


def _finish(fig, outfile):
    fig.tight_layout()
    if outfile is not None:
        fig.savefig(outfile, dpi=150)
        plt.close(fig)
    return fig


def plot_multipliers(multipliers, title="Floquet multipliers", outfile=None):
    """Multipliers in the complex plane with the unit circle."""
    multipliers = np.asarray(multipliers)
    fig, ax = plt.subplots(figsize=(5, 5))
    theta = np.linspace(0, 2 * np.pi, 361)
    ax.plot(np.cos(theta), np.sin(theta), color="grey", lw=0.8)
    ax.plot(multipliers.real, multipliers.imag, "o", color="C0", ms=4)
    ax.set_aspect("equal")
    ax.set_xlabel("Re $\\chi$")
    ax.set_ylabel("Im $\\chi$")
    ax.set_title(title)
    return _finish(fig, outfile)


def plot_branch(branch, outfile=None):
    """Norm against the continuation parameter; stable points dashed, unstable solid."""
    params = branch.param_values
    norms = branch.norms
    fig, ax = plt.subplots(figsize=(7, 5))
    stable = np.array([pt.stable is True for pt in branch.points])
    unstable = np.array([pt.stable is False for pt in branch.points])
    unknown = ~(stable | unstable)
    ax.plot(params, norms, color="lightgrey", lw=0.8)
    ax.plot(np.where(unstable, params, np.nan), np.where(unstable, norms, np.nan), "-", color="C3", label="unstable")
    ax.plot(np.where(stable, params, np.nan), np.where(stable, norms, np.nan), "--", color="C0", label="stable")
    if unknown.any() and not unknown.all():
        ax.plot(params[unknown], norms[unknown], ".", color="grey", label="not evaluated")
    folds = [pt for pt in branch.points if pt.fold]
    if folds:
        ax.plot([pt.param for pt in folds], [pt.norm for pt in folds], "kx", label="fold")
    ax.set_xlabel(branch.parameter_name)
    ax.set_ylabel("N")
    ax.legend()
    return _finish(fig, outfile)


def plot_profile(sol, n_points=512, outfile=None):
    z = np.linspace(-0.5 * sol.L, 0.5 * sol.L, n_points)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(z, evaluate(sol, z), color="C0")
    ax.set_xlabel("z")
    ax.set_ylabel("U(z)")
    return _finish(fig, outfile)


def plot_spacetime(spacetime, outfile=None, cpal="turbo"):
    fig, ax = plt.subplots(figsize=(8, 5))
    sites = np.arange(spacetime.N)
    T, S = np.meshgrid(spacetime.times, sites, indexing="ij")
    frames = np.clip(spacetime.frames, -10, 10)
    mesh = ax.pcolormesh(S, T, frames, cmap=cpal, shading="auto")
    fig.colorbar(mesh, ax=ax, label="q")
    if spacetime.blowup is not None:
        ax.plot(spacetime.blowup[1], spacetime.blowup[0], "w*", ms=10)
    ax.set_xlabel("Site")
    ax.set_ylabel("t")
    return _finish(fig, outfile)
