"""The partial Legendre change of variables on the torus and its conjugate.

A strictly convex periodic potential u (meaning D^2 u + I > 0) defines the
map y(x) = grad u(x) + x, a diffeomorphism of R^n commuting with unit
translations. Its inverse x(y) is tabulated on a uniform y-grid of the same
sizes, and the conjugate potential is

    f(y) = -|x - y|^2 / 2 - u(x)   at   y = grad u(x) + x.

The conjugate is periodic and strictly convex, the construction is an exact
involution (applying it to f returns u), and the Hessian-plus-identity
matrices on the two sides are inverses of each other along the map. The
inverse branch is fixed by the nearest-periodic-image rule x - y in
[-1/2, 1/2)^n, which is translation-free; map residuals are measured modulo
unit translations so the rule is consistent for every input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._fileio import write_json_atomic
from .errors import ConvergenceFailure, SliceNotConvex, ValidationError
from .torus import (
    PeriodicPotential,
    StripField,
    TorusGrid,
    gradient_fields,
    hessian_fields,
    load_potential_csv,
    save_potential_csv,
    spectral_derivative,
    sym_det,
    sym_inverse,
    trig_interpolate,
)

__all__ = [
    "TransformPair",
    "StripTransformPair",
    "forward_map",
    "invert_map",
    "partial_transform",
    "inverse_transform",
    "partial_transform_strip",
    "save_pair_bundle",
    "load_pair_bundle",
]

_NEWTON_TOL = 1e-12
_MAX_ITER = 100


@dataclass(frozen=True)
class TransformPair:
    """A potential, its conjugate, and the tabulated inverse map.

    ``det_g`` holds det(D^2 u + I) on the x-grid nodes, ``det_h`` holds
    det(D^2 f + I) on the y-grid nodes; along the map their product is 1.
    """

    u: PeriodicPotential
    f: PeriodicPotential
    x_of_y: np.ndarray = field(repr=False)
    det_g: np.ndarray = field(repr=False)
    det_h: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class StripTransformPair:
    """Slicewise transform of a strip: s-slices of f match t-slices of u."""

    u: StripField
    f: StripField
    x_of_ys: np.ndarray = field(repr=False)
    det_g: np.ndarray = field(repr=False)
    det_h: np.ndarray = field(repr=False)


def forward_map(u: PeriodicPotential) -> np.ndarray:
    """y(x) = grad u(x) + x on the grid nodes, shape ``(*sizes, n)``."""
    if u.margin <= 0:
        raise ValidationError(f"potential not strictly convex (margin={u.margin:.3g})")
    grads = gradient_fields(u)
    coords = u.grid.mesh()
    return np.stack([g.samples + c for g, c in zip(grads, coords)], axis=-1)


def _points_for_inversion(u: PeriodicPotential, y):
    n = u.grid.dims
    pts = np.asarray(y, dtype=float)
    scalar_in = pts.ndim == 0
    if n == 1:
        if scalar_in:
            pts = pts.reshape(1, 1)
        elif pts.shape[-1] != 1:
            pts = pts[..., None]
    if pts.shape[-1] != n:
        raise ValidationError(f"target points must have last axis {n}")
    return pts, scalar_in


def _invert_1d(u: PeriodicPotential, y_flat: np.ndarray) -> np.ndarray:
    ux = gradient_fields(u)[0]
    uxx = spectral_derivative(u, (2,))
    # x + u_x(x) is strictly increasing with slope >= margin and |u_x| < 1,
    # so [y-1, y+1] brackets the unique root
    lo = y_flat - 1.0
    hi = y_flat + 1.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        val = mid + trig_interpolate(ux, mid) - y_flat
        take = val <= 0.0
        lo = np.where(take, mid, lo)
        hi = np.where(take, hi, mid)
    x = 0.5 * (lo + hi)
    for _ in range(6):
        r = x + trig_interpolate(ux, x) - y_flat
        x = x - r / (1.0 + trig_interpolate(uxx, x))
    resid = np.abs(x + trig_interpolate(ux, x) - y_flat)
    if resid.max() > _NEWTON_TOL:
        raise ConvergenceFailure(
            f"map inversion residual {resid.max():.3e} > {_NEWTON_TOL:.0e}"
        )
    return x[:, None]


def _invert_nd(u: PeriodicPotential, y_flat: np.ndarray) -> np.ndarray:
    n = u.grid.dims
    grads = gradient_fields(u)
    hess = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            order = [0] * n
            order[i] += 1
            order[j] += 1
            hess[i][j] = hess[j][i] = spectral_derivative(u, order)

    def residual(x):
        r = np.empty_like(x)
        for d in range(n):
            r[:, d] = x[:, d] + trig_interpolate(grads[d], x) - y_flat[:, d]
        return r

    x = y_flat.copy()
    r = residual(x)
    for _ in range(_MAX_ITER):
        sup = np.abs(r).max(axis=1)
        if sup.max() <= _NEWTON_TOL:
            return x
        J = np.empty((len(x), n, n))
        for i in range(n):
            for j in range(i, n):
                J[:, i, j] = J[:, j, i] = trig_interpolate(hess[i][j], x)
        J[:, np.arange(n), np.arange(n)] += 1.0
        step = np.einsum("pij,pj->pi", sym_inverse(J), r)
        step[sup <= _NEWTON_TOL] = 0.0
        alpha = np.ones(len(x))
        for _ in range(40):
            cand = x - alpha[:, None] * step
            rc = residual(cand)
            good = np.abs(rc).max(axis=1) < np.maximum(sup, _NEWTON_TOL)
            if good.all():
                break
            alpha = np.where(good, alpha, alpha * 0.5)
        x = x - alpha[:, None] * step
        r = residual(x)
    sup = np.abs(r).max()
    if sup > _NEWTON_TOL:
        raise ConvergenceFailure(f"map inversion residual {sup:.3e} after {_MAX_ITER} iterations")
    return x


def invert_map(u: PeriodicPotential, y) -> np.ndarray:
    """Solve grad u(x) + x = y (mod unit translations) for x.

    The branch is fixed by x - y in [-1/2, 1/2)^n; the residual is then zero
    modulo unit translations (exactly zero whenever |grad u| < 1/2, which
    holds for every mildly convex potential). Shift equivariance
    x(y + e_i) = x(y) + e_i is exact by construction: targets are reduced
    mod 1 before solving and the offset is added back.
    """
    if u.margin <= 0:
        raise ValidationError(f"potential not strictly convex (margin={u.margin:.3g})")
    pts, scalar_in = _points_for_inversion(u, y)
    lead = pts.shape[:-1]
    n = u.grid.dims
    flat = pts.reshape(-1, n)
    offset = np.floor(flat)
    yhat = flat - offset
    if n == 1:
        x = _invert_1d(u, yhat[:, 0])
    else:
        x = _invert_nd(u, yhat)
    x = x - np.floor(x - yhat + 0.5)  # nearest-image branch
    out = (x + offset).reshape(lead + (n,))
    if scalar_in:
        return float(out.reshape(()))
    if n == 1 and np.asarray(y).ndim >= 1 and np.asarray(y).shape[-1:] != (1,):
        return out[..., 0]
    return out


def _det_hessian_plus_identity(p: PeriodicPotential) -> np.ndarray:
    H = hessian_fields(p)
    H[..., np.arange(p.grid.dims), np.arange(p.grid.dims)] += 1.0
    return sym_det(H)


def partial_transform(u: PeriodicPotential) -> TransformPair:
    """Conjugate u on a uniform y-grid of the same sizes."""
    grid = u.grid
    n = grid.dims
    Y = grid.nodes()
    X = invert_map(u, Y.reshape(-1, n)).reshape(Y.shape)
    u_at_x = trig_interpolate(u, X)
    diff = X - Y
    f_samples = -0.5 * np.sum(diff * diff, axis=-1) - u_at_x
    f = PeriodicPotential(grid, f_samples)
    return TransformPair(
        u=u,
        f=f,
        x_of_y=X,
        det_g=_det_hessian_plus_identity(u),
        det_h=_det_hessian_plus_identity(f),
    )


def inverse_transform(pair: TransformPair) -> PeriodicPotential:
    """Conjugate the conjugate; equals the original potential exactly."""
    return partial_transform(pair.f).f


def partial_transform_strip(u: StripField) -> StripTransformPair:
    """Apply the transform slice by slice; raises SliceNotConvex if any
    slice has non-positive convexity margin."""
    f_slices = []
    maps = []
    det_g = []
    det_h = []
    for m, pot in enumerate(u.slice_potentials):
        margin = pot.margin
        if margin <= 0:
            raise SliceNotConvex(m, margin)
        pair = partial_transform(pot)
        f_slices.append(pair.f.samples)
        maps.append(pair.x_of_y)
        det_g.append(pair.det_g)
        det_h.append(pair.det_h)
    return StripTransformPair(
        u=u,
        f=StripField(u.grid, np.stack(f_slices)),
        x_of_ys=np.stack(maps),
        det_g=np.stack(det_g),
        det_h=np.stack(det_h),
    )


# ---------------------------------------------------------------------------
# serialization


def save_pair_bundle(pair: TransformPair, outdir) -> None:
    """Write u/f/det/map components as torus_field CSVs plus a manifest."""
    outdir = Path(outdir)
    grid = pair.u.grid
    save_potential_csv(pair.u, outdir / "u.csv")
    save_potential_csv(pair.f, outdir / "f.csv")
    save_potential_csv(PeriodicPotential(grid, pair.det_g), outdir / "det_g.csv")
    save_potential_csv(PeriodicPotential(grid, pair.det_h), outdir / "det_h.csv")
    for d in range(grid.dims):
        comp = pair.x_of_y[..., d] - grid.mesh()[d]  # periodic part of the map
        save_potential_csv(PeriodicPotential(grid, comp), outdir / f"x_of_y_{d}.csv")
    write_json_atomic(
        outdir / "manifest.json",
        {
            "n": grid.dims,
            "N": list(grid.sizes),
            "margin_u": pair.u.margin,
            "margin_f": pair.f.margin,
        },
    )


def load_pair_bundle(outdir) -> TransformPair:
    outdir = Path(outdir)
    with open(outdir / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    u = load_potential_csv(outdir / "u.csv")
    f = load_potential_csv(outdir / "f.csv")
    det_g = load_potential_csv(outdir / "det_g.csv").samples
    det_h = load_potential_csv(outdir / "det_h.csv").samples
    grid = u.grid
    if list(grid.sizes) != list(manifest["N"]):
        raise ValidationError("manifest grid does not match field files")
    comps = []
    for d in range(grid.dims):
        part = load_potential_csv(outdir / f"x_of_y_{d}.csv").samples
        comps.append(part + grid.mesh()[d])
    return TransformPair(
        u=u, f=f, x_of_y=np.stack(comps, axis=-1), det_g=det_g, det_h=det_h
    )
