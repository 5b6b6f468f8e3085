"""Periodic grids and trigonometric calculus on the unit torus.

Fields live on uniform grids over (R/Z)^n with nodes j/N_i per direction.
Samples are the primary representation; spectra are computed on demand and
cached. Differentiation and interpolation both act on the trigonometric
interpolant of the samples, with the even-N Nyquist mode handled by the
symmetric convention: the Nyquist coefficient is split between +-N/2, so
odd-order derivatives of that mode vanish at the nodes and the interpolant
is real everywhere.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ValidationError

__all__ = [
    "TorusGrid",
    "PeriodicPotential",
    "StripField",
    "spectral_derivative",
    "trig_interpolate",
    "hessian_margin",
    "gradient_fields",
    "hessian_fields",
    "sym_det",
    "sym_adjugate",
    "sym_inverse",
    "smallest_eigenvalue",
    "trig_supremum",
    "save_potential_csv",
    "load_potential_csv",
    "save_strip_csv",
    "load_strip_csv",
]

_FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class TorusGrid:
    """Uniform sampling grid on (R/Z)^n, period 1 in every direction."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(N) for N in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes or len(sizes) > 3:
            raise ValidationError(f"grid must have 1..3 dimensions, got {len(sizes)}")
        for N in sizes:
            if N < 8 or N % 2 != 0:
                raise ValidationError(f"grid sizes must be even and >= 8, got {N}")

    @property
    def dims(self) -> int:
        return len(self.sizes)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(1.0 / N for N in self.sizes)

    def axes(self) -> tuple[np.ndarray, ...]:
        """Node coordinates j/N per direction."""
        return tuple(np.arange(N) / N for N in self.sizes)

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``sizes`` (indexing='ij')."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``(*sizes, dims)``."""
        return np.stack(self.mesh(), axis=-1)


def _as_real_samples(grid: TorusGrid, samples) -> np.ndarray:
    arr = np.asarray(samples)
    if np.iscomplexobj(arr):
        raise ValidationError("field samples must be real")
    arr = arr.astype(float, copy=True)
    if arr.shape != grid.sizes:
        raise ValidationError(f"samples shape {arr.shape} != grid sizes {grid.sizes}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PeriodicPotential:
    """A real field on a torus grid, viewed through its trig interpolant.

    ``margin`` is the certified convexity bound: the minimum over the grid
    nodes of the smallest eigenvalue of D^2 u + I. It is computed lazily and
    cached; construction does not require it to be positive (measurement
    operations need to see non-convex fields too).
    """

    grid: TorusGrid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_real_samples(self.grid, self.samples))

    @cached_property
    def spectrum(self) -> np.ndarray:
        """Unnormalized FFT coefficients of the samples."""
        spec = np.fft.fftn(self.samples)
        spec.setflags(write=False)
        return spec

    @cached_property
    def _extended(self) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
        """Coefficients on the symmetric mode range -N/2..N/2 per axis.

        The Nyquist coefficient is halved and mirrored so the represented
        interpolant is real and matches the node values exactly.
        """
        c = self.spectrum / self.samples.size
        kexts = []
        for ax, N in enumerate(self.grid.sizes):
            half = N // 2
            idx = np.arange(-half, half + 1) % N
            c = np.take(c, idx, axis=ax)
            sl = [slice(None)] * c.ndim
            for end in (0, -1):
                sl[ax] = end
                c[tuple(sl)] = c[tuple(sl)] * 0.5
                sl[ax] = slice(None)
            kexts.append(np.arange(-half, half + 1))
        c.setflags(write=False)
        return c, tuple(kexts)

    @cached_property
    def margin(self) -> float:
        return hessian_margin(self)

    def shifted(self, constant: float) -> "PeriodicPotential":
        return PeriodicPotential(self.grid, self.samples + constant)


def _normalize_order(grid: TorusGrid, order) -> tuple[int, ...]:
    if isinstance(order, (int, np.integer)):
        if grid.dims != 1:
            raise ValidationError("multi-index order required for dims > 1")
        order = (int(order),)
    order = tuple(int(a) for a in np.atleast_1d(order))
    if len(order) != grid.dims:
        raise ValidationError(f"order {order} has wrong length for dims={grid.dims}")
    if any(a < 0 for a in order):
        raise ValidationError(f"derivative order must be non-negative, got {order}")
    return order


def _derivative_factor(N: int, p: int) -> np.ndarray:
    """Per-mode multiplier for the p-th derivative along one axis."""
    k = np.fft.fftfreq(N, 1.0 / N)
    fac = (2j * np.pi * k) ** p
    if p % 2 == 1:
        fac[N // 2] = 0.0  # Nyquist carries no odd derivative at the nodes
    return fac


def spectral_derivative(u: PeriodicPotential, order) -> PeriodicPotential:
    """Exact derivative of the trig interpolant, returned on the same nodes.

    ``order`` is a multi-index (a_1, ..., a_n); an int is accepted when n=1.
    """
    order = _normalize_order(u.grid, order)
    if all(a == 0 for a in order):
        return u
    spec = u.spectrum.astype(complex)
    for ax, (N, p) in enumerate(zip(u.grid.sizes, order)):
        if p == 0:
            continue
        fac = _derivative_factor(N, p)
        shape = [1] * u.grid.dims
        shape[ax] = N
        spec = spec * fac.reshape(shape)
    return PeriodicPotential(u.grid, np.fft.ifftn(spec).real)


def trig_interpolate(u: PeriodicPotential, points) -> np.ndarray:
    """Evaluate the trig interpolant at arbitrary coordinates (mod 1).

    ``points`` has shape (..., n); for n=1 a bare array of coordinates (or a
    scalar) is accepted. Exact on grid nodes. Returns an array of shape
    ``points.shape[:-1]`` (or scalar for scalar input).
    """
    n = u.grid.dims
    pts = np.asarray(points, dtype=float)
    scalar_in = False
    if n == 1:
        if pts.ndim == 0:
            scalar_in = True
            pts = pts.reshape(1, 1)
        elif pts.shape[-1] != 1:
            pts = pts[..., None]
    if pts.ndim == 0 or pts.shape[-1] != n:
        raise ValidationError(f"points must have last axis {n}")
    lead = pts.shape[:-1]
    flat = pts.reshape(-1, n) % 1.0

    coeffs, kexts = u._extended
    phases = [
        np.exp((2j * np.pi) * np.outer(flat[:, d], kexts[d])) for d in range(n)
    ]
    if n == 1:
        vals = phases[0] @ coeffs
    elif n == 2:
        vals = np.einsum("pa,pb,ab->p", phases[0], phases[1], coeffs, optimize=True)
    else:
        vals = np.einsum(
            "pa,pb,pc,abc->p", phases[0], phases[1], phases[2], coeffs, optimize=True
        )
    out = vals.real.reshape(lead)
    if scalar_in:
        return float(out.reshape(()))
    return out


def gradient_fields(u: PeriodicPotential) -> list[PeriodicPotential]:
    """The n first-derivative fields of u."""
    n = u.grid.dims
    out = []
    for d in range(n):
        order = [0] * n
        order[d] = 1
        out.append(spectral_derivative(u, order))
    return out


def hessian_fields(u: PeriodicPotential) -> np.ndarray:
    """Second derivatives at the nodes, shape ``(*sizes, n, n)``."""
    n = u.grid.dims
    H = np.empty(u.grid.sizes + (n, n))
    for i in range(n):
        for j in range(i, n):
            order = [0] * n
            order[i] += 1
            order[j] += 1
            d = spectral_derivative(u, order).samples
            H[..., i, j] = d
            H[..., j, i] = d
    return H


def sym_det(H: np.ndarray) -> np.ndarray:
    """Determinant of stacked symmetric matrices, explicit for n <= 3."""
    n = H.shape[-1]
    if n == 1:
        return H[..., 0, 0]
    if n == 2:
        return H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]
    if n == 3:
        a, b, c = H[..., 0, 0], H[..., 0, 1], H[..., 0, 2]
        d, e, f = H[..., 1, 1], H[..., 1, 2], H[..., 2, 2]
        return a * (d * f - e * e) - b * (b * f - e * c) + c * (b * e - d * c)
    raise ValidationError(f"explicit determinant only for n <= 3, got {n}")


def sym_adjugate(H: np.ndarray) -> np.ndarray:
    """Adjugate (cofactor transpose) of stacked symmetric matrices, n <= 3."""
    n = H.shape[-1]
    A = np.empty_like(H)
    if n == 1:
        A[..., 0, 0] = 1.0
        return A
    if n == 2:
        A[..., 0, 0] = H[..., 1, 1]
        A[..., 1, 1] = H[..., 0, 0]
        A[..., 0, 1] = -H[..., 0, 1]
        A[..., 1, 0] = -H[..., 1, 0]
        return A
    if n == 3:
        a, b, c = H[..., 0, 0], H[..., 0, 1], H[..., 0, 2]
        d, e, f = H[..., 1, 1], H[..., 1, 2], H[..., 2, 2]
        A[..., 0, 0] = d * f - e * e
        A[..., 0, 1] = A[..., 1, 0] = c * e - b * f
        A[..., 0, 2] = A[..., 2, 0] = b * e - c * d
        A[..., 1, 1] = a * f - c * c
        A[..., 1, 2] = A[..., 2, 1] = b * c - a * e
        A[..., 2, 2] = a * d - b * b
        return A
    raise ValidationError(f"explicit adjugate only for n <= 3, got {n}")


def sym_inverse(H: np.ndarray) -> np.ndarray:
    return sym_adjugate(H) / sym_det(H)[..., None, None]


def smallest_eigenvalue(H: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of stacked symmetric matrices."""
    n = H.shape[-1]
    if n == 1:
        return H[..., 0, 0]
    if n == 2:
        a, b, c = H[..., 0, 0], H[..., 0, 1], H[..., 1, 1]
        mid = 0.5 * (a + c)
        rad = np.sqrt((0.5 * (a - c)) ** 2 + b * b)
        return mid - rad
    return np.linalg.eigvalsh(H)[..., 0]


def hessian_margin(u: PeriodicPotential) -> float:
    """min over nodes of the smallest eigenvalue of D^2 u + I.

    Returns the value even when it is <= 0; callers decide what to reject.
    """
    H = hessian_fields(u)
    H[..., np.arange(u.grid.dims), np.arange(u.grid.dims)] += 1.0
    return float(np.min(smallest_eigenvalue(H)))


def trig_supremum(u: PeriodicPotential, oversample: int = 16) -> float:
    """Supremum of |interpolant| over the continuous torus, to high accuracy.

    Samples on an ``oversample``-times finer grid, then sharpens the discrete
    maximum with one parabolic fit per axis around the arg max. Used where a
    node-level max would under-report a boundary supremum.
    """
    fine_sizes = tuple(oversample * N for N in u.grid.sizes)
    fine = TorusGrid(fine_sizes)
    vals = np.abs(trig_interpolate(u, fine.nodes()))
    flat_idx = int(np.argmax(vals))
    best = float(vals.flat[flat_idx])
    idx = np.unravel_index(flat_idx, fine_sizes)
    # one parabolic refinement per axis around the discrete arg max
    for ax, N in enumerate(fine_sizes):
        lo = list(idx)
        hi = list(idx)
        lo[ax] = (idx[ax] - 1) % N
        hi[ax] = (idx[ax] + 1) % N
        fm = float(vals[tuple(lo)])
        f0 = float(vals[tuple(idx)])
        fp = float(vals[tuple(hi)])
        denom = fm - 2.0 * f0 + fp
        if denom < 0:
            peak = f0 - 0.125 * (fp - fm) ** 2 / denom
            best = max(best, peak)
    return best


# ---------------------------------------------------------------------------
# time strips


@dataclass(frozen=True)
class StripField:
    """Scalar samples on torus x [0,1]: ``samples[m]`` is the slice at t=m/M.

    Slice 0 and slice M carry the Dirichlet data exactly.
    """

    grid: TorusGrid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if np.iscomplexobj(arr):
            raise ValidationError("strip samples must be real")
        arr = arr.astype(float, copy=True)
        if arr.ndim != self.grid.dims + 1 or arr.shape[1:] != self.grid.sizes:
            raise ValidationError(
                f"strip samples shape {arr.shape} incompatible with grid {self.grid.sizes}"
            )
        if arr.shape[0] < 3:
            raise ValidationError("a strip needs at least 3 slice levels")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def intervals(self) -> int:
        """M: number of slice intervals (there are M+1 levels)."""
        return self.samples.shape[0] - 1

    @property
    def dt(self) -> float:
        return 1.0 / self.intervals

    def t_nodes(self) -> np.ndarray:
        return np.arange(self.intervals + 1) / self.intervals

    @cached_property
    def slice_potentials(self) -> tuple[PeriodicPotential, ...]:
        return tuple(PeriodicPotential(self.grid, s) for s in self.samples)

    def x_derivative(self, order) -> "StripField":
        """Spectral spatial derivative applied slice by slice."""
        order = _normalize_order(self.grid, order)
        spec = np.fft.fftn(self.samples, axes=tuple(range(1, self.grid.dims + 1)))
        for ax, (N, p) in enumerate(zip(self.grid.sizes, order)):
            if p == 0:
                continue
            fac = _derivative_factor(N, p)
            shape = [1] * (self.grid.dims + 1)
            shape[ax + 1] = N
            spec = spec * fac.reshape(shape)
        vals = np.fft.ifftn(spec, axes=tuple(range(1, self.grid.dims + 1))).real
        return StripField(self.grid, vals)


# ---------------------------------------------------------------------------
# CSV serialization (format: torus_field v1)

_HEADER_RE = re.compile(r"#\s*torus_field v1,\s*n=(\d+),\s*N=([\d,]+)(.*)")


def _format_potential_block(u: PeriodicPotential, extra: str = "") -> str:
    sizes = ",".join(str(N) for N in u.grid.sizes)
    lines = [f"# torus_field v1, n={u.grid.dims}, N={sizes}{extra}"]
    coords = u.grid.nodes().reshape(-1, u.grid.dims)
    vals = u.samples.reshape(-1)
    for c, v in zip(coords, vals):
        parts = [(_FLOAT_FMT % x) for x in c] + [(_FLOAT_FMT % v)]
        lines.append(",".join(parts))
    return "\n".join(lines) + "\n"


def save_potential_csv(u: PeriodicPotential, path) -> None:
    from ._fileio import write_text_atomic

    write_text_atomic(path, _format_potential_block(u))


def _parse_blocks(text: str):
    """Yield (header_extras, grid, samples) per torus_field block."""
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        m = _HEADER_RE.match(line)
        if not m:
            raise ValidationError(f"expected torus_field header, got: {line!r}")
        n = int(m.group(1))
        sizes = tuple(int(s) for s in m.group(2).split(","))
        if len(sizes) != n:
            raise ValidationError(f"header declares n={n} but N={sizes}")
        extras = m.group(3)
        count = int(np.prod(sizes))
        rows = lines[i + 1 : i + 1 + count]
        if len(rows) < count:
            raise ValidationError("torus_field block truncated")
        vals = np.empty(count)
        for r, row in enumerate(rows):
            cells = row.split(",")
            if len(cells) != n + 1:
                raise ValidationError(f"bad row in torus_field block: {row!r}")
            vals[r] = float(cells[-1])
        grid = TorusGrid(sizes)
        yield extras, grid, vals.reshape(sizes)
        i += 1 + count


def load_potential_csv(path) -> PeriodicPotential:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    blocks = list(_parse_blocks(text))
    if len(blocks) != 1:
        raise ValidationError(f"expected a single field block, found {len(blocks)}")
    _, grid, samples = blocks[0]
    return PeriodicPotential(grid, samples)


def save_strip_csv(u: StripField, path) -> None:
    from ._fileio import write_text_atomic

    parts = []
    for m, pot in enumerate(u.slice_potentials):
        t = m / u.intervals
        parts.append(_format_potential_block(pot, extra=f", slice={m}, t={_FLOAT_FMT % t}"))
    write_text_atomic(path, "".join(parts))


def load_strip_csv(path) -> StripField:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    blocks = list(_parse_blocks(text))
    if len(blocks) < 3:
        raise ValidationError("strip file needs at least 3 slice blocks")
    grid = blocks[0][1]
    samples = []
    for extras, g, vals in blocks:
        if g != grid:
            raise ValidationError("inconsistent grids across strip slices")
        samples.append(vals)
    return StripField(grid, np.stack(samples, axis=0))
