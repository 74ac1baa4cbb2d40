"""Path calculus on grid surrogates of positive bridge and excursion paths.

A ``GridFunction`` holds samples at ``k * zeta / N`` and is read with linear
interpolation. Lattice-derived paths have integer (or integer / scale)
values, and on them every operation here is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from amap._kernels import straddle_batch, straddle_scan

_ALIGN_TOL = 1e-9


class ExcursionError(ValueError):
    """A point or path is outside the domain of the requested operation."""


@dataclass(frozen=True, eq=False)
class GridFunction:
    zeta: float
    values: np.ndarray
    flags: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "zeta", float(self.zeta))
        if values.ndim != 1 or values.size < 1:
            raise ExcursionError("values must be a non-empty 1-d array")
        if self.zeta < 0 or (self.zeta == 0) != (values.size == 1):
            raise ExcursionError(f"lifetime {self.zeta} does not match {values.size} samples")
        if values[0] != 0 or values[-1] != 0:
            raise ExcursionError("grid function must vanish at both ends")
        if np.any(values < 0):
            raise ExcursionError("grid function must be nonnegative")

    @property
    def N(self) -> int:
        return self.values.size - 1

    @property
    def h(self) -> float:
        return self.zeta / self.N if self.N else 0.0

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.zeta, self.N + 1)

    @property
    def degenerate(self) -> bool:
        return self.zeta == 0.0

    def is_excursion(self) -> bool:
        return self.N >= 2 and bool(np.all(self.values[1:-1] > 0))

    def __call__(self, t):
        if self.degenerate:
            return np.zeros_like(np.asarray(t, dtype=float))
        return np.interp(t, self.times, self.values)

    def area(self) -> float:
        if self.degenerate:
            return 0.0
        return float(self.h * (self.values.sum() - 0.5 * (self.values[0] + self.values[-1])))

    def max(self) -> float:
        return float(self.values.max())

    def __eq__(self, other):
        return (isinstance(other, GridFunction) and self.zeta == other.zeta
                and np.array_equal(self.values, other.values))

    def to_json(self) -> str:
        return json.dumps({"zeta": self.zeta, "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "GridFunction":
        data = json.loads(text)
        return cls(float(data["zeta"]), np.asarray(data["values"], dtype=float))


def _aligned(t: float, h: float) -> int | None:
    k = round(t / h)
    return int(k) if abs(t / h - k) < _ALIGN_TOL else None


def _resample(fn, zeta: float, h: float, flags=()) -> GridFunction:
    """Sample ``fn`` on a uniform grid of ``[0, zeta]`` with spacing at most ``h``."""
    if zeta <= 0:
        return GridFunction(0.0, np.zeros(1), flags + ("degenerate",))
    n = max(1, math.ceil(zeta / h - _ALIGN_TOL))
    t = np.linspace(0.0, zeta, n + 1)
    values = np.maximum(fn(t), 0.0)
    values[0] = values[-1] = 0.0
    return GridFunction(zeta, values, flags)


# ---------------------------------------------------------------------------
# straddling excursions


@dataclass(frozen=True)
class StraddleFrame:
    f: GridFunction = field(repr=False)
    s: float
    a: float
    start: float
    finish: float
    top: float

    @property
    def duration(self) -> float:
        return self.finish - self.start

    @property
    def hat_max(self) -> float:
        return self.top - self.a

    @property
    def hat(self) -> GridFunction:
        return excise(self.f, self.s, self.a, frame=self)[0]

    @property
    def check(self) -> GridFunction:
        return excise(self.f, self.s, self.a, frame=self)[1]


def straddle(f: GridFunction, s: float, a: float) -> StraddleFrame:
    if not (0 < s < f.zeta) or a < 0 or not a < float(f(s)):
        raise ExcursionError(f"(s, a) = ({s}, {a}) is not under the graph of f")
    start, finish, top = straddle_scan(f.values, f.h, float(s), float(a))
    return StraddleFrame(f, float(s), float(a), start, finish, top)


def excise(f: GridFunction, s: float, a: float, frame: StraddleFrame | None = None):
    """Split ``f`` into the sub-excursion straddling ``(s, a)`` and the remainder.

    Returns ``(hat, check)``; ``hat`` is shifted to start at the origin,
    ``check`` is ``f`` with that stretch removed and the gap closed.
    """
    fr = frame or straddle(f, s, a)
    start, finish, h = fr.start, fr.finish, f.h
    duration = finish - start
    i0, i1 = _aligned(start, h), _aligned(finish, h)
    if i0 is not None and i1 is not None:
        hat_vals = f.values[i0:i1 + 1] - fr.a
        hat_vals[0] = hat_vals[-1] = 0.0
        hat = GridFunction(duration, np.maximum(hat_vals, 0.0))
        rest = np.concatenate([f.values[:i0 + 1], f.values[i1 + 1:]])
        if rest.size == 1:
            check = GridFunction(0.0, np.zeros(1), ("degenerate",))
        else:
            check = GridFunction(f.zeta - duration, rest)
        return hat, check
    hat = _resample(lambda t: f(start + t) - fr.a, duration, h)

    def check_fn(t):
        return np.where(t <= start, f(t), f(t + duration))

    check = _resample(check_fn, f.zeta - duration, h)
    return hat, check


def excursion_end(f: GridFunction, v: float) -> float:
    """Finish time of the excursion of ``f`` above ``f(v)`` that starts at ``v``."""
    a = float(f(v))
    h = f.h
    j = math.floor(v / h + _ALIGN_TOL) + 1
    if j > f.N or f.values[j] <= a:
        raise ExcursionError(f"no excursion above level {a} starts at time {v}")
    while j < f.N and f.values[j] > a:
        j += 1
    if f.values[j] > a:
        return f.zeta
    y0, y1 = f.values[j - 1], f.values[j]
    return h * (j - 1 + (y0 - a) / (y0 - y1))


def relocate(f: GridFunction, v: float, w: float, finish: float | None = None) -> GridFunction:
    """Move the excursion starting at ``v`` so that it starts at ``w``, closing the gap.

    ``w`` must lie outside ``(v, finish]``; ``w == v`` returns ``f``.
    """
    delta = excursion_end(f, v) if finish is None else finish
    if w == v:
        return f
    if not 0 <= w <= f.zeta or v < w <= delta:
        raise ExcursionError(f"insertion time {w} lies inside the moved excursion [{v}, {delta}]")
    duration = delta - v
    level_v = float(f(v))
    level_w = float(f(w))
    h = f.h
    iv, idel, iw = _aligned(v, h), _aligned(delta, h), _aligned(w, h)
    if None not in (iv, idel, iw):
        x = f.values
        piece = x[iv:idel + 1] - x[iv]
        if iw > iv:
            out = np.concatenate([x[:iv], x[idel:iw], piece[:-1] + x[iw], x[iw:]])
        else:
            out = np.concatenate([x[:iw], piece[:-1] + x[iw], x[iw:iv], x[idel:]])
        return GridFunction(f.zeta, out)

    def moved(t):
        t = np.asarray(t, dtype=float)
        tilde = lambda tau: f(v + np.clip(tau, 0.0, duration)) - level_v
        if w > v:
            return np.select(
                [t < v, t < w - duration, t < w],
                [f(t), f(t + duration), tilde(t - (w - duration)) + level_w],
                f(t),
            )
        return np.select(
            [t < w, t < w + duration, t < delta],
            [f(t), tilde(t - w) + level_w, f(t - duration)],
            f(t),
        )

    values = np.maximum(moved(f.times), 0.0)
    values[0] = values[-1] = 0.0
    return GridFunction(f.zeta, values)


# ---------------------------------------------------------------------------
# local time and the bridge <-> excursion transform


@dataclass(frozen=True)
class LocalTime:
    L: np.ndarray
    U: float
    u_index: int
    zeros: np.ndarray
    unit: float
    end_weight: int
    degenerate: bool


def local_time_unit(f: GridFunction) -> float:
    """Local time carried by one grid zero: time step over root-mean-square space step."""
    steps = np.diff(f.values)
    rms = math.sqrt(float(np.mean(steps * steps)))
    return f.h / rms if rms > 0 else 0.0


def local_time_and_split(f: GridFunction) -> LocalTime:
    """Zero-counting local time and the split time ``U``.

    Each interior zero of the grid carries one unit; the start carries one
    unit and the end carries one or two units so that the zero at ``U``
    splits the total exactly in half (``U`` is the last grid time with
    ``L <= L(zeta) / 2``).
    """
    zeros = np.flatnonzero(f.values[1:-1] == 0) + 1
    n_zero = zeros.size
    unit = local_time_unit(f)
    if n_zero == 0:
        return LocalTime(np.zeros(f.N + 1), f.zeta, f.N, zeros, unit, 0, True)
    j = (n_zero + 2) // 2                      # 1-based index of the median zero
    end_weight = 2 * j - n_zero
    before = np.searchsorted(zeros, np.arange(f.N + 1), side="left")
    L = unit * (1 + before).astype(float)
    L[0] = 0.0
    L[-1] = unit * (1 + n_zero + end_weight)
    u_index = int(zeros[j - 1])
    return LocalTime(L, u_index * f.h, u_index, zeros, unit, end_weight, False)


def occupation_local_time(f: GridFunction, eps: float) -> np.ndarray:
    """``(1 / 2 eps) * Leb{s <= t : f(s) < eps}`` at grid times, exact for linear interpolation."""
    y0, y1 = f.values[:-1], f.values[1:]
    lo, hi = np.minimum(y0, y1), np.maximum(y0, y1)
    span = hi - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(span > 0, np.clip((eps - lo) / span, 0.0, 1.0), (lo < eps).astype(float))
    return np.concatenate([[0.0], np.cumsum(frac * f.h)]) / (2 * eps)


def _k_right(lt: LocalTime, f: GridFunction) -> np.ndarray:
    """``K->`` on the grid: left-counted before ``U``, right-counted after."""
    n_zero = lt.zeros.size
    idx = np.arange(f.N + 1)
    upto = np.searchsorted(lt.zeros, idx, side="right")
    k = lt.L.copy()
    after = idx > lt.u_index
    k[after] = lt.unit * (n_zero - upto[after] + lt.end_weight)
    k[-1] = 0.0
    return k


@dataclass(frozen=True)
class BridgeSplit:
    e: GridFunction
    u: float
    degenerate: bool


def excursion_from_bridge(f: GridFunction) -> BridgeSplit:
    lt = local_time_and_split(f)
    if lt.degenerate:
        return BridgeSplit(GridFunction(f.zeta, f.values, ("degenerate",)), f.zeta, True)
    k = _k_right(lt, f)
    # snap the shift to the spacing of floats near the top so that e - K<- recovers
    # lattice-valued f without rounding
    q = 2.0 ** (math.frexp(float(f.values.max() + k.max()))[1] - 52)
    k = np.round(k / q) * q
    return BridgeSplit(GridFunction(f.zeta, k + f.values), lt.U, False)


def window_min(e: GridFunction, u: float) -> np.ndarray:
    """``K<-(t; e, u)``: minimum of ``e`` between ``t`` and ``u`` at every grid time."""
    x = e.values
    e_u = float(e(u))
    k = np.empty_like(x)
    h = e.h
    lo = math.floor(u / h + _ALIGN_TOL)
    hi = math.ceil(u / h - _ALIGN_TOL)
    left = x[:lo + 1]
    k[:lo + 1] = np.minimum(np.minimum.accumulate(left[::-1])[::-1], e_u)
    right = x[hi:]
    k[hi:] = np.minimum(np.minimum.accumulate(right), e_u)
    return k


def bridge_from_excursion(e: GridFunction, u: float) -> GridFunction:
    """Positive bridge ``e - K<-(.; e, u)``; vanishes at 0, ``u`` and ``zeta``."""
    if not 0 <= u <= e.zeta:
        raise ExcursionError(f"split time {u} outside [0, {e.zeta}]")
    values = e.values - window_min(e, u)
    values[0] = values[-1] = 0.0
    return GridFunction(e.zeta, np.maximum(values, 0.0))


# ---------------------------------------------------------------------------
# scaling and insertion


def brownian_scale(f: GridFunction, c: float) -> GridFunction:
    if c <= 0:
        raise ExcursionError(f"scale factor must be positive, got {c}")
    return GridFunction(c * f.zeta, math.sqrt(c) * f.values)


def _scaled(e: GridFunction, c: float):
    return lambda t: math.sqrt(c) * e(np.asarray(t) / c)


def insert_excursion(e1: GridFunction, e2: GridFunction, v: float, r: float,
                     N: int | None = None) -> GridFunction:
    """Insert ``S_r e1`` into ``S_{1-r} e2`` at the fraction ``v`` of the latter's length."""
    if not 0 <= v <= 1 or not 0 < r <= 1:
        raise ExcursionError(f"need v in [0, 1] and r in (0, 1], got v={v}, r={r}")
    N = N or max(e1.N, e2.N)
    if r == 1:
        return _resample(_scaled(e1, 1.0), 1.0, 1.0 / N)
    a = (1 - r) * v
    outer, inner = _scaled(e2, 1 - r), _scaled(e1, r)
    base = float(outer(a))

    def fn(t):
        t = np.asarray(t, dtype=float)
        return np.select([t <= a, t <= a + r],
                         [outer(t), base + inner(np.clip(t - a, 0, r))],
                         outer(np.clip(t - r, 0, 1 - r)))

    return _resample(fn, 1.0, 1.0 / N)


def tilde_u(u: float, v: float, r: float) -> float:
    """Where a uniform mark lands in the insertion picture (outside the inserted piece)."""
    return (1 - r) * u if u <= v else r + (1 - r) * u


def breve_u(u: float, v: float, r: float) -> float:
    """Inverse of ``tilde_u`` on ``[0, (1-r)v) U ((1-r)v + r, 1]``."""
    if u < (1 - r) * v:
        return u / (1 - r)
    if u > (1 - r) * v + r:
        return (u - r) / (1 - r)
    raise ExcursionError(f"mark {u} falls inside the inserted excursion")


def check_u(f: GridFunction, u: float, s: float, a: float) -> float:
    """Position of ``u`` after the excursion straddling ``(s, a)`` is cut out."""
    fr = straddle(f, s, a)
    if u < fr.start:
        return u
    if u > fr.finish:
        return u - fr.finish + fr.start
    raise ExcursionError(f"mark {u} lies in the excised excursion [{fr.start}, {fr.finish}]")


# ---------------------------------------------------------------------------
# length measure on paths


def sample_area_points(f: GridFunction, size: int, rng: np.random.Generator):
    """Points ``(s, a)`` uniform on the region under the graph of ``f``."""
    y0, y1 = f.values[:-1], f.values[1:]
    seg_area = 0.5 * (y0 + y1)
    cdf = np.cumsum(seg_area)
    total = cdf[-1]
    if total <= 0:
        raise ExcursionError("path has zero area")
    k = np.searchsorted(cdf, rng.random(size) * total, side="right")
    k = np.minimum(k, f.N - 1)
    a0, a1 = y0[k], y1[k]
    q = rng.random(size)
    slope = a1 - a0
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(np.abs(slope) > 1e-14 * np.maximum(a0 + a1, 1e-300),
                     (-a0 + np.sqrt(a0 * a0 + slope * q * (a0 + a1))) / slope, q)
    x = np.clip(x, 0.0, 1.0)
    s = (k + x) * f.h
    height = a0 + slope * x
    a = rng.random(size) * height
    return s, a


@dataclass
class FrameBatch:
    """Vectorized straddle frames for many ``(s, a)`` points of one path."""

    f: GridFunction
    s: np.ndarray
    a: np.ndarray
    start: np.ndarray
    finish: np.ndarray
    top: np.ndarray

    @property
    def duration(self) -> np.ndarray:
        return self.finish - self.start

    @property
    def hat_max(self) -> np.ndarray:
        return self.top - self.a

    def __len__(self):
        return self.s.size

    def frame(self, i: int) -> StraddleFrame:
        return StraddleFrame(self.f, self.s[i], self.a[i], self.start[i], self.finish[i], self.top[i])


def frames(f: GridFunction, s: np.ndarray, a: np.ndarray) -> FrameBatch:
    start, finish, top = straddle_batch(f.values, f.h, np.asarray(s, float), np.asarray(a, float))
    return FrameBatch(f, s, a, start, finish, top)


@dataclass(frozen=True)
class Estimate:
    estimate: float
    stderr: float
    reps: int


def mf_terms(f: GridFunction, g, reps: int, rng: np.random.Generator) -> np.ndarray:
    """Per-point unbiased terms ``area(f) * g / duration`` for ``(s, a)`` uniform under ``f``."""
    area = f.area()
    if area <= 0:
        raise ExcursionError("m_f integration needs a path with positive area")
    s, a = sample_area_points(f, reps, rng)
    batch = frames(f, s, a)
    return area * np.asarray(g(batch), dtype=float) / batch.duration


def mf_integrate(f: GridFunction, g, reps: int, rng: np.random.Generator) -> Estimate:
    """Importance-sampling estimate of the length-measure integral of ``g`` along ``f``.

    ``g`` takes a ``FrameBatch`` and returns one value per point; individual
    frames expose ``hat``, ``check`` and ``start``. The estimate is unbiased
    for ``integral g(hat, check, start) m_f(d start)``.
    """
    terms = mf_terms(f, g, reps, rng)
    stderr = float(terms.std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")
    return Estimate(float(terms.mean()), stderr, reps)


def excursions_above(f: GridFunction, a: float) -> list:
    """``(start, finish)`` of every excursion of ``f`` above level ``a``."""
    x = f.values - a
    h = f.h
    out = []
    k = 0
    while k < f.N:
        if x[k] <= 0 < x[k + 1] or (k == 0 and x[0] > 0):
            st = h * (k + (-x[k]) / (x[k + 1] - x[k])) if x[k] <= 0 else 0.0
            j = k + 1
            while j < f.N and x[j] > 0:
                j += 1
            fi = h * (j - 1 + x[j - 1] / (x[j - 1] - x[j])) if x[j] <= 0 else f.zeta
            out.append((st, fi))
            k = j
        else:
            k += 1
    return out


def level_sweep_integral(f: GridFunction, g, levels: int = 2000) -> float:
    """Midpoint-rule ``integral da sum_{excursions above a} g(frame)``; slow oracle.

    ``g`` takes a ``StraddleFrame``.
    """
    top = f.max()
    da = top / levels
    total = 0.0
    for j in range(levels):
        a = (j + 0.5) * da
        for st, fi in excursions_above(f, a):
            s = 0.5 * (st + fi)
            # any interior time identifies the excursion; pick one with f(s) > a
            if float(f(s)) <= a:
                inside = f.times[(f.times > st) & (f.times < fi)]
                s = float(inside[np.argmax(f(inside))])
            total += g(straddle(f, s, a)) * da
    return total


# ---------------------------------------------------------------------------
# relocation kernel


@dataclass(frozen=True)
class KappaDraw:
    path: GridFunction
    v: float
    finish: float
    w: float
    level: float
    cutoff: float
    attempts: int


def _vertex_entry_times(f: GridFunction, scale: float) -> np.ndarray:
    ints = np.rint(f.values * scale).astype(np.int64)
    up = np.flatnonzero(np.diff(ints) > 0) + 1
    return np.concatenate([[0], up])


def kappa_plus_sample(f: GridFunction, rng: np.random.Generator, cutoff: float | None = None,
                      lattice_scale: float | None = None, max_attempts: int = 1_000_000) -> KappaDraw:
    """One draw from the relocation kernel restricted to excursions of duration ``>= cutoff``.

    The excursion start is drawn from the length measure by area sampling
    with ``1/duration`` acceptance; the insertion time is uniform off the
    excursion. With ``lattice_scale`` set (path values are integers divided
    by it) levels snap to the value lattice, the cutoff is one lattice edge,
    and the insertion point is uniform over the root and the vertices outside
    the moved subtree, which is the discrete chain's rule.
    """
    area = f.area()
    if area <= 0:
        raise ExcursionError("relocation kernel needs a path with positive area")
    h = f.h
    lattice = lattice_scale is not None
    if lattice:
        cutoff = 2 * h
        band = 1.0 / lattice_scale
        min_region = h * band
    elif cutoff is None:
        cutoff = 2 * h
    for attempt in range(1, max_attempts + 1):
        (s,), (a,) = sample_area_points(f, 1, rng)
        if lattice:
            a = math.floor(a * lattice_scale) / lattice_scale
        start, finish, top = straddle_scan(f.values, h, float(s), float(a))
        duration = finish - start
        if lattice:
            i0, i1 = round(start / h), round(finish / h)
            seg = np.clip(f.values[i0:i1 + 1] - a, 0.0, band)
            region = h * (seg.sum() - 0.5 * (seg[0] + seg[-1]))
            accept = min_region / region
        else:
            if duration < cutoff:
                continue
            accept = cutoff / duration
        if rng.random() < accept:
            break
    else:
        raise ExcursionError("relocation kernel rejection sampling did not terminate")
    if lattice:
        entries = _vertex_entry_times(f, lattice_scale)
        i0, i1 = round(start / h), round(finish / h)
        entries = entries[(entries <= i0) | (entries > i1)]
        w = float(entries[rng.integers(entries.size)]) * h
        if round(w / h) == i0:
            w = start
    else:
        u = rng.random() * (f.zeta - duration)
        w = u if u < start else u + duration
    return KappaDraw(relocate(f, start, w, finish=finish), start, finish, w, a, cutoff, attempt)
