"""Samplers and Monte Carlo checks of the closed-form excursion integrals.

All estimators draw independent replicas in fixed-size chunks; each chunk
gets its own generator spawned from the caller's, so results depend only
on the seed and never on the number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, stats

from amap._kernels import straddle_batch, straddle_refined
from amap.excursion_kit import GridFunction, kappa_plus_sample, sample_area_points
from amap.mapping_core import Mapping, sample_uniform_acyclic_array
from amap.path_codec import LatticePath, decode_labeled, encode_array, encode_labeled, rescale

CHUNK = 500
POINTS_PER_PATH = 4
KS_LEVEL = 0.001


@dataclass
class EstimatorReport:
    name: str
    estimate: float
    stderr: float
    reps: int
    cutoff: float | None = None
    target: float | None = None
    z_score: float | None = None

    def __post_init__(self):
        if self.target is not None and self.z_score is None and self.stderr > 0:
            self.z_score = (self.estimate - self.target) / self.stderr

    def as_row(self) -> dict:
        return asdict(self)


def _report(name, terms, target=None, cutoff=None) -> EstimatorReport:
    terms = np.asarray(terms, dtype=float)
    reps = terms.size
    stderr = float(terms.std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")
    return EstimatorReport(name, float(terms.mean()), stderr, reps, cutoff, target)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("AMAP_THREADS", "1")))
    except ValueError:
        return 1


def _chunked(reps: int, rng: np.random.Generator, fn) -> np.ndarray:
    """Run ``fn(count, child_rng)`` over fixed chunks and stack the rows in chunk order."""
    sizes = [min(CHUNK, reps - k) for k in range(0, reps, CHUNK)]
    children = rng.spawn(len(sizes))
    workers = worker_count()
    if workers == 1:
        parts = [fn(size, child) for size, child in zip(sizes, children)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(fn, sizes, children))
    return np.concatenate(parts, axis=0)


# ---------------------------------------------------------------------------
# samplers


def _bridge_values(N: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Standard Brownian bridges on ``N`` equal intervals, shape ``(count, N + 1)``."""
    steps = rng.standard_normal((count, N)) * math.sqrt(1.0 / N)
    walk = np.zeros((count, N + 1))
    np.cumsum(steps, axis=1, out=walk[:, 1:])
    t = np.linspace(0.0, 1.0, N + 1)
    bridge = walk - t * walk[:, -1:]
    bridge[:, 0] = 0.0
    bridge[:, -1] = 0.0
    return bridge


def _check_grid(N: int):
    if N < 2:
        raise ValueError(f"grid count N must be >= 2, got {N}")


def sample_reflected_bridge(N: int, rng: np.random.Generator) -> GridFunction:
    _check_grid(N)
    return GridFunction(1.0, np.abs(_bridge_values(N, 1, rng)[0]))


def _vervaat(bridge: np.ndarray) -> np.ndarray:
    N = bridge.shape[-1] - 1
    k = np.argmin(bridge[..., :N], axis=-1)
    idx = (k[..., None] + np.arange(N + 1)) % N
    out = np.take_along_axis(bridge, idx, axis=-1) - np.take_along_axis(bridge, k[..., None], axis=-1)
    out[..., 0] = 0.0
    out[..., -1] = 0.0
    return out


def _bessel_bridge_values(N: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Exact excursion grid values: the norm of a three-dimensional Brownian bridge.

    Unlike the cyclic shift, whose grid law is only conditioned to be positive
    at grid times, this has the excursion's own finite-dimensional law, and
    between grid points it is a bridge conditioned to stay positive.
    """
    parts = [_bridge_values(N, count, rng) for _ in range(3)]
    return np.sqrt(parts[0] ** 2 + parts[1] ** 2 + parts[2] ** 2)


def sample_excursion(N: int, rng: np.random.Generator) -> GridFunction:
    """Bridge cyclically shifted to start at its minimum."""
    _check_grid(N)
    return GridFunction(1.0, _vervaat(_bridge_values(N, 1, rng))[0])


# ---------------------------------------------------------------------------
# closed forms


def duration_tail(t: float) -> float:
    if not 0 < t <= 1:
        raise ValueError(f"t must lie in (0, 1], got {t}")
    return (math.sqrt(1.0 / t - 1.0) + math.asin(math.sqrt(t)) - math.pi / 2) / math.sqrt(2 * math.pi)


def max_tail(x: float, terms: int = 200) -> float:
    n = np.arange(1, terms + 1)
    return float(math.sqrt(2 * math.pi) * stats.norm.sf(2 * n * x).sum())


def excursion_max_tail(y: float, terms: int | None = None) -> float:
    if y <= 0:
        return 1.0
    # terms decay like exp(-2 n^2 y^2), so small y needs about 10 / y of them
    terms = terms or max(200, int(10 / y) + 1)
    n = np.arange(1, terms + 1)
    value = float(2 * np.sum((4 * n**2 * y**2 - 1) * np.exp(-2 * n**2 * y**2)))
    return min(1.0, max(0.0, value))


DURATION_SECOND_MOMENT = math.sqrt(math.pi) / (16 * math.sqrt(2))
MAX_SECOND_MOMENT = math.pi**2.5 / (24 * math.sqrt(2))
JUMP_SQUARE_BOUND = 8 * MAX_SECOND_MOMENT + 2 * DURATION_SECOND_MOMENT


def disintegration_density(r, uniform_mark: bool = False):
    """Law of the excised duration on the right-hand side of the disintegration."""
    r = np.asarray(r, dtype=float)
    base = 1.0 / (2 * math.sqrt(2 * math.pi) * np.sqrt((1 - r) * r**3))
    return base * (1 - r) if uniform_mark else base


def disintegration_rhs(cutoff: float, uniform_mark: bool = False) -> float:
    if cutoff >= 1:
        return 0.0
    value, _ = integrate.quad(lambda r: float(disintegration_density(r, uniform_mark)), cutoff, 1.0)
    return float(value)


# ---------------------------------------------------------------------------
# per-path straddle statistics


def segment_extremes(values: np.ndarray, h: float, rng: np.random.Generator, law: str = "bridge"):
    """Minimum and maximum of the path across each grid interval, given its grid values.

    For a unit-variance Brownian bridge from ``y0`` to ``y1`` over time ``h``
    the maximum is ``(y0 + y1 + sqrt((y1 - y0)**2 - 2 h log U)) / 2`` and the
    minimum is the mirror image. Reading frames off these removes the bias of
    linear interpolation, which misses peaks and dips between grid points.

    ``law="excursion"`` conditions each piece to stay positive (``U`` becomes
    ``e0 + U (1 - e0)`` with ``e0 = exp(-2 y0 y1 / h)``). ``law="reflected"``
    treats the values as ``|B|``: the unseen sign flips across the interval with
    probability ``1 / (1 + exp(2 y0 y1 / h))``, and any zero crossing takes the
    minimum to 0.
    """
    y0, y1 = values[:-1], values[1:]
    u_lo = 1.0 - rng.random(y0.size)
    u_hi = 1.0 - rng.random(y0.size)
    if law == "reflected":
        flip = rng.random(y0.size) * (1.0 + np.exp(np.minimum(2.0 * y0 * y1 / h, 700.0))) < 1.0
        y1 = np.where(flip, -y1, y1)
    elif law == "excursion":
        e0 = np.exp(-2.0 * np.maximum(y0 * y1, 0.0) / h)
        u_lo = e0 + u_lo * (1.0 - e0)
    elif law != "bridge":
        raise ValueError(f"unknown law {law!r}")
    gap = (y1 - y0) ** 2
    lo = 0.5 * (y0 + y1 - np.sqrt(np.maximum(gap - 2.0 * h * np.log(u_lo), gap)))
    hi = 0.5 * (y0 + y1 + np.sqrt(gap - 2.0 * h * np.log(u_hi)))
    if law == "reflected":
        hi = np.maximum(hi, -lo)
        lo = np.maximum(lo, 0.0)
    return lo, hi


def _frame_terms(paths: np.ndarray, points: int, rng: np.random.Generator, columns,
                 refine: bool = True, law: str = "reflected") -> np.ndarray:
    """For each path, ``area * mean(g / duration)`` over uniform points under it.

    ``columns`` is a list of callables ``g(duration, hat_max, start)`` on arrays.
    With ``refine`` the frames are read off Brownian-bridge interval extremes
    rather than the interpolated grid.
    """
    out = np.empty((paths.shape[0], len(columns)))
    for k, values in enumerate(paths):
        f = GridFunction(1.0, values)
        area = f.area()
        if area <= 0:
            out[k] = 0.0
            continue
        s, a = sample_area_points(f, points, rng)
        if refine:
            lo, hi = segment_extremes(f.values, f.h, rng, law)
            start, finish, top = straddle_refined(f.values, lo, hi, f.h, s, a)
        else:
            start, finish, top = straddle_batch(f.values, f.h, s, a)
        duration = finish - start
        hat_max = top - a
        for j, g in enumerate(columns):
            out[k, j] = area * np.mean(g(duration, hat_max, start) / duration)
    return out


SHIFTED_TAIL_TIMES = (0.2, 0.5, 0.8)
SHIFTED_MAX_LEVELS = (0.5, 1.0)


def _shifted_columns():
    cols, names, targets = [], [], []
    for t in SHIFTED_TAIL_TIMES:
        cols.append(lambda d, m, s, t=t: (d > t).astype(float))
        names.append(f"duration_tail({t})")
        targets.append(duration_tail(t))
    cols.append(lambda d, m, s: d**2)
    names.append("duration_second_moment")
    targets.append(DURATION_SECOND_MOMENT)
    for x in SHIFTED_MAX_LEVELS:
        cols.append(lambda d, m, s, x=x: (m > x).astype(float))
        names.append(f"max_tail({x})")
        targets.append(max_tail(x))
    cols.append(lambda d, m, s: m**2)
    names.append("max_second_moment")
    targets.append(MAX_SECOND_MOMENT)
    return cols, names, targets


def verify_shifted_excursion(reps: int, N: int, rng: np.random.Generator,
                             points: int = POINTS_PER_PATH) -> list[EstimatorReport]:
    """Excursion-duration and excursion-height integrals over reflected bridges."""
    if reps < 2:
        raise ValueError(f"reps must be >= 2, got {reps}")
    _check_grid(N)
    cols, names, targets = _shifted_columns()

    def chunk(count, child):
        return _frame_terms(np.abs(_bridge_values(N, count, child)), points, child, cols)

    terms = _chunked(reps, rng, chunk)
    return [_report(name, terms[:, j], target) for j, (name, target) in enumerate(zip(names, targets))]


def verify_disintegration(reps: int, N: int, rng: np.random.Generator, cutoff: float = 0.2,
                          points: int = POINTS_PER_PATH) -> list[EstimatorReport]:
    """Both sides of the excursion disintegration for ``F = 1{duration > cutoff}``.

    Returns the unrestricted comparison and the uniform-mark variant, where
    the mark ``u`` must fall outside the excised interval (its probability
    ``1 - duration`` is used directly instead of sampling ``u``).
    """
    if not 0 < cutoff <= 1:
        raise ValueError(f"cutoff must lie in (0, 1], got {cutoff}")
    _check_grid(N)
    cols = [
        lambda d, m, s: (d > cutoff).astype(float),
        lambda d, m, s: (d > cutoff) * (1.0 - d),
    ]

    def chunk(count, child):
        return _frame_terms(_bessel_bridge_values(N, count, child), points, child, cols, law="excursion")

    terms = _chunked(reps, rng, chunk)
    return [
        _report("disintegration", terms[:, 0], disintegration_rhs(cutoff), cutoff),
        _report("disintegration_uniform_mark", terms[:, 1], disintegration_rhs(cutoff, True), cutoff),
    ]


def verify_jump_square(reps: int, N: int, rng: np.random.Generator,
                       points: int = POINTS_PER_PATH) -> EstimatorReport:
    """Upper estimate of the jump-measure integral of the squared tree discrepancy.

    A relocated subtree of height ``x`` (twice the excursion height, since
    trees come from doubled bridges) and mass ``zeta`` bounds the discrepancy
    by ``max(x, zeta)``. The tree jump measure is twice the path one. The
    target is the weaker union bound ``8 E[max^2] + 2 E[zeta^2]``.
    """
    if reps < 2:
        raise ValueError(f"reps must be >= 2, got {reps}")
    _check_grid(N)
    cols = [lambda d, m, s: 2.0 * np.maximum(2.0 * m, d) ** 2]

    def chunk(count, child):
        return _frame_terms(np.abs(_bridge_values(N, count, child)), points, child, cols)

    terms = _chunked(reps, rng, chunk)
    return _report("jump_square", terms[:, 0], JUMP_SQUARE_BOUND)


def jump_envelope(radius: float, mass: float) -> float:
    """Per-relocation discrepancy envelope used by ``verify_jump_square``."""
    return max(radius, mass)


# ---------------------------------------------------------------------------
# chain convergence


def midpoint_marginal(n: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    """``v(n) / sqrt(n)`` for encodings of uniform acyclic mappings of ``[n]``."""
    out = np.empty(samples)
    for k in range(samples):
        heights = encode_array(sample_uniform_acyclic_array(n, rng))
        out[k] = heights[n] / math.sqrt(n)
    return out


def ks_critical(samples: int, level: float = KS_LEVEL) -> float:
    return float(stats.kstwobign.isf(level) / math.sqrt(samples))


MIDPOINT_REFERENCES = {
    # twice a reflected bridge at time 1/2
    "halfnorm": stats.halfnorm,
    # twice a standard excursion at time 1/2 (chi with three degrees of freedom)
    "maxwell": stats.maxwell,
}


def chain_convergence(n: int, samples: int, rng: np.random.Generator,
                      reference: str = "halfnorm") -> EstimatorReport:
    """KS distance of the midpoint marginal from a reference law.

    ``target`` is the critical value at the 0.001 level; ``stderr`` is the
    asymptotic null standard deviation of the statistic.
    """
    if n < 1 or samples < 2:
        raise ValueError(f"need n >= 1 and samples >= 2, got n={n}, samples={samples}")
    if reference not in MIDPOINT_REFERENCES:
        raise ValueError(f"unknown reference {reference!r}; choose from {sorted(MIDPOINT_REFERENCES)}")
    x = midpoint_marginal(n, samples, rng)
    ks = float(stats.kstest(x, MIDPOINT_REFERENCES[reference].cdf).statistic)
    null_sd = float(stats.kstwobign.std() / math.sqrt(samples))
    return EstimatorReport(f"ks_midpoint_{reference}(n={n})", ks, null_sd, samples, None,
                           ks_critical(samples))


# ---------------------------------------------------------------------------
# the relocation kernel acting on labelled mappings


def permute_steps(steps: np.ndarray, v: int, d: int, w: int) -> np.ndarray:
    """Move the block ``steps[v:d]`` so that it starts where time ``w`` was."""
    if w >= d:
        return np.concatenate([steps[:v], steps[d:w], steps[v:d], steps[w:]])
    if w <= v:
        return np.concatenate([steps[:w], steps[v:d], steps[w:v], steps[d:]])
    raise ValueError(f"insertion time {w} lies inside the moved block [{v}, {d})")


def kappa_step_mapping(m: Mapping, rng: np.random.Generator) -> Mapping:
    """One relocation-kernel move on ``encode(m)``, carried back to a labelled mapping."""
    heights, labels = encode_labeled(m)
    f = rescale(encode_from_heights(heights))
    scale = math.sqrt(m.n)
    draw = kappa_plus_sample(f, rng, lattice_scale=scale)
    h = f.h
    v, d, w = (int(round(t / h)) for t in (draw.v, draw.finish, draw.w))
    steps = np.diff(heights)
    new_steps = permute_steps(steps, v, d, w)
    new_labels = permute_steps(labels, v, d, w)
    new_heights = np.concatenate([[0], np.cumsum(new_steps)])
    return decode_labeled(new_heights, new_labels)


def encode_from_heights(heights):
    return LatticePath(tuple(int(x) for x in heights))
