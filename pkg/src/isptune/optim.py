"""Parameter abstraction and the gradient-free optimizer stack.

Physical tuning parameters are mapped onto the unit cube (optionally through
shrunken prior bounds), searched globally by an artificial bee colony and
refined locally by Nelder-Mead or a subspace-partitioned variant of it
(subplex).  The two-stage combination initializes the local search at the
global incumbent; a ladder of related problems can instead warm-start the
local search directly.

All methods are deterministic for a fixed seed, keep every iterate inside
[0, 1]^d, and report a monotone best-so-far trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

TuningVector = np.ndarray  # shape (d,), all components in [0, 1]


@dataclass(frozen=True)
class ParamSpec:
    """One tunable parameter: physical range plus optional prior sub-range."""

    name: str
    physical_min: float
    physical_max: float
    prior_min: float | None = None
    prior_max: float | None = None

    def __post_init__(self):
        if not self.physical_min < self.physical_max:
            raise ValueError(f"{self.name}: physical_min must be < physical_max")
        lo = self.physical_min if self.prior_min is None else self.prior_min
        hi = self.physical_max if self.prior_max is None else self.prior_max
        if not (self.physical_min <= lo < hi <= self.physical_max):
            raise ValueError(f"{self.name}: prior bounds must nest inside physical bounds")
        object.__setattr__(self, "prior_min", lo)
        object.__setattr__(self, "prior_max", hi)

    def with_prior(self, lo: float, hi: float) -> "ParamSpec":
        return replace(self, prior_min=lo, prior_max=hi)


def normalize(spec: ParamSpec, physical: float) -> float:
    """Affine map prior_min -> 0.0, prior_max -> 1.0."""
    if not (spec.prior_min <= physical <= spec.prior_max):
        raise ValueError(
            f"{spec.name}: {physical} outside prior bounds [{spec.prior_min}, {spec.prior_max}]"
        )
    return (physical - spec.prior_min) / (spec.prior_max - spec.prior_min)


def denormalize(spec: ParamSpec, unit: float) -> float:
    return spec.prior_min + unit * (spec.prior_max - spec.prior_min)


def normalize_params(specs: list[ParamSpec], values: dict[str, float]) -> TuningVector:
    return np.array([normalize(s, values[s.name]) for s in specs])


def denormalize_vector(specs: list[ParamSpec], x: TuningVector) -> dict[str, float]:
    return {s.name: denormalize(s, float(u)) for s, u in zip(specs, x)}


@dataclass
class AbcConfig:
    sn: int = 40                 # food sources / population size
    limit: int | None = None     # scout trigger; defaults to sn * d
    max_evals: int = 4000


@dataclass
class LocalConfig:
    method: str = "subplex"      # "subplex" | "nelder_mead"
    init_step: float = 0.1
    x_tol: float = 1e-4
    f_tol: float = 1e-8
    max_evals: int = 2000
    subspace_min: int = 2
    subspace_max: int = 5


@dataclass
class OptimConfig:
    abc: AbcConfig = field(default_factory=AbcConfig)
    local: LocalConfig = field(default_factory=LocalConfig)
    stage_split: float = 0.6     # fraction of two-stage budget spent globally
    max_evals: int = 4000        # total two-stage budget
    seed: int = 0

    def __post_init__(self):
        if self.abc.sn < 4:
            raise ValueError("population size must be >= 4")
        if not 2 <= self.local.subspace_min <= self.local.subspace_max:
            raise ValueError("need 2 <= subspace_min <= subspace_max")


@dataclass
class OptimResult:
    best: TuningVector
    best_f: float
    evals_used: int
    trace: list[tuple[int, float]]  # (eval index, best-so-far f), improvements only


class _BudgetExhausted(Exception):
    pass


class _Tracker:
    """Counts evaluations and keeps the best-so-far incumbent and trace."""

    def __init__(self, f, max_evals: int, offset: int = 0, initial_best: float = np.inf):
        self._f = f
        self.max_evals = max_evals
        self.offset = offset
        self.evals = 0
        self.best_f = initial_best
        self.best_x: TuningVector | None = None
        self.trace: list[tuple[int, float]] = []

    @property
    def remaining(self) -> int:
        return self.max_evals - self.evals

    def __call__(self, x: TuningVector) -> float:
        if self.evals >= self.max_evals:
            raise _BudgetExhausted
        self.evals += 1
        fx = float(self._f(x))
        if fx < self.best_f or self.best_x is None:
            self.best_f = min(fx, self.best_f)
            self.best_x = np.array(x, copy=True)
            self.trace.append((self.offset + self.evals, self.best_f))
        return fx

    def result(self) -> OptimResult:
        if self.best_x is None:
            raise ValueError("no evaluations performed")
        return OptimResult(self.best_x.copy(), self.best_f, self.evals, list(self.trace))


def _project(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Artificial bee colony
# ---------------------------------------------------------------------------

def abc_optimize(f, d: int, cfg: OptimConfig, seed: int | None = None) -> OptimResult:
    """Standard ABC on [0,1]^d: employed / onlooker / scout phases.

    Employed and onlooker bees perturb one random dimension j of source i by
    phi * (x_ij - x_kj), phi ~ U(-1, 1), k != i, clamped to the cube, with
    greedy acceptance.  Onlookers pick sources with probability proportional
    to 1 / (1 + f_i); sources stuck for `limit` trials are re-initialized.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    sn = cfg.abc.sn
    if cfg.abc.max_evals < sn:
        raise ValueError(f"budget {cfg.abc.max_evals} cannot initialize {sn} food sources")
    limit = cfg.abc.limit if cfg.abc.limit is not None else sn * d
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    obj = _Tracker(f, cfg.abc.max_evals)

    xs = rng.random((sn, d))
    fs = np.empty(sn)
    trials = np.zeros(sn, dtype=np.int64)
    try:
        for i in range(sn):
            fs[i] = obj(xs[i])

        def try_improve(i: int) -> None:
            j = int(rng.integers(d))
            k = int(rng.integers(sn - 1))
            if k >= i:
                k += 1
            phi = rng.uniform(-1.0, 1.0)
            cand = xs[i].copy()
            cand[j] = min(1.0, max(0.0, xs[i, j] + phi * (xs[i, j] - xs[k, j])))
            fc = obj(cand)
            if fc < fs[i]:
                xs[i], fs[i], trials[i] = cand, fc, 0
            else:
                trials[i] += 1

        while obj.remaining > 0:
            for i in range(sn):
                try_improve(i)
            probs = 1.0 / (1.0 + fs)
            cum = np.cumsum(probs / probs.sum())
            for _ in range(sn):
                i = min(int(np.searchsorted(cum, rng.random(), side="right")), sn - 1)
                try_improve(i)
            for i in range(sn):
                if trials[i] >= limit:
                    xs[i] = rng.random(d)
                    fs[i] = obj(xs[i])
                    trials[i] = 0
    except _BudgetExhausted:
        pass
    return obj.result()


# ---------------------------------------------------------------------------
# Nelder-Mead simplex with box projection
# ---------------------------------------------------------------------------

_NM_REFLECT = 1.0
_NM_EXPAND = 2.0
_NM_CONTRACT = 0.5
_NM_SHRINK = 0.5


def _initial_simplex(x0: np.ndarray, steps: np.ndarray) -> list[np.ndarray]:
    verts = [_project(np.asarray(x0, dtype=np.float64))]
    for i, h in enumerate(steps):
        v = verts[0].copy()
        # reflect the offset inward at the cube boundary
        v[i] = v[i] + h if v[i] + h <= 1.0 else v[i] - h
        verts.append(_project(v))
    return verts


def _nm_core(obj, x0: np.ndarray, steps: np.ndarray, x_tol: float, f_tol: float,
             max_evals: int) -> None:
    """Full Nelder-Mead (reflect/expand/contract/shrink) through a tracker.

    Runs until the simplex collapses below x_tol, the f spread falls below
    f_tol, or `max_evals` of this call's own evaluations are spent.  Results
    live in the tracker; budget exhaustion propagates as _BudgetExhausted.
    """
    used = 0

    def ev(x):
        nonlocal used
        if used >= max_evals:
            raise _BudgetExhausted
        used += 1
        return obj(x)

    verts = _initial_simplex(x0, steps)
    try:
        fs = [ev(v) for v in verts]
        while True:
            order = np.argsort(fs, kind="stable")
            verts = [verts[i] for i in order]
            fs = [fs[i] for i in order]
            spread = max(np.max(np.abs(v - verts[0])) for v in verts[1:])
            if spread < x_tol or fs[-1] - fs[0] < f_tol:
                return
            centroid = np.mean(verts[:-1], axis=0)
            xr = _project(centroid + _NM_REFLECT * (centroid - verts[-1]))
            fr = ev(xr)
            if fr < fs[0]:
                xe = _project(centroid + _NM_EXPAND * (centroid - verts[-1]))
                fe = ev(xe)
                verts[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
            elif fr < fs[-2]:
                verts[-1], fs[-1] = xr, fr
            else:
                if fr < fs[-1]:  # outside contraction
                    xc = _project(centroid + _NM_CONTRACT * (xr - centroid))
                    fc = ev(xc)
                    accept = fc <= fr
                else:  # inside contraction
                    xc = _project(centroid - _NM_CONTRACT * (centroid - verts[-1]))
                    fc = ev(xc)
                    accept = fc < fs[-1]
                if accept:
                    verts[-1], fs[-1] = xc, fc
                else:
                    for i in range(1, len(verts)):
                        verts[i] = _project(verts[0] + _NM_SHRINK * (verts[i] - verts[0]))
                        fs[i] = ev(verts[i])
    except _BudgetExhausted:
        if used >= max_evals:
            return  # local cap hit; the shared tracker may still have budget
        raise


def nelder_mead(f, x0: TuningVector, cfg: OptimConfig) -> OptimResult:
    obj = _Tracker(f, cfg.local.max_evals)
    steps = np.full(len(x0), cfg.local.init_step)
    try:
        _nm_core(obj, x0, steps, cfg.local.x_tol, cfg.local.f_tol, cfg.local.max_evals)
    except _BudgetExhausted:
        pass
    return obj.result()


# ---------------------------------------------------------------------------
# Subplex: subspace-partitioned Nelder-Mead
# ---------------------------------------------------------------------------

def _partition_sizes(d: int, smin: int, smax: int) -> list[int]:
    if d <= smax:
        return [d]
    nsub = -(-d // smax)  # ceil
    base, rem = divmod(d, nsub)
    sizes = [base + 1] * rem + [base] * (nsub - rem)
    assert all(smin <= s <= smax for s in sizes)
    return sizes


def subplex(f, x0: TuningVector, cfg: OptimConfig) -> OptimResult:
    """Rowan-style subplex loop.

    Dimensions are ranked by the absolute components of the last progress
    vector and partitioned into subspaces of bounded size; Nelder-Mead runs
    inside each subspace with the other coordinates frozen.  Step sizes pass
    progress through and shrink by 0.25 where a cycle made none.
    """
    lc = cfg.local
    d = len(x0)
    obj = _Tracker(f, lc.max_evals)
    x = _project(np.asarray(x0, dtype=np.float64))
    steps = np.full(d, lc.init_step)
    progress = steps.copy()
    inner_cap = 50 * (lc.subspace_max + 1)

    try:
        obj(x)
        while obj.remaining > 0:
            ranked = np.argsort(-np.abs(progress), kind="stable")
            sizes = _partition_sizes(d, lc.subspace_min, lc.subspace_max)
            x_prev = x.copy()
            start = 0
            for size in sizes:
                dims = ranked[start:start + size]
                start += size
                if obj.remaining <= size + 1:
                    raise _BudgetExhausted

                def sub_f(u, dims=dims):
                    full = x.copy()
                    full[dims] = u
                    return obj(full)

                _nm_core(sub_f, x[dims], steps[dims], lc.x_tol, lc.f_tol,
                         min(inner_cap, obj.remaining))
                if obj.best_x is not None:
                    x = obj.best_x.copy()
            delta = x - x_prev
            if np.max(np.abs(delta)) < lc.x_tol:
                break
            moved = np.abs(delta) > 0.0
            steps = np.where(moved, np.abs(delta), steps * 0.25)
            steps = np.clip(steps, lc.x_tol, 0.5)
            progress = delta
    except _BudgetExhausted:
        pass
    return obj.result()


_LOCAL_METHODS = {"subplex": subplex, "nelder_mead": nelder_mead}


def _run_local(f, x0: TuningVector, cfg: OptimConfig, budget: int, offset: int,
               initial_best: float) -> OptimResult:
    method = _LOCAL_METHODS[cfg.local.method]
    local_cfg = replace(cfg, local=replace(cfg.local, max_evals=budget))
    res = method(f, x0, local_cfg)
    res.trace = [(i + offset, v) for i, v in res.trace if v < initial_best]
    return res


def two_stage(f, d: int, cfg: OptimConfig, seed: int | None = None) -> OptimResult:
    """Global ABC stage followed by local refinement of its incumbent."""
    total = cfg.max_evals
    if total < cfg.abc.sn:
        raise ValueError(f"total budget {total} below population size {cfg.abc.sn}")
    g_budget = max(cfg.abc.sn, int(round(cfg.stage_split * total)))
    abc_cfg = replace(cfg, abc=replace(cfg.abc, max_evals=min(g_budget, total)))
    stage1 = abc_optimize(f, d, abc_cfg, seed=seed)

    l_budget = total - stage1.evals_used
    if l_budget <= 0:
        return stage1
    stage2 = _run_local(f, stage1.best, cfg, l_budget, stage1.evals_used, stage1.best_f)
    if stage2.best_f < stage1.best_f:
        best, best_f = stage2.best, stage2.best_f
    else:
        best, best_f = stage1.best, stage1.best_f
    return OptimResult(best, best_f, stage1.evals_used + stage2.evals_used,
                       stage1.trace + stage2.trace)


def warm_start_local(f, x_init: TuningVector, cfg: OptimConfig) -> OptimResult:
    """Skip the global stage: local search from a prior (lower-gain) result."""
    return _LOCAL_METHODS[cfg.local.method](f, x_init, cfg)
