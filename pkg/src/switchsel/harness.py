"""Monte Carlo experiments on one-dimensional families with a singleton null.

Fixed-``n`` experiments never simulate whole paths: the switch evidence at
``n`` only needs the sufficient sums at the switch times ``2^i - 1`` and at
``n`` itself, so each replication draws one block sum per gap.  Stopping
experiments do simulate full paths (in chunks of replications) and hand
them to the compiled kernels.

Each replication owns a counter-based random stream (see :mod:`switchsel.rng`)
and the same base variates feed every criterion and every mean on a grid,
so comparative columns are paired.  Work is split into fixed chunks that are
reduced in replication order, which makes reports independent of the worker
count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from switchsel import kernels
from switchsel.config import HARNESS_FAMILIES, SimConfig
from switchsel.errors import ConfigError
from switchsel.expfam import LossKind, default_box_schedule, interior_box, loss_values
from switchsel.rng import stream
from switchsel.switchcrit import snapshot_indices, switch_log_ratio_at, switch_log_ratio_paths

KINDS = ("risk", "stopping", "power", "lil", "consistency", "decomposition")
ROBUST = ("switch", "bayes")


# --------------------------------------------------------------------------- samplers

def _uniforms(rng, size):
    # strictly inside (0, 1) so inverse cdfs stay finite
    return (rng.integers(0, 2 ** 53, size=size) + 0.5) / 2.0 ** 53


class _Sampler:
    """Observations and block sums driven by shared base variates."""

    def __init__(self, family):
        self.family = family
        self.sigma = family.params.get("sigma", 1.0)

    def base(self, rng, size):
        if self.family.name == "gaussian":
            return rng.standard_normal(size)
        return _uniforms(rng, size)

    def observations(self, base, mu):
        name = self.family.name
        if name == "gaussian":
            return mu + self.sigma * base
        if name == "bernoulli":
            return (base < mu).astype(float)
        return stats.poisson.ppf(base, mu)

    def block_sums(self, base, mu, lengths):
        """Sums over blocks of ``lengths`` observations; ``mu`` broadcasts against ``base``."""
        name = self.family.name
        if name == "gaussian":
            return lengths * mu + self.sigma * np.sqrt(lengths) * base
        if name == "bernoulli":
            return stats.binom.ppf(base, lengths, mu)
        return stats.poisson.ppf(base, lengths * mu)


# --------------------------------------------------------------------------- evidence on sums

@dataclass(frozen=True)
class _Model:
    cfg: SimConfig

    @property
    def bundle(self):
        return self.cfg.model()

    @property
    def family(self):
        return self.bundle.pair.family

    @property
    def mu0(self) -> float:
        return float(self.bundle.pair.null_point[0])

    def log_bf(self, n, T):
        """``log p_B1 - log p_B0`` from sums ``T`` (carriers cancel)."""
        T = np.asarray(T, dtype=float)[..., None]
        b = self.bundle
        return b.prior1.log_marginal_cf(n, T) - b.prior0.log_marginal_cf(n, T)

    def log_lr(self, n, T):
        """``log p_mle1 - log p_mu0``; zero where ``n == 0``."""
        T = np.asarray(T, dtype=float)
        n = np.broadcast_to(np.asarray(n, dtype=float), T.shape)
        with np.errstate(invalid="ignore", divide="ignore"):
            mu_hat = np.where(n > 0, T / np.where(n > 0, n, 1.0), self.mu0)
            fam = self.family
            out = fam.log_lik_stats(mu_hat[..., None], n, T[..., None]) \
                - fam.log_lik_stats(np.array([self.mu0]), n, T[..., None])
        return np.where(n > 0, out, 0.0)


def _harness_model(cfg: SimConfig) -> _Model:
    if cfg.family not in HARNESS_FAMILIES:
        raise ConfigError(f"the harness supports {HARNESS_FAMILIES}; got {cfg.family!r}")
    if not cfg.pair().is_singleton:
        raise ConfigError("the harness needs a singleton null model")
    return _Model(cfg)


def _aic_cut(alpha: float, df: int = 1) -> float:
    """Log likelihood-ratio cut of the level-``alpha`` conservative AIC."""
    return stats.chi2.ppf(1.0 - alpha, df) / 2.0


def _fixed_n_selects(model: _Model, cfg: SimConfig, n: int, T_snap, T_n, criteria) -> dict:
    """Selection indicators at a single ``n`` for every criterion; arrays shaped like ``T_n``."""
    out = {}
    shape = np.shape(T_n)
    need_switch = "switch" in criteria
    D_n = model.log_bf(n, T_n)
    if need_switch:
        idx = snapshot_indices(n)
        D_snap = model.log_bf(idx, T_snap)
        ls = switch_log_ratio_at(D_snap.reshape(-1, len(idx)), D_n.reshape(-1), n, cfg.model().switch_prior)
        out["switch"] = ls.reshape(shape) > math.log(cfg.gamma)
    lr = model.log_lr(n, T_n) if set(criteria) & {"aic", "bic", "hq"} else None
    for c in criteria:
        if c == "bayes":
            out[c] = D_n > 0
        elif c == "aic":
            out[c] = lr - 1.0 > -math.log(cfg.aic_t)
        elif c == "bic":
            out[c] = lr - 0.5 * math.log(n) > 0
        elif c == "hq":
            out[c] = lr - cfg.hq_c * math.log(math.log(n)) >= 0
        elif c == "always0":
            out[c] = np.zeros(shape, dtype=bool)
        elif c == "always1":
            out[c] = np.ones(shape, dtype=bool)
    return out


def _fixed_n_rejects(model: _Model, cfg: SimConfig, n: int, T_snap, T_n, criteria, alpha: float) -> dict:
    """Level-``alpha`` rejection indicators at a fixed ``n``."""
    out = {}
    shape = np.shape(T_n)
    D_n = model.log_bf(n, T_n)
    cut = -math.log(alpha) if alpha > 0 else math.inf
    if "switch" in criteria:
        idx = snapshot_indices(n)
        D_snap = model.log_bf(idx, T_snap)
        ls = switch_log_ratio_at(D_snap.reshape(-1, len(idx)), D_n.reshape(-1), n, cfg.model().switch_prior)
        out["switch"] = ls.reshape(shape) >= cut
    if "bayes" in criteria:
        out["bayes"] = D_n >= cut
    rest = [c for c in criteria if c not in ROBUST]
    if rest:
        lr = model.log_lr(n, T_n)
        for c in rest:
            if c == "aic":
                out[c] = lr >= _aic_cut(alpha) if alpha > 0 else np.zeros(shape, dtype=bool)
            elif c == "bic":
                out[c] = lr - 0.5 * math.log(n) > 0
            elif c == "hq":
                out[c] = lr - cfg.hq_c * math.log(math.log(n)) >= 0
    return out


def _prefix_points(n: int) -> np.ndarray:
    return np.unique(np.append(snapshot_indices(n), n))


def _draw_sums(cfg: SimConfig, sampler: _Sampler, purpose: str, n_index: int, reps: range,
               n: int, mus: np.ndarray):
    """Sums at the snapshot points and at ``n``: shapes ``(R, M, k)`` and ``(R, M)``."""
    points = _prefix_points(n)
    lengths = np.diff(points).astype(float)
    base = np.stack([sampler.base(stream(cfg.seed, purpose, n_index, r), lengths.size) for r in reps])
    sums = sampler.block_sums(base[:, None, :], mus[None, :, None], lengths[None, None, :])
    T = np.concatenate([np.zeros(sums.shape[:2] + (1,)), np.cumsum(sums, axis=-1)], axis=-1)
    n_snap = len(snapshot_indices(n))
    return T[..., :n_snap], T[..., -1]


def _n_ok(c: str, n: int) -> bool:
    return c != "hq" or n >= 3


# --------------------------------------------------------------------------- estimation

def _estimate_complex(model: _Model, cfg: SimConfig, n: int, T_n):
    """Complex-model estimate and the mask of replicas whose MLE was undefined."""
    fam = model.family
    lam, anchor = cfg.map_lambda, model.mu0
    map_est = (T_n + lam * anchor) / (n + lam)
    if cfg.estimator == "map":
        return map_est, np.zeros(np.shape(T_n), dtype=bool)
    raw = T_n / n
    if cfg.estimator == "truncated":
        lo, hi = default_box_schedule(fam)(n)
        return np.clip(raw, lo[0], hi[0]), np.zeros(np.shape(T_n), dtype=bool)
    undefined = ~fam.contains_batch(raw[..., None])
    return np.where(undefined, map_est, raw), undefined


def _losses(model: _Model, cfg: SimConfig, mu_true, est):
    mu_true = np.broadcast_to(mu_true, np.shape(est))
    return loss_values(LossKind(cfg.loss), mu_true[..., None], est[..., None], model.family)


# --------------------------------------------------------------------------- grids

def _loglog(n: int) -> float:
    return math.log(math.log(n)) if n >= 3 else math.nan


def mu_grid_for(cfg: SimConfig, n: int) -> np.ndarray:
    """Worst-case search grid: a shell around the null plus a few far points."""
    if cfg.mu_grid:
        return np.array(cfg.mu_grid, dtype=float)
    model = _harness_model(cfg)
    fam, mu0 = model.family, model.mu0
    lo, hi = np.array(fam.mean_space[0], dtype=float)
    box_lo, box_hi = interior_box(fam)
    half = math.sqrt(cfg.shell_width * max(_loglog(n), 0.0) / n) if n >= 3 else 1.0
    shell = np.linspace(mu0 - half, mu0 + half, cfg.shell_points)
    far = np.linspace(box_lo[0], box_hi[0], cfg.far_points) if cfg.far_points else np.empty(0)
    grid = np.concatenate([shell, far])
    grid = grid[(grid > lo) & (grid < hi)]
    return np.unique(grid)


# --------------------------------------------------------------------------- execution

def _chunks(reps: int, chunk: int) -> list[range]:
    return [range(a, min(a + chunk, reps)) for a in range(0, reps, chunk)]


def _run(cfg: SimConfig, func: Callable, items: Sequence) -> list:
    if cfg.workers <= 1 or len(items) <= 1:
        return [func(cfg, item) for item in items]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(func, [cfg] * len(items), items))


def _mean_se(values: np.ndarray, axis: int = 0):
    values = np.asarray(values, dtype=float)
    m = values.shape[axis]
    mean = values.mean(axis=axis)
    se = values.std(axis=axis, ddof=1) / math.sqrt(m) if m > 1 else np.zeros_like(mean)
    return mean, se


def _binomial_se(p, reps: int):
    return np.sqrt(np.asarray(p) * (1.0 - np.asarray(p)) / reps)


@dataclass
class Report:
    kind: str
    columns: list[str]
    rows: list[list]
    config: SimConfig
    elapsed: float = 0.0
    notes: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def where(self, **match) -> list[dict]:
        out = []
        for r in self.rows:
            d = dict(zip(self.columns, r))
            if all(d.get(k) == v for k, v in match.items()):
                out.append(d)
        return out


RiskReport = StoppingReport = PowerReport = Report


# --------------------------------------------------------------------------- risk

RISK_COLUMNS = ["row", "criterion", "n", "mu", "R_hat", "se", "ratio_loglog", "ratio_log", "reps",
                "undefined_mle_count"]


def _risk_chunk(cfg: SimConfig, item):
    n_index, reps = item
    model = _harness_model(cfg)
    n = cfg.n_grid[n_index]
    mus = mu_grid_for(cfg, n)
    sampler = _Sampler(model.family)
    T_snap, T_n = _draw_sums(cfg, sampler, "risk", n_index, reps, n, mus)
    est1, undefined = _estimate_complex(model, cfg, n, T_n)
    loss1 = _losses(model, cfg, mus[None, :], est1)
    loss0 = _losses(model, cfg, mus[None, :], np.full(np.shape(T_n), model.mu0))
    crits = [c for c in cfg.criteria if _n_ok(c, n)]
    sel = _fixed_n_selects(model, cfg, n, T_snap, T_n, crits)
    return {c: np.where(sel[c], loss1, loss0) for c in crits}, undefined


def _risk_raw(cfg: SimConfig, purpose_items):
    results = _run(cfg, _risk_chunk, purpose_items)
    per_n: dict[int, tuple[dict, np.ndarray]] = {}
    for (n_index, _), (losses, undefined) in zip(purpose_items, results):
        if n_index not in per_n:
            per_n[n_index] = ({c: [v] for c, v in losses.items()}, [undefined])
        else:
            for c, v in losses.items():
                per_n[n_index][0][c].append(v)
            per_n[n_index][1].append(undefined)
    return {i: ({c: np.concatenate(v) for c, v in d.items()}, np.concatenate(u)) for i, (d, u) in per_n.items()}


def simulate_risk(cfg: SimConfig) -> Report:
    """Per-cell risk of select-then-estimate plus the worst case over the mean grid."""
    start = time.perf_counter()
    _harness_model(cfg)
    items = [(i, r) for i in range(len(cfg.n_grid)) for r in _chunks(cfg.reps, cfg.chunk)]
    raw = _risk_raw(cfg, items)
    rows, worst = [], []
    for i, n in enumerate(cfg.n_grid):
        mus = mu_grid_for(cfg, n)
        losses, undefined = raw[i]
        undef_counts = undefined.sum(axis=0)
        for c in cfg.criteria:
            if c not in losses:
                continue
            mean, se = _mean_se(losses[c])
            for j, mu in enumerate(mus):
                rows.append(_risk_row("cell", c, n, mu, mean[j], se[j], cfg.reps, int(undef_counts[j])))
            j = int(np.argmax(mean))
            worst.append(_risk_row("worst", c, n, mus[j], mean[j], se[j], cfg.reps, int(undef_counts[j])))
    return Report("risk", RISK_COLUMNS, rows + worst, cfg, time.perf_counter() - start)


def _risk_row(kind, c, n, mu, R, se, reps, undef):
    ll = _loglog(n)
    return [kind, c, n, float(mu), float(R), float(se), n * float(R) / ll if n >= 3 else math.nan,
            n * float(R) / math.log(n) if n >= 2 else math.nan, reps, undef]


DECOMP_COLUMNS = ["criterion", "n", "mu", "R_hat", "R_hat_mle", "p_select0", "dist2", "bound", "slack",
                  "combined_se", "holds", "reps"]


def _decomp_chunk(cfg: SimConfig, item):
    n_index, reps = item
    model = _harness_model(cfg)
    n = cfg.n_grid[n_index]
    mus = mu_grid_for(cfg, n)
    T_snap, T_n = _draw_sums(cfg, _Sampler(model.family), "decomposition", n_index, reps, n, mus)
    est1 = T_n / n
    loss1 = (est1 - mus[None, :]) ** 2
    dist2 = (mus - model.mu0) ** 2
    crits = [c for c in cfg.criteria if _n_ok(c, n)]
    sel = _fixed_n_selects(model, cfg, n, T_snap, T_n, crits)
    return {c: (np.where(sel[c], loss1, dist2[None, :]), loss1, ~sel[c]) for c in crits}


def risk_decomposition_check(cfg: SimConfig) -> Report:
    """Checks ``R(delta) <= 2 R(mle) + P(select 0) * |mu1 - mu0|^2`` up to 5 paired SEs."""
    start = time.perf_counter()
    if cfg.loss != "squared_error" or cfg.estimator != "mle":
        raise ConfigError("the decomposition check needs squared_error loss and the mle estimator")
    model = _harness_model(cfg)
    items = [(i, r) for i in range(len(cfg.n_grid)) for r in _chunks(cfg.reps, cfg.chunk)]
    results = _run(cfg, _decomp_chunk, items)
    rows = []
    for i, n in enumerate(cfg.n_grid):
        mus = mu_grid_for(cfg, n)
        parts = [res for (k, _), res in zip(items, results) if k == i]
        for c in cfg.criteria:
            if c not in parts[0]:
                continue
            L = np.concatenate([p[c][0] for p in parts])
            L1 = np.concatenate([p[c][1] for p in parts])
            A0 = np.concatenate([p[c][2] for p in parts]).astype(float)
            dist2 = (mus - model.mu0) ** 2
            slack_vals = 2.0 * L1 + A0 * dist2[None, :] - L
            R, _ = _mean_se(L)
            R1, _ = _mean_se(L1)
            P0, _ = _mean_se(A0)
            slack, slack_se = _mean_se(slack_vals)
            for j, mu in enumerate(mus):
                bound = 2.0 * R1[j] + P0[j] * dist2[j]
                rows.append([c, n, float(mu), float(R[j]), float(R1[j]), float(P0[j]), float(dist2[j]),
                             float(bound), float(slack[j]), float(slack_se[j]),
                             bool(slack[j] >= -5.0 * slack_se[j]), cfg.reps])
    return Report("decomposition", DECOMP_COLUMNS, rows, cfg, time.perf_counter() - start)


# --------------------------------------------------------------------------- stopping


@dataclass(frozen=True)
class StoppingRule:
    """When evidence is inspected.  Rules only ever see the observed prefix.

    ``kind`` is one of ``fixed`` (look once, at ``n``), ``crossing`` (look at
    every step up to ``horizon``) or ``peek`` (every ``every``-th step).
    Rejection happens at the first inspected step whose evidence is at most
    alpha.
    """

    kind: str = "crossing"
    horizon: int = 10000
    n: int = 0
    every: int = 1

    def __post_init__(self):
        if self.kind not in ("fixed", "crossing", "peek"):
            raise ConfigError(f"unknown stopping rule {self.kind!r}")
        if self.horizon < 1 or self.every < 1:
            raise ConfigError("horizon and peek interval must be positive")
        if self.kind == "fixed" and not 1 <= self.n <= self.horizon:
            raise ConfigError("a fixed-n rule needs 1 <= n <= horizon")

    @classmethod
    def fixed(cls, n: int):
        return cls("fixed", horizon=n, n=n)

    @classmethod
    def first_crossing(cls, horizon: int):
        return cls("crossing", horizon=horizon)

    @classmethod
    def data_peek(cls, every: int, horizon: int):
        return cls("peek", horizon=horizon, every=every)

    def mask(self, n_min: int = 1) -> np.ndarray:
        idx = np.arange(self.horizon + 1)
        if self.kind == "fixed":
            return idx == self.n
        m = idx >= n_min
        if self.kind == "peek":
            m &= idx % self.every == 0
        return m


def _paths(cfg: SimConfig, model: _Model, purpose: str, grid_index: int, reps: range, N: int, mu: float):
    sampler = _Sampler(model.family)
    T = np.zeros((len(reps), N + 1))
    for k, r in enumerate(reps):
        x = sampler.observations(sampler.base(stream(cfg.seed, purpose, grid_index, r), N), mu)
        np.cumsum(x, out=T[k, 1:])
    return T


def _score_paths(cfg: SimConfig, model: _Model, T, criteria) -> dict:
    """Per-criterion paths ``S`` and cut functions: the event of interest is ``S[n] >= cut``."""
    N = T.shape[1] - 1
    n = np.arange(N + 1, dtype=float)
    out = {}
    D = model.log_bf(n, T) if set(criteria) & set(ROBUST) else None
    lr = model.log_lr(n, T) if set(criteria) - set(ROBUST) else None
    for c in criteria:
        if c == "switch":
            out[c] = switch_log_ratio_paths(D, cfg.model().switch_prior)
        elif c == "bayes":
            out[c] = D
        elif c == "aic":
            out[c] = lr
        elif c == "bic":
            out[c] = lr - 0.5 * np.log(np.maximum(n, 1.0))
        elif c == "hq":
            with np.errstate(divide="ignore", invalid="ignore"):
                pen = cfg.hq_c * np.log(np.log(np.maximum(n, 3.0)))
            out[c] = lr - pen
    return out


def _cut(c: str, alpha: float) -> float:
    """Threshold on the score path of criterion ``c`` at level ``alpha``."""
    if c in ROBUST:
        return -math.log(alpha) if alpha > 0 else math.inf
    if c == "aic":
        return _aic_cut(alpha) if alpha > 0 else math.inf
    return 0.0  # bic, hq: the selection event itself


def _stopping_chunk(cfg: SimConfig, item):
    reps, rule, criteria = item
    model = _harness_model(cfg)
    T = _paths(cfg, model, "stopping", 0, reps, rule.horizon, model.mu0)
    scores = _score_paths(cfg, model, T, criteria)
    out = {}
    for c in criteria:
        mask = rule.mask(max(cfg.n_min, 3) if c == "hq" else max(cfg.n_min, 1))
        for a in cfg.alphas:
            out[(c, a)] = kernels.first_crossing(scores[c], _cut(c, a), mask)
    return out


STOPPING_COLUMNS = ["criterion", "rule", "alpha", "horizon", "reject_freq", "se", "bound", "reps"]


def simulate_stopping(cfg: SimConfig, rule: StoppingRule | None = None, criterion: str | None = None) -> Report:
    """Frequency, under the null, that ``rule`` ever rejects within each horizon."""
    start = time.perf_counter()
    _harness_model(cfg)
    rule = rule or (StoppingRule.data_peek(cfg.peek, cfg.horizon) if cfg.peek > 1
                    else StoppingRule.first_crossing(cfg.horizon))
    criteria = [criterion] if criterion else [c for c in cfg.criteria if c in ("switch", "bayes", "aic", "bic", "hq")]
    if not criteria:
        raise ConfigError("no stopping criteria configured")
    items = [(r, rule, tuple(criteria)) for r in _chunks(cfg.reps, cfg.chunk)]
    results = _run(cfg, _stopping_chunk, items)
    horizons = sorted({h for h in cfg.horizons if h <= rule.horizon} | {rule.horizon})
    rows = []
    for c in criteria:
        for a in cfg.alphas:
            first = np.concatenate([res[(c, a)] for res in results])
            for h in horizons:
                p = float(np.mean((first >= 0) & (first <= h)))
                se = float(_binomial_se(p, cfg.reps))
                rows.append([c, rule.kind, a, h, p, se, a + 3.0 * math.sqrt(a * (1 - a) / cfg.reps), cfg.reps])
    return Report("stopping", STOPPING_COLUMNS, rows, cfg, time.perf_counter() - start,
                  notes={"rule": rule.__dict__})


LIL_COLUMNS = ["criterion", "param", "horizon", "freq", "se", "reps"]


def _lil_chunk(cfg: SimConfig, reps: range):
    model = _harness_model(cfg)
    N = max(cfg.horizons)
    T = _paths(cfg, model, "lil", 0, reps, N, model.mu0)
    lr = model.log_lr(np.arange(N + 1, dtype=float), T)
    ever = StoppingRule.first_crossing(N).mask(max(cfg.n_min, 1))
    n = np.arange(N + 1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        hq_pen = cfg.hq_c * np.log(np.log(np.maximum(n, 3.0)))
    hq_mask = StoppingRule.first_crossing(N).mask(max(cfg.n_min, 3))
    z = stats.norm.ppf(1.0 - cfg.alpha / 2.0)
    fixed = StoppingRule.fixed(N).mask()
    return {
        "aic": kernels.first_crossing(lr - 1.0, -math.log(cfg.aic_t), ever),
        "hq": kernels.first_crossing(lr - hq_pen, 0.0, hq_mask),
        "aic_fixed_lrt": kernels.first_crossing(lr, _aic_cut(cfg.alpha), fixed),
        "aic_fixed_z": kernels.first_crossing(lr - 1.0, -math.log(2.0 / z ** 2), fixed),
    }


def lil_failure_demo(cfg: SimConfig) -> Report:
    """How often AIC and Hannan-Quinn ever pick the complex model under the null.

    Also reports two fixed-``n`` AIC anchors at the largest horizon: the
    likelihood-ratio-test calibration and the ``t = 2 / z^2`` calibration.
    """
    start = time.perf_counter()
    _harness_model(cfg)
    results = _run(cfg, _lil_chunk, _chunks(cfg.reps, cfg.chunk))
    first = {k: np.concatenate([r[k] for r in results]) for k in results[0]}
    params = {"aic": cfg.aic_t, "hq": cfg.hq_c, "aic_fixed_lrt": cfg.alpha, "aic_fixed_z": cfg.alpha}
    rows = []
    for key, hs in (("aic", cfg.horizons), ("hq", cfg.horizons),
                    ("aic_fixed_lrt", [max(cfg.horizons)]), ("aic_fixed_z", [max(cfg.horizons)])):
        for h in hs:
            p = float(np.mean((first[key] >= 0) & (first[key] <= h)))
            rows.append([key, params[key], h, p, float(_binomial_se(p, cfg.reps)), cfg.reps])
    return Report("lil", LIL_COLUMNS, rows, cfg, time.perf_counter() - start)


# --------------------------------------------------------------------------- power

POWER_COLUMNS = ["scale", "n", "s", "mu", "f_n", "criterion", "reject_freq", "se", "reps"]


def _power_mus(cfg: SimConfig, model: _Model, n: int, scale: str) -> np.ndarray:
    h = _loglog(n) if scale == "loglog" else math.log(n)
    return model.mu0 + np.sqrt(np.asarray(cfg.s_grid, dtype=float) * max(h, 0.0) / n)


def _power_chunk(cfg: SimConfig, item):
    n_index, reps = item
    model = _harness_model(cfg)
    n = cfg.n_grid[n_index]
    crits = [c for c in cfg.criteria if c in ("switch", "bayes", "aic", "bic", "hq") and _n_ok(c, n)]
    out = {}
    for scale in cfg.scales:
        mus = _power_mus(cfg, model, n, scale)
        inside = model.family.contains_batch(mus[:, None])
        mus = np.where(inside, mus, model.mu0)
        T_snap, T_n = _draw_sums(cfg, _Sampler(model.family), "power", n_index, reps, n, mus)
        out[scale] = _fixed_n_rejects(model, cfg, n, T_snap, T_n, crits, cfg.alpha)
    return out


def simulate_power(cfg: SimConfig) -> Report:
    """Rejection frequency at level ``alpha`` along alternatives shrinking with ``n``."""
    start = time.perf_counter()
    model = _harness_model(cfg)
    items = [(i, r) for i in range(len(cfg.n_grid)) for r in _chunks(cfg.reps, cfg.chunk)]
    results = _run(cfg, _power_chunk, items)
    rows = []
    for i, n in enumerate(cfg.n_grid):
        parts = [res for (k, _), res in zip(items, results) if k == i]
        for scale in cfg.scales:
            mus = _power_mus(cfg, model, n, scale)
            inside = model.family.contains_batch(mus[:, None])
            rej = {c: np.concatenate([p[scale][c] for p in parts]).astype(float) for c in parts[0][scale]}
            ll = _loglog(n)
            for j, s in enumerate(cfg.s_grid):
                if not inside[j]:
                    continue
                f_n = n * (mus[j] - model.mu0) ** 2 / ll if n >= 3 else math.nan
                for c, v in rej.items():
                    p = float(v[:, j].mean())
                    rows.append([scale, n, float(s), float(mus[j]), float(f_n), c, p,
                                 float(_binomial_se(p, cfg.reps)), cfg.reps])
                if "switch" in rej and "bayes" in rej:
                    diff, se = _mean_se(rej["switch"][:, j] - rej["bayes"][:, j])
                    rows.append([scale, n, float(s), float(mus[j]), float(f_n), "switch-bayes",
                                 float(diff), float(se), cfg.reps])
    return Report("power", POWER_COLUMNS, rows, cfg, time.perf_counter() - start)


# --------------------------------------------------------------------------- consistency

CONSISTENCY_COLUMNS = ["truth", "mu", "n", "criterion", "p_select0", "p_select1", "se", "reps"]


def _truths(cfg: SimConfig, model: _Model) -> list[tuple[str, float]]:
    out = [("null", model.mu0)]
    alt = model.mu0 + cfg.alt_offset
    if model.family.contains([alt]):
        out.append(("alternative", alt))
    return out


def _consistency_chunk(cfg: SimConfig, item):
    n_index, reps = item
    model = _harness_model(cfg)
    n = cfg.n_grid[n_index]
    mus = np.array([m for _, m in _truths(cfg, model)])
    T_snap, T_n = _draw_sums(cfg, _Sampler(model.family), "consistency", n_index, reps, n, mus)
    crits = [c for c in cfg.criteria if _n_ok(c, n)]
    return _fixed_n_selects(model, cfg, n, T_snap, T_n, crits)


def consistency_trace(cfg: SimConfig) -> Report:
    """Per-``n`` selection frequencies under the null and under a fixed alternative."""
    start = time.perf_counter()
    model = _harness_model(cfg)
    items = [(i, r) for i in range(len(cfg.n_grid)) for r in _chunks(cfg.reps, cfg.chunk)]
    results = _run(cfg, _consistency_chunk, items)
    truths = _truths(cfg, model)
    rows = []
    for i, n in enumerate(cfg.n_grid):
        parts = [res for (k, _), res in zip(items, results) if k == i]
        for j, (label, mu) in enumerate(truths):
            for c in parts[0]:
                p1 = float(np.concatenate([p[c] for p in parts])[:, j].mean())
                rows.append([label, float(mu), n, c, 1.0 - p1, p1, float(_binomial_se(p1, cfg.reps)), cfg.reps])
    return Report("consistency", CONSISTENCY_COLUMNS, rows, cfg, time.perf_counter() - start)


# --------------------------------------------------------------------------- dispatch and output

def simulate(kind: str, cfg: SimConfig) -> Report:
    ops = {
        "risk": simulate_risk,
        "stopping": simulate_stopping,
        "power": simulate_power,
        "lil": lil_failure_demo,
        "consistency": consistency_trace,
        "decomposition": risk_decomposition_check,
    }
    if kind not in ops:
        raise ConfigError(f"unknown simulation kind {kind!r}; valid kinds: {', '.join(KINDS)}")
    return ops[kind](cfg)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (int, np.integer)):
        return int(v)
    return v


def csv_body(report: Report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(report.columns)
    for row in report.rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: Report, out_path, manifest: dict) -> tuple[Path, Path]:
    """Write ``<out>.csv`` and ``<out>.json``; the manifest leads the CSV as ``#`` lines."""
    out = Path(out_path)
    stem = out.with_suffix("") if out.suffix in (".csv", ".json") else out
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    header = "".join(f"# {k}: {json.dumps(v, sort_keys=True)}\n" for k, v in manifest.items())
    payload = {
        "manifest": manifest,
        "columns": report.columns,
        "rows": [[_json_value(v) for v in row] for row in report.rows],
        "notes": report.notes,
    }
    _atomic_write(csv_path, header + csv_body(report))
    _atomic_write(json_path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path
