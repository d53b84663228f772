"""The iterative matching engine.

A run takes a correlated pair, preprocesses it into directed matrices,
builds seed-anchored vertex sets, then alternates between computing
normalized degrees into the current sets and thresholding sign-mixed
linear statistics of those degrees to produce the next, larger family of
sets.  Finishing scores every cross pair of vertices through the final
test directions and assembles a vertex map.

Desk-scale defaults differ deliberately from the asymptotic prescription:
the threshold defaults to 1.0 (so sets keep a constant fraction of
vertices), the set-count growth divisor defaults to ``k0 / 2`` and the
iteration stops on a set-count cap or a step cap.  The idealized values
remain reachable through ``RunConfig``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import gaussquad
from ._rng import stream
from .errors import (
    EtaSelectionError,
    ParameterError,
    SamplingError,
    StepError,
    SubspaceError,
)
from .model import CorrelatedPair, DirectedPair, preprocess
from .spectral import (
    EtaSet,
    SpectralBands,
    band_select,
    constrained_subspace,
    nearest_center_select,
    select_eta,
    sym_eig,
)

SEEDED = "oracle-seeded"
SEEDLESS = "seedless"
FIRST_HIT = "first-hit"
ARGMAX = "argmax"


@dataclass(frozen=True)
class RunConfig:
    """All tunables of a matching run.

    ``varkappa`` and ``sigma_threshold`` default to ``k0 / 2`` and
    ``theta`` respectively when left as ``None``.  ``init_corr_mode``
    selects which correlation parameterizes the initial cross proxy:
    ``"directed"`` uses the preprocessed pair's effective correlation
    (the default, consistent with how every later step is scaled) and
    ``"pair"`` uses the raw pair correlation.
    """

    n: int
    epsilon: float
    theta: float = 1.0
    k0: int = 12
    varkappa: float | None = None
    k_max: int = 256
    t_max: int = 6
    sigma_threshold: float | None = None
    match_threshold_factor: float = 0.01
    resample_budget: int = 100
    finishing_mode: str = ARGMAX
    seed: int = 0
    seed_mode: str = SEEDED
    init_corr_mode: str = "directed"
    enumeration_budget: int = 100_000
    strict_steps: bool = False
    bands: SpectralBands = SpectralBands()
    eta_tol: float = 1e-8
    quad_tol: float = 1e-10
    rank_tol: float = 1e-8

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"n must be >= 2, got {self.n}")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ParameterError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.k0 < 1:
            raise ParameterError(f"k0 must be >= 1, got {self.k0}")
        if self.varkappa is not None and not (self.varkappa > 0):
            raise ParameterError(f"varkappa must be positive, got {self.varkappa}")
        if int(self.k0**2 / self.varkappa_value) < self.k0:
            raise ParameterError(
                f"set-count recursion must not shrink: k0^2/varkappa < k0 "
                f"(k0={self.k0}, varkappa={self.varkappa_value})"
            )
        if self.sigma_threshold is not None and not (self.sigma_threshold > 0):
            raise ParameterError("sigma_threshold must be positive")
        if self.match_threshold_factor <= 0:
            raise ParameterError("match_threshold_factor must be positive")
        if self.finishing_mode not in (FIRST_HIT, ARGMAX):
            raise ParameterError(f"unknown finishing mode {self.finishing_mode!r}")
        if self.seed_mode not in (SEEDED, SEEDLESS):
            raise ParameterError(f"unknown seed mode {self.seed_mode!r}")
        if self.init_corr_mode not in ("directed", "pair"):
            raise ParameterError(f"unknown init_corr_mode {self.init_corr_mode!r}")
        if self.t_max < 0 or self.k_max < 1:
            raise ParameterError("t_max must be >= 0 and k_max >= 1")

    @property
    def varkappa_value(self) -> float:
        return self.k0 / 2.0 if self.varkappa is None else float(self.varkappa)

    @property
    def sigma_threshold_value(self) -> float:
        return self.theta if self.sigma_threshold is None else float(self.sigma_threshold)


@lru_cache(maxsize=16)
def _constants_cached(theta: float, quad_tol: float) -> gaussquad.ModelConstants:
    return gaussquad.constants(theta=theta, quad_tol=quad_tol)


def run_constants(cfg: RunConfig) -> gaussquad.ModelConstants:
    """The (cached) scalar constants for this configuration's threshold."""
    return _constants_cached(cfg.theta, cfg.quad_tol)


def _tail_params(cfg: RunConfig) -> gaussquad.TailParams:
    return gaussquad.TailParams(theta=cfg.theta, quad_tol=cfg.quad_tol)


def k_schedule(k0: int, varkappa: float, k_max: int, t_max: int) -> list[int]:
    """Planned set counts ``K_0, K_1, ...`` until a stop condition triggers."""
    ks = [int(k0)]
    while ks[-1] < k_max and len(ks) - 1 < t_max:
        nxt = int(ks[-1] ** 2 / varkappa)
        if nxt <= ks[-1]:
            break
        ks.append(nxt)
    return ks


def enumeration_count(n: int, k0: int) -> int:
    """Number of ordered seed-image candidates: the falling factorial."""
    return math.perm(n, k0)


@dataclass
class IterationState:
    """Everything indexed by iteration level.

    ``gamma[s]`` and ``pi_sets[s]`` are 0/1 indicator matrices of shape
    ``(n - k0, K_s)`` over the non-seed universes.  ``betas[s]`` holds the
    sign vectors drawn at step ``s`` (they build level ``s + 1``).
    ``etas[s]`` is filled when the test directions for level ``s`` have
    been selected.  Instances are treated as immutable once a step
    completes; ``iterate_once`` returns a new state sharing the arrays.
    """

    t: int
    K: list
    eps: list
    gamma: list
    pi_sets: list
    phi_levels: list
    psi_levels: list
    etas: list
    betas: list
    beta_hats: list
    sigmas: list
    m_history: dict
    flags: list
    seeds: tuple
    rest_v: np.ndarray
    rest_s: np.ndarray
    pos_s: np.ndarray
    alpha: float = 0.0
    gh_sub: np.ndarray = field(repr=False, default=None)
    gsh_sub: np.ndarray = field(repr=False, default=None)

    @property
    def phi_mat(self) -> np.ndarray:
        return self.phi_levels[self.t]

    @property
    def psi_mat(self) -> np.ndarray:
        return self.psi_levels[self.t]


@dataclass
class RunTrace:
    """Per-run record consumed by the diagnostics module."""

    state: IterationState
    finish_level: int
    degrees_left: np.ndarray
    degrees_right: np.ndarray
    epsilon_effective: float
    flags: tuple


@dataclass
class MatchOutcome:
    """A candidate vertex map with scores and provenance.

    ``mapping`` covers non-seed vertices only (seed assignments live in
    ``seed_pairs``); it is injective.  ``overlap`` is the edge-correlation
    objective summed over unordered pairs whose endpoints are both mapped
    (seeds included), which coincides with the full objective whenever the
    mapping is total.
    """

    mapping: dict
    scores: dict
    status: str
    seed_pairs: tuple
    candidate_id: int | None = None
    overlap: float = 0.0
    trace: RunTrace | None = None
    flags: tuple = ()

    def __post_init__(self):
        values = list(self.mapping.values())
        if len(set(values)) != len(values):
            raise ParameterError("outcome mapping must be injective")

    def full_mapping(self) -> dict:
        """Seed assignments plus matched non-seeds."""
        out = dict(self.seed_pairs)
        out.update(self.mapping)
        return out


def _initial_corr(dp: DirectedPair, cfg: RunConfig) -> float:
    if cfg.init_corr_mode == "pair":
        return min(1.0, 2.0 * dp.epsilon_effective)
    return dp.epsilon_effective


def init_sets(dp: DirectedPair, seeds, cfg: RunConfig) -> IterationState:
    """Level-0 sets: vertices with a large entry toward each seed.

    ``seeds`` is a list of ``(u, su)`` pairs; the level-0 proxies are the
    identity and ``eps_0`` times the identity, where ``eps_0`` is the
    normalized excess of the joint tail at the initial correlation.
    """
    seeds = tuple((int(u), int(su)) for u, su in seeds)
    if len(seeds) != cfg.k0:
        raise ParameterError(f"expected {cfg.k0} seed pairs, got {len(seeds)}")
    left = [u for u, _ in seeds]
    right = [su for _, su in seeds]
    if len(set(left)) != len(left) or len(set(right)) != len(right):
        raise ParameterError("seed vertices must be distinct on both sides")

    n = dp.n
    cst = run_constants(cfg)
    rest_v = np.setdiff1d(np.arange(n), np.array(left, dtype=int))
    rest_s = np.setdiff1d(np.arange(n), np.array(right, dtype=int))
    pos_s = np.full(n, -1, dtype=int)
    pos_s[rest_s] = np.arange(len(rest_s))

    thr = cfg.sigma_threshold_value
    gamma0 = (np.abs(dp.gh[np.ix_(rest_v, left)]) >= thr).astype(float)
    pi0 = (np.abs(dp.gsh[np.ix_(rest_s, right)]) >= thr).astype(float)

    c_init = _initial_corr(dp, cfg)
    if c_init == 0.0:
        eps0 = 0.0  # phi(0) == alpha^2 exactly
    else:
        phi_c = gaussquad.phi(c_init, _tail_params(cfg))
        eps0 = (phi_c - cst.alpha**2) / cst.alpha_var

    k0 = cfg.k0
    return IterationState(
        t=0,
        K=[k0],
        eps=[float(eps0)],
        gamma=[gamma0],
        pi_sets=[pi0],
        phi_levels=[np.eye(k0)],
        psi_levels=[eps0 * np.eye(k0)],
        etas=[None],
        betas=[],
        beta_hats=[],
        sigmas=[],
        m_history={},
        flags=[],
        seeds=seeds,
        rest_v=rest_v,
        rest_s=rest_s,
        pos_s=pos_s,
        alpha=cst.alpha,
        gh_sub=dp.gh[np.ix_(rest_v, rest_v)],
        gsh_sub=dp.gsh[np.ix_(rest_s, rest_s)],
    )


def normalized_degrees(gh_sub: np.ndarray, indicators: np.ndarray, alpha: float, n_total: int) -> np.ndarray:
    """Centered, scaled edge weight of every vertex into every set.

    ``D[v, k] = ((alpha - alpha^2) n)^{-1/2} sum_u (ind[u, k] - alpha) gh_sub[v, u]``.
    """
    scale = 1.0 / math.sqrt((alpha - alpha * alpha) * n_total)
    return scale * (gh_sub @ (indicators - alpha))


def degrees(dp: DirectedPair, state: IterationState, side: str = "left", level: int | None = None) -> np.ndarray:
    """Normalized degree matrix of one side at one level (default: current)."""
    lvl = state.t if level is None else level
    if side == "left":
        return normalized_degrees(state.gh_sub, state.gamma[lvl], state.alpha, dp.n)
    if side == "right":
        return normalized_degrees(state.gsh_sub, state.pi_sets[lvl], state.alpha, dp.n)
    raise ParameterError(f"side must be 'left' or 'right', got {side!r}")


def m_pair(state: IterationState, alpha: float, n: int, t: int, s: int):
    """Intersection proxies between levels ``t`` and ``s``, cached.

    Entry ``(i, j)`` of the first matrix is
    ``(|G_i^t & G_j^s| - alpha |G_i^t| - alpha |G_j^s| + alpha^2 n) / ((alpha - alpha^2) n)``
    and the second is the analogue on the other side.
    """
    key = (t, s)
    if key in state.m_history:
        return state.m_history[key]
    av = alpha - alpha * alpha

    def build(ind_t, ind_s):
        inter = ind_t.T @ ind_s
        szt = ind_t.sum(axis=0)
        szs = ind_s.sum(axis=0)
        return (inter - alpha * szt[:, None] - alpha * szs[None, :] + alpha**2 * n) / (av * n)

    out = (
        build(state.gamma[t], state.gamma[s]),
        build(state.pi_sets[t], state.pi_sets[s]),
    )
    state.m_history[key] = out
    return out


def history_constraints(state: IterationState, alpha: float, n: int, t: int) -> list:
    """Cross-level intersection matrices that constrain level ``t`` directions.

    Two matrices per earlier level, so ``2 * sum(K_s for s < t)`` scalar
    constraints in total.
    """
    constraints = []
    for s in range(t):
        mg, mp = m_pair(state, alpha, n, t, s)
        constraints.extend([mg, mp])
    return constraints


@dataclass(frozen=True)
class SamplingCheck:
    """Result of the four averaging conditions on a sign-vector draw."""

    passed: bool
    failed_condition: int | None
    values: dict


def check_sampling(betas: np.ndarray, beta_hats: np.ndarray, k_t: int, k_next: int, eps_t: float) -> SamplingCheck:
    """Evaluate the four cancellation conditions on drawn sign vectors.

    ``betas`` has one ``+-1`` vector per new set (``k_next`` rows); inner
    products are scaled by the inverse vector length.  The pairwise caps
    scale as ``24 sqrt(log K_t) / sqrt(K_t)`` (natural log) and the two
    fourth-power sums are capped by ``1e4`` and ``1e5 eps_t^4`` times
    ``(K_next / K_t)^2``.  Returns the first violated condition, if any.
    """
    betas = np.asarray(betas, dtype=float)
    beta_hats = np.asarray(beta_hats, dtype=float)
    if betas.shape != beta_hats.shape or betas.ndim != 2:
        raise ParameterError("betas and beta_hats must be equal-shape 2-D arrays")
    values: dict = {}
    if k_next <= 1:
        return SamplingCheck(passed=True, failed_condition=None, values=values)
    j = betas.shape[1]
    off = ~np.eye(betas.shape[0], dtype=bool)
    cap_pair = 24.0 * math.sqrt(math.log(k_t)) / math.sqrt(k_t) if k_t > 1 else 0.0

    g = (betas @ betas.T) / j
    values["max_pair"] = float(np.abs(g[off]).max())
    values["cap_pair"] = cap_pair
    if values["max_pair"] > cap_pair:
        return SamplingCheck(False, 1, values)

    gh = (beta_hats @ beta_hats.T) / j
    values["max_pair_hat"] = float(np.abs(gh[off]).max())
    values["cap_pair_hat"] = eps_t * cap_pair
    if values["max_pair_hat"] > values["cap_pair_hat"]:
        return SamplingCheck(False, 2, values)

    ratio2 = (k_next / k_t) ** 2
    values["sum4"] = float((g[off] ** 4).sum())
    values["cap_sum4"] = 1e4 * ratio2
    if values["sum4"] > values["cap_sum4"]:
        return SamplingCheck(False, 3, values)

    values["sum4_hat"] = float((gh[off] ** 4).sum())
    values["cap_sum4_hat"] = 1e5 * eps_t**4 * ratio2
    if values["sum4_hat"] > values["cap_sum4_hat"]:
        return SamplingCheck(False, 4, values)
    return SamplingCheck(True, None, values)


def _select_span(vals, vecs, lo, hi, fallback, max_count, label, flags):
    # Strict band, then the widened fallback band, then nearest-to-center.
    if lo < hi:
        basis, found = band_select(vals, vecs, lo, hi, max_count)
        if found >= max_count:
            return basis
    flo, fhi = fallback
    if flo < fhi:
        basis, found = band_select(vals, vecs, flo, fhi, max_count)
        if found >= max_count:
            flags.append(f"{label}-band-fallback")
            return basis
    flags.append(f"{label}-band-nearest")
    center = (lo + hi) / 2.0 if lo < hi else 0.0
    return nearest_center_select(vals, vecs, center, max_count)


def _prepare_level(dp: DirectedPair, state: IterationState, cfg: RunConfig, rng: np.random.Generator):
    """Spans, constrained subspace and eta directions for the current level.

    Returns the selected ``EtaSet`` (also stored on the state) plus the
    per-level flag list it generated.
    """
    t = state.t
    if state.etas[t] is not None:
        return state.etas[t], []
    cst = run_constants(cfg)
    k_t = state.K[t]
    eps_t = state.eps[t]
    flags: list = []
    bands = cfg.bands
    max_count = max(1, int(bands.target_fraction * k_t))

    vals_phi, vecs_phi = sym_eig(state.phi_levels[t])
    span_phi = _select_span(
        vals_phi, vecs_phi, bands.phi_lo, bands.phi_hi, bands.fallback_phi, max_count, "phi", flags
    )
    vals_psi, vecs_psi = sym_eig(state.psi_levels[t])
    span_psi = _select_span(
        vals_psi,
        vecs_psi,
        bands.psi_lo_mult * eps_t,
        bands.psi_hi_mult * eps_t,
        (bands.fallback_psi_mult[0] * eps_t, bands.fallback_psi_mult[1] * eps_t),
        max_count,
        "psi",
        flags,
    )

    constraints = history_constraints(state, cst.alpha, dp.n, t)
    try:
        v_basis = constrained_subspace(span_phi, span_psi, constraints, rank_tol=cfg.rank_tol)
    except SubspaceError as exc:
        raise StepError(f"level {t}: {exc}", step=t, kind="subspace") from exc

    j_nominal = max(1, k_t // 12)
    j = min(j_nominal, v_basis.shape[1])
    if j < j_nominal:
        flags.append(f"eta-count-reduced:{j_nominal}->{j}")
    mg_tt, mp_tt = m_pair(state, cst.alpha, dp.n, t, t)
    try:
        eta_set = select_eta(
            v_basis,
            mg_tt,
            mp_tt,
            state.psi_levels[t],
            state.phi_levels[t],
            eps_t,
            j,
            rng,
            eta_tol=cfg.eta_tol,
        )
    except EtaSelectionError as exc:
        raise StepError(f"level {t}: {exc}", step=t, kind="eta") from exc
    flags.extend(eta_set.flags)
    state.etas[t] = eta_set
    state.flags.extend(flags)
    return eta_set, flags


def iterate_once(dp: DirectedPair, state: IterationState, cfg: RunConfig, rng: np.random.Generator) -> IterationState:
    """One full iteration step: level ``t`` state in, level ``t + 1`` out.

    Selects test directions, draws sign vectors (resampling until the four
    averaging conditions hold), mixes the directions into threshold
    statistics of the normalized degrees, and assembles the next level's
    sets and proxy matrices.
    """
    t = state.t
    cst = run_constants(cfg)
    k_t = state.K[t]
    eps_t = state.eps[t]
    eps_eff = dp.epsilon_effective

    k_next = int(k_t**2 / cfg.varkappa_value)
    if k_next <= k_t:
        raise StepError(
            f"level {t}: set-count recursion exhausted ({k_t} -> {k_next})",
            step=t,
            kind="growth",
        )

    eta_set, flags = _prepare_level(dp, state, cfg, rng)
    j = eta_set.count

    # Signal recursion: the averaged cross form, scaled by the effective
    # correlation, squared and normalized by the curvature constant.
    mean_w = float(eta_set.psi_quad.mean())
    eps_next = cst.iota / cst.alpha_var * (eps_eff * mean_w) ** 2

    weights = eta_set.psi_quad.copy()
    if np.any(weights < 0):
        flags.append(f"negative-psi-quad:{int((weights < 0).sum())}")
        weights = np.clip(weights, 0.0, None)
    root_w = np.sqrt(weights)

    check = None
    betas = beta_hats = None
    for _attempt in range(cfg.resample_budget):
        betas = rng.integers(0, 2, size=(k_next, j)).astype(float) * 2.0 - 1.0
        beta_hats = betas * root_w[None, :]
        check = check_sampling(betas, beta_hats, k_t, k_next, eps_t)
        if check.passed:
            break
    if check is None or not check.passed:
        raise StepError(
            f"level {t}: resampling budget exhausted (condition {check.failed_condition})",
            step=t,
            kind="sampling",
        )

    sigmas = (betas @ eta_set.etas) / math.sqrt(j)

    d_left = normalized_degrees(state.gh_sub, state.gamma[t], cst.alpha, dp.n)
    d_right = normalized_degrees(state.gsh_sub, state.pi_sets[t], cst.alpha, dp.n)
    thr = cfg.sigma_threshold_value
    gamma_next = (np.abs(d_left @ sigmas.T) >= thr).astype(float)
    pi_next = (np.abs(d_right @ sigmas.T) >= thr).astype(float)

    params = _tail_params(cfg)
    phi_next = (gaussquad.phi_batch((betas @ betas.T) / j, params) - cst.alpha**2) / cst.alpha_var
    psi_args = eps_eff * (beta_hats @ beta_hats.T) / j
    psi_next = (gaussquad.phi_batch(psi_args, params) - cst.alpha**2) / cst.alpha_var

    return IterationState(
        t=t + 1,
        K=state.K + [k_next],
        eps=state.eps + [float(eps_next)],
        gamma=state.gamma + [gamma_next],
        pi_sets=state.pi_sets + [pi_next],
        phi_levels=state.phi_levels + [phi_next],
        psi_levels=state.psi_levels + [psi_next],
        etas=state.etas + [None],
        betas=state.betas + [betas],
        beta_hats=state.beta_hats + [beta_hats],
        sigmas=state.sigmas + [sigmas],
        m_history=state.m_history,
        flags=state.flags,
        seeds=state.seeds,
        rest_v=state.rest_v,
        rest_s=state.rest_s,
        pos_s=state.pos_s,
        alpha=state.alpha,
        gh_sub=state.gh_sub,
        gsh_sub=state.gsh_sub,
    )


def _assign_first_hit(scores: np.ndarray, threshold: float):
    """Scan columns in fixed order; first one above threshold wins.

    Already-assigned columns are skipped to keep the map injective.  A row
    with no qualifying column fails the whole candidate (empty mapping).
    """
    n_left, n_right = scores.shape
    taken = np.zeros(n_right, dtype=bool)
    mapping: dict = {}
    row_scores = np.full(n_left, -np.inf)
    for v in range(n_left):
        row = scores[v]
        row_scores[v] = row.max(initial=-np.inf)
        hit = -1
        for sv in range(n_right):
            if not taken[sv] and row[sv] >= threshold:
                hit = sv
                break
        if hit < 0:
            return {}, row_scores, "failed"
        mapping[v] = hit
        row_scores[v] = row[hit]
        taken[hit] = True
    return mapping, row_scores, "success"


def _assign_argmax(scores: np.ndarray, threshold: float):
    """Greedy globally-descending assignment with injectivity enforced."""
    n_left, n_right = scores.shape
    order = np.argsort(scores, axis=None, kind="stable")[::-1]
    row_free = np.ones(n_left, dtype=bool)
    col_free = np.ones(n_right, dtype=bool)
    mapping: dict = {}
    row_scores = np.full(n_left, -np.inf)
    remaining = min(n_left, n_right)
    for flat in order:
        v, sv = divmod(int(flat), n_right)
        if row_free[v] and col_free[sv]:
            mapping[v] = sv
            row_scores[v] = scores[v, sv]
            row_free[v] = col_free[sv] = False
            remaining -= 1
            if remaining == 0:
                break
    status = "success" if np.all(row_scores[list(mapping)] >= threshold) else "partial"
    return mapping, row_scores, status


def finish(
    dp: DirectedPair,
    state: IterationState,
    cfg: RunConfig,
    level: int | None = None,
    rng: np.random.Generator | None = None,
) -> MatchOutcome:
    """Score every cross pair through the final test directions and match.

    The score of ``(v, sv)`` is the sum over directions of the product of
    the two projected normalized degrees; the acceptance threshold is
    ``match_threshold_factor * K * eps`` at the finishing level.  When the
    requested level has no feasible direction set, the deepest feasible
    level is used instead (flagged).
    """
    cst = run_constants(cfg)
    if rng is None:
        rng = stream(cfg.seed, "finish-eta")
    flags: list = []
    levels = [level] if level is not None else list(range(state.t, -1, -1))
    eta_set = None
    use_level = None
    for lvl in levels:
        sub = _state_view(state, lvl)
        try:
            eta_set, _ = _prepare_level(dp, sub, cfg, rng)
            use_level = lvl
            break
        except StepError as exc:
            flags.append(f"finish-level-{lvl}-infeasible:{exc.kind}")
            continue
    if eta_set is None:
        raise StepError("no level admits a direction set", step=0, kind="eta")
    if level is not None and use_level != level:
        raise StepError(f"requested level {level} infeasible", step=level, kind="eta")
    if use_level != state.t:
        flags.append(f"finish-fell-back-to-level-{use_level}")

    d_left = normalized_degrees(state.gh_sub, state.gamma[use_level], cst.alpha, dp.n)
    d_right = normalized_degrees(state.gsh_sub, state.pi_sets[use_level], cst.alpha, dp.n)
    proj_left = d_left @ eta_set.etas.T
    proj_right = d_right @ eta_set.etas.T
    scores = proj_left @ proj_right.T

    threshold = cfg.match_threshold_factor * state.K[use_level] * state.eps[use_level]
    if cfg.finishing_mode == FIRST_HIT:
        mapping_idx, row_scores, status = _assign_first_hit(scores, threshold)
    else:
        mapping_idx, row_scores, status = _assign_argmax(scores, threshold)

    mapping = {int(state.rest_v[v]): int(state.rest_s[sv]) for v, sv in mapping_idx.items()}
    score_map = {int(state.rest_v[v]): float(row_scores[v]) for v in range(len(state.rest_v))}
    trace = RunTrace(
        state=state,
        finish_level=use_level,
        degrees_left=d_left,
        degrees_right=d_right,
        epsilon_effective=dp.epsilon_effective,
        flags=tuple(state.flags) + tuple(flags),
    )
    return MatchOutcome(
        mapping=mapping,
        scores=score_map,
        status=status,
        seed_pairs=state.seeds,
        trace=trace,
        flags=tuple(flags),
    )


def _state_view(state: IterationState, level: int) -> IterationState:
    """A shallow view of the state truncated to ``level`` as its top."""
    if level == state.t:
        return state
    return replace(
        state,
        t=level,
        K=state.K[: level + 1],
        eps=state.eps[: level + 1],
        gamma=state.gamma[: level + 1],
        pi_sets=state.pi_sets[: level + 1],
        phi_levels=state.phi_levels[: level + 1],
        psi_levels=state.psi_levels[: level + 1],
        etas=state.etas,  # shared so computed sets persist
    )


def overlap(pair: CorrelatedPair, mapping) -> float:
    """Edge-correlation objective of a total injective map.

    ``sum over unordered pairs of g[u, v] * gs[m(u), m(v)]``.
    """
    n = pair.n
    if isinstance(mapping, dict):
        if len(mapping) != n:
            raise ParameterError(f"mapping must be total on all {n} vertices")
        arr = np.array([mapping[i] for i in range(n)], dtype=int)
    else:
        arr = np.asarray(mapping, dtype=int)
    if arr.shape != (n,) or sorted(arr.tolist()) != list(range(n)):
        raise ParameterError("mapping must be an injective map onto 0..n-1")
    permuted = pair.gs[np.ix_(arr, arr)]
    return float(np.sum(np.triu(pair.g * permuted, k=1)))


def restricted_overlap(pair: CorrelatedPair, mapping: dict) -> float:
    """Objective over unordered pairs with both endpoints in the domain."""
    if not mapping:
        return 0.0
    idx = sorted(mapping)
    targets = np.array([mapping[i] for i in idx], dtype=int)
    sub = pair.g[np.ix_(idx, idx)]
    permuted = pair.gs[np.ix_(targets, targets)]
    return float(np.sum(np.triu(sub * permuted, k=1)))


def _run_pipeline(dp: DirectedPair, seeds, cfg: RunConfig, tag) -> MatchOutcome:
    state = init_sets(dp, seeds, cfg)
    step_flags: list = []
    while state.t < cfg.t_max and state.K[-1] < cfg.k_max:
        rng = stream(cfg.seed, "step", state.t, *tag)
        try:
            state = iterate_once(dp, state, cfg, rng)
        except StepError as exc:
            if cfg.strict_steps and exc.kind != "growth":
                raise
            step_flags.append(f"stopped-at-step-{exc.step}:{exc.kind}")
            break
    outcome = finish(dp, state, cfg, rng=stream(cfg.seed, "finish", *tag))
    outcome.flags = tuple(step_flags) + outcome.flags
    return outcome


def seeded_match(pair: CorrelatedPair, cfg: RunConfig) -> MatchOutcome:
    """Run the pipeline with the true seed pairs (first ``k0`` vertices).

    The latent permutation is consulted only to construct the seed pairs;
    the iteration itself never reads it.
    """
    if cfg.seed_mode != SEEDED:
        raise ParameterError("seeded_match requires seed_mode='oracle-seeded'")
    if pair.n != cfg.n:
        raise ParameterError(f"config n={cfg.n} does not match pair n={pair.n}")
    if cfg.k0 > pair.n // 4:
        raise ParameterError(f"k0 must be at most n/4, got k0={cfg.k0} n={pair.n}")
    dp = preprocess(pair, seed=cfg.seed)
    seeds = tuple((j, int(pair.pi[j])) for j in range(cfg.k0))
    dp = replace(dp, excluded=seeds)
    outcome = _run_pipeline(dp, seeds, cfg, tag=())
    outcome.overlap = restricted_overlap(pair, outcome.full_mapping())
    return outcome


def seedless_match(pair: CorrelatedPair, cfg: RunConfig) -> MatchOutcome:
    """Enumerate all ordered seed-image candidates and keep the best survivor.

    Every ordered ``k0``-tuple of distinct vertices is tried as the images
    of the first ``k0`` vertices; candidates whose finishing fails are
    dropped and the surviving candidate with the largest overlap wins.
    """
    if cfg.seed_mode != SEEDLESS:
        raise ParameterError("seedless_match requires seed_mode='seedless'")
    if pair.n != cfg.n:
        raise ParameterError(f"config n={cfg.n} does not match pair n={pair.n}")
    count = enumeration_count(pair.n, cfg.k0)
    if count > cfg.enumeration_budget:
        raise ParameterError(
            f"{count} candidates exceed the enumeration budget "
            f"{cfg.enumeration_budget}; use seeded mode for this size"
        )
    dp = preprocess(pair, seed=cfg.seed)
    left = tuple(range(cfg.k0))
    best = None
    best_overlap = -np.inf
    for m, cand in enumerate(itertools.permutations(range(pair.n), cfg.k0)):
        seeds = tuple(zip(left, cand))
        outcome = _run_pipeline(replace(dp, excluded=seeds), seeds, cfg, tag=(m,))
        if outcome.status == "failed":
            continue
        outcome.candidate_id = m
        outcome.overlap = restricted_overlap(pair, outcome.full_mapping())
        if outcome.overlap > best_overlap:
            best = outcome
            best_overlap = outcome.overlap
    if best is None:
        return MatchOutcome(
            mapping={},
            scores={},
            status="failed",
            seed_pairs=(),
            candidate_id=None,
            overlap=0.0,
            trace=None,
            flags=("all-candidates-failed",),
        )
    return best
