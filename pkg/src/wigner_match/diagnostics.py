"""Empirical verification of the concentration behavior of a run.

These reports read the latent permutation, which the matcher itself never
does outside seed construction; they grade how closely the realized set
sizes and intersections track their deterministic proxies.

Two tolerance tracks are reported side by side: the asymptotic
bookkeeping bound ``Delta_s = n^-0.1 (log n)^{10 s} prod K_i^100`` (shown
for reference; it exceeds 1 at any feasible size) and a binomial
five-sigma surrogate that actually drives pass/fail at desk scale.
Counts are normalized by the non-seed universe size ``n - k0``; the
difference against normalizing by ``n`` is far below the surrogate
tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import mannwhitneyu

from . import gaussquad
from ._rng import stream
from .errors import ParameterError
from .matcher import IterationState, RunConfig, RunTrace, run_constants, _tail_params, m_pair
from .model import CorrelatedPair

CONDITION_IDS = ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix", "x", "xi")


@dataclass(frozen=True)
class ConditionRow:
    """One admissibility condition at one step."""

    step: int
    condition: str
    applicable: bool
    max_dev: float
    surrogate_tol: float
    paper_delta: float
    passed: bool


@dataclass(frozen=True)
class ConcentrationRow:
    """Same-step deviations of the empirical matrices from their proxies."""

    step: int
    m_gamma_dev: float
    m_pi_dev: float
    p_psi_dev: float
    surrogate_tol: float
    paper_delta: float
    passed: bool


@dataclass(frozen=True)
class CrossStepRow:
    """Largest cross-step entries, which should all be near zero."""

    step: int
    prev: int
    m_gamma_max: float
    m_pi_max: float
    p_max: float
    surrogate_tol: float
    paper_delta: float
    passed: bool


@dataclass(frozen=True)
class AdmissibilityReport:
    conditions: tuple
    m_phi_dev: float
    p_psi_dev: float
    cross_step_dev: float

    def rows_for(self, condition: str) -> list:
        return [r for r in self.conditions if r.condition == condition]


@dataclass(frozen=True)
class ConcentrationReport:
    same_step: tuple
    cross_step: tuple


@dataclass(frozen=True)
class SeparationReport:
    matched_mean: float
    matched_sd: float
    unmatched_mean: float
    unmatched_sd: float
    auc: float
    threshold_used: float
    pass_fraction_at_threshold: float

    def __post_init__(self):
        if not (0.0 <= self.auc <= 1.0):
            raise ParameterError(f"auc out of [0, 1]: {self.auc}")


def paper_delta(n: int, step: int, k_values) -> float:
    """``n^-0.1 (log n)^{10 step} prod_{i<=step} K_i^100`` (inf on overflow)."""
    log10 = -0.1 * math.log10(n) + 10 * step * math.log10(max(math.log(n), 1.0001))
    log10 += 100 * sum(math.log10(k) for k in k_values[: step + 1])
    return float("inf") if log10 > 308 else 10.0**log10


def _surrogate_tol(p, n_eff: int) -> float:
    """Five-sigma binomial band for an empirical frequency near ``p``."""
    p = np.clip(np.asarray(p, dtype=float), 1e-12, 1.0 - 1e-12)
    return 5.0 * np.sqrt(p * (1.0 - p) / max(n_eff, 1))


def _max_dev_row(step, condition, devs, tols, delta):
    devs = np.asarray(devs, dtype=float)
    tols = np.asarray(tols, dtype=float)
    if devs.size == 0:
        return ConditionRow(step, condition, True, 0.0, float(np.min(tols) if tols.size else 0.0), delta, True)
    ratio = devs / tols
    k = int(np.argmax(ratio))
    return ConditionRow(
        step,
        condition,
        True,
        float(devs.flat[k]),
        float(tols.flat[k]),
        delta,
        bool(np.all(devs <= tols)),
    )


def _not_applicable(step, condition, delta):
    return ConditionRow(step, condition, False, 0.0, 0.0, delta, True)


def _mapped_pi_indicators(state: IterationState, pair: CorrelatedPair, level: int) -> np.ndarray:
    """Rows of the far-side indicators aligned to the near side through pi.

    Row ``v`` (in near-side order) is the far-side membership row of
    ``pi(v)``; vertices whose image is a far-side seed get an all-zero row.
    """
    targets = pair.pi[state.rest_v]
    pos = state.pos_s[targets]
    ind = state.pi_sets[level]
    out = np.zeros((len(state.rest_v), ind.shape[1]))
    valid = pos >= 0
    out[valid] = ind[pos[valid]]
    return out


def admissibility_report(trace: RunTrace, pair: CorrelatedPair, cfg: RunConfig) -> AdmissibilityReport:
    """Evaluate the full family of set-size and intersection conditions.

    Every condition index appears exactly once per step; conditions that
    need history (same-level pairwise ones at step 0, cross-step ones
    before step 1) are marked not applicable.
    """
    state = trace.state
    cst = run_constants(cfg)
    params = _tail_params(cfg)
    a = cst.alpha
    eps_eff = trace.epsilon_effective
    n_eff = len(state.rest_v)
    rows: list = []

    for s in range(state.t + 1):
        delta = paper_delta(pair.n, s, state.K)
        gam = state.gamma[s]
        pis = state.pi_sets[s]
        mapped = _mapped_pi_indicators(state, pair, s)
        if n_eff == 0:
            rows.extend(_not_applicable(s, cid, delta) for cid in CONDITION_IDS)
            continue

        # (i)/(ii): set sizes around alpha.
        for cid, ind in (("i", gam), ("ii", pis)):
            sizes = ind.mean(axis=0)
            rows.append(_max_dev_row(s, cid, np.abs(sizes - a), np.full_like(sizes, _surrogate_tol(a, n_eff)), delta))

        k_s = state.K[s]
        off = ~np.eye(k_s, dtype=bool)

        if s == 0:
            # (iv)/(vi): level-0 same-side intersections around alpha^2.
            for cid, ind in (("iv", gam), ("vi", pis)):
                inter = (ind.T @ ind) / n_eff
                rows.append(
                    _max_dev_row(s, cid, np.abs(inter[off] - a * a), _surrogate_tol(np.full(off.sum(), a * a), n_eff), delta)
                )
            rows.append(_not_applicable(s, "iii", delta))
            rows.append(_not_applicable(s, "v", delta))
            # (viii): level-0 cross intersections; phi at the generative
            # correlation on the diagonal, alpha^2 off it.
            cross = (gam.T @ mapped) / n_eff
            phi_gen = gaussquad.phi(eps_eff, params) if eps_eff > 0 else a * a
            diag_dev = np.abs(np.diag(cross) - phi_gen)
            offd_dev = np.abs(cross[off] - a * a)
            devs = np.concatenate([diag_dev, offd_dev])
            tols = np.concatenate(
                [np.full(k_s, _surrogate_tol(phi_gen, n_eff)), _surrogate_tol(np.full(off.sum(), a * a), n_eff)]
            )
            rows.append(_max_dev_row(s, "viii", devs, tols, delta))
            rows.append(_not_applicable(s, "vii", delta))
        else:
            betas = state.betas[s - 1]
            beta_hats = state.beta_hats[s - 1]
            j = betas.shape[1]
            phi_same = gaussquad.phi_batch((betas @ betas.T) / j, params)
            phi_cross = gaussquad.phi_batch(eps_eff * (beta_hats @ beta_hats.T) / j, params)

            # (iii)/(v): same-side pairwise intersections track phi of the
            # sign-vector correlations.
            for cid, ind in (("iii", gam), ("v", pis)):
                inter = (ind.T @ ind) / n_eff
                rows.append(_max_dev_row(s, cid, np.abs(inter - phi_same)[off], _surrogate_tol(phi_same, n_eff)[off], delta))
            rows.append(_not_applicable(s, "iv", delta))
            rows.append(_not_applicable(s, "vi", delta))

            # (vii): cross-side intersections through pi track the hat version.
            cross = (gam.T @ mapped) / n_eff
            rows.append(_max_dev_row(s, "vii", np.abs(cross - phi_cross), _surrogate_tol(phi_cross, n_eff), delta))
            rows.append(_not_applicable(s, "viii", delta))

        # (ix)/(x)/(xi): cross-step intersections are near alpha^2.
        if s == 0:
            rows.append(_not_applicable(s, "ix", delta))
            rows.append(_not_applicable(s, "x", delta))
            rows.append(_not_applicable(s, "xi", delta))
        else:
            devs_ix, devs_x, devs_xi = [], [], []
            for r in range(s):
                gam_r = state.gamma[r]
                pis_r = state.pi_sets[r]
                mapped_r = _mapped_pi_indicators(state, pair, r)
                devs_ix.append(np.abs((gam.T @ gam_r) / n_eff - a * a).ravel())
                devs_x.append(np.abs((pis.T @ pis_r) / n_eff - a * a).ravel())
                # both orders of (s, r) belong to the step max(s, r) = s
                devs_xi.append(np.abs((gam.T @ mapped_r) / n_eff - a * a).ravel())
                devs_xi.append(np.abs((state.gamma[r].T @ mapped) / n_eff - a * a).ravel())
            for cid, chunks in (("ix", devs_ix), ("x", devs_x), ("xi", devs_xi)):
                devs = np.concatenate(chunks)
                rows.append(_max_dev_row(s, cid, devs, _surrogate_tol(np.full(devs.size, a * a), n_eff), delta))

    conc = concentration_report(trace, pair, cfg)
    m_phi = max((r.m_gamma_dev for r in conc.same_step), default=0.0)
    m_phi = max(m_phi, max((r.m_pi_dev for r in conc.same_step), default=0.0))
    p_psi = max((r.p_psi_dev for r in conc.same_step), default=0.0)
    cross = max(
        (max(r.m_gamma_max, r.m_pi_max, r.p_max) for r in conc.cross_step), default=0.0
    )
    order = {cid: i for i, cid in enumerate(CONDITION_IDS)}
    rows.sort(key=lambda r: (r.step, order[r.condition]))
    return AdmissibilityReport(
        conditions=tuple(rows), m_phi_dev=m_phi, p_psi_dev=p_psi, cross_step_dev=cross
    )


def _p_matrix(state: IterationState, pair: CorrelatedPair, t: int, s: int, alpha: float, n: int) -> np.ndarray:
    """Truth-dependent cross intersection proxy between levels t and s."""
    mapped = _mapped_pi_indicators(state, pair, s)
    gam = state.gamma[t]
    inter = gam.T @ mapped
    szt = gam.sum(axis=0)
    szs = state.pi_sets[s].sum(axis=0)
    av = alpha - alpha * alpha
    return (inter - alpha * szt[:, None] - alpha * szs[None, :] + alpha**2 * n) / (av * n)


def concentration_report(trace: RunTrace, pair: CorrelatedPair, cfg: RunConfig) -> ConcentrationReport:
    """Deviations of the empirical matrices from the deterministic proxies.

    Same-step: max entries of ``|M_Gamma - Phi|``, ``|M_Pi - Phi|`` and
    ``|P - Psi|``.  Cross-step: max absolute entries of the mixed-level
    matrices, whose proxies are zero.
    """
    state = trace.state
    cst = run_constants(cfg)
    a = cst.alpha
    n = pair.n
    n_eff = len(state.rest_v)
    same_rows = []
    cross_rows = []
    # entry-level surrogate: a count frequency within 5 sigma of a
    # probability near alpha^2, scaled by the normalization 1/(alpha-alpha^2)
    tol = float(_surrogate_tol(a * a, max(n_eff, 1)) / cst.alpha_var) if n_eff else 0.0
    for t in range(state.t + 1):
        delta = 2.0 / a * paper_delta(n, t, state.K)
        mg, mp = m_pair(state, a, n, t, t)
        p = _p_matrix(state, pair, t, t, a, n)
        m_gamma_dev = float(np.abs(mg - state.phi_levels[t]).max()) if n_eff else 0.0
        m_pi_dev = float(np.abs(mp - state.phi_levels[t]).max()) if n_eff else 0.0
        p_psi_dev = float(np.abs(p - state.psi_levels[t]).max()) if n_eff else 0.0
        same_rows.append(
            ConcentrationRow(
                step=t,
                m_gamma_dev=m_gamma_dev,
                m_pi_dev=m_pi_dev,
                p_psi_dev=p_psi_dev,
                surrogate_tol=tol,
                paper_delta=delta,
                passed=max(m_gamma_dev, m_pi_dev, p_psi_dev) <= tol,
            )
        )
        for s in range(t):
            mg_ts, mp_ts = m_pair(state, a, n, t, s)
            p_ts = _p_matrix(state, pair, t, s, a, n)
            cross_rows.append(
                CrossStepRow(
                    step=t,
                    prev=s,
                    m_gamma_max=float(np.abs(mg_ts).max()),
                    m_pi_max=float(np.abs(mp_ts).max()),
                    p_max=float(np.abs(p_ts).max()),
                    surrogate_tol=tol,
                    paper_delta=delta,
                    passed=bool(
                        max(np.abs(mg_ts).max(), np.abs(mp_ts).max(), np.abs(p_ts).max()) <= tol
                    ),
                )
            )
    return ConcentrationReport(same_step=tuple(same_rows), cross_step=tuple(cross_rows))


def score_separation(trace: RunTrace, pair: CorrelatedPair, cfg: RunConfig) -> SeparationReport:
    """Matched versus unmatched finishing-score statistics.

    Matched scores pair every non-seed vertex with its true image; the
    unmatched sample is a seeded uniform draw of wrong pairs of size
    ``min(10 n', n'^2 - n')`` so the report stays linear in ``n``.
    """
    state = trace.state
    level = trace.finish_level
    eta = state.etas[level]
    if eta is None:
        raise ParameterError("trace has no direction set at its finishing level")
    proj_left = trace.degrees_left @ eta.etas.T
    proj_right = trace.degrees_right @ eta.etas.T

    targets = pair.pi[state.rest_v]
    pos = state.pos_s[targets]
    valid = pos >= 0
    matched = (proj_left[valid] * proj_right[pos[valid]]).sum(axis=1)

    n_eff = len(state.rest_v)
    m = min(10 * n_eff, n_eff * n_eff - n_eff)
    rng = stream(cfg.seed, "diag-unmatched")
    rows = rng.integers(0, n_eff, size=m)
    cols = rng.integers(0, len(state.rest_s), size=m)
    clash = np.flatnonzero((pos[rows] >= 0) & (cols == pos[rows]))
    cols[clash] = (cols[clash] + 1) % len(state.rest_s)
    unmatched = (proj_left[rows] * proj_right[cols]).sum(axis=1)

    if matched.size and unmatched.size:
        auc = float(mannwhitneyu(matched, unmatched).statistic / (matched.size * unmatched.size))
    else:
        auc = 0.5
    threshold = cfg.match_threshold_factor * state.K[level] * state.eps[level]
    return SeparationReport(
        matched_mean=float(matched.mean()) if matched.size else 0.0,
        matched_sd=float(matched.std(ddof=1)) if matched.size > 1 else 0.0,
        unmatched_mean=float(unmatched.mean()) if unmatched.size else 0.0,
        unmatched_sd=float(unmatched.std(ddof=1)) if unmatched.size > 1 else 0.0,
        auc=auc,
        threshold_used=float(threshold),
        pass_fraction_at_threshold=float((matched >= threshold).mean()) if matched.size else 0.0,
    )


def report_csv_rows(report: AdmissibilityReport) -> list:
    """Flatten a report into ``step,condition,max_dev,surrogate_tol,paper_delta,pass`` rows."""
    rows = []
    for r in report.conditions:
        rows.append(
            (
                r.step,
                r.condition if r.applicable else f"{r.condition}(n/a)",
                repr(r.max_dev),
                repr(r.surrogate_tol),
                repr(r.paper_delta),
                "1" if r.passed else "0",
            )
        )
    return rows


def write_report_csv(report: AdmissibilityReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("step,condition,max_dev,surrogate_tol,paper_delta,pass\n")
        for row in report_csv_rows(report):
            fh.write(",".join(str(x) for x in row) + "\n")


def summarize(report: AdmissibilityReport, separation: SeparationReport | None = None) -> str:
    """Human-readable digest of a diagnostics run."""
    lines = []
    bad = [r for r in report.conditions if r.applicable and not r.passed]
    lines.append(
        f"admissibility: {sum(r.applicable for r in report.conditions)} applicable "
        f"condition rows, {len(bad)} outside the 5-sigma surrogate"
    )
    for r in bad:
        lines.append(f"  step {r.step} condition ({r.condition}): dev {r.max_dev:.4g} > tol {r.surrogate_tol:.4g}")
    lines.append(
        f"concentration: max |M-Phi| {report.m_phi_dev:.4g}, max |P-Psi| {report.p_psi_dev:.4g}, "
        f"max cross-step entry {report.cross_step_dev:.4g}"
    )
    if separation is not None:
        lines.append(
            f"separation: matched {separation.matched_mean:.4g} +- {separation.matched_sd:.4g}, "
            f"unmatched {separation.unmatched_mean:.4g} +- {separation.unmatched_sd:.4g}, "
            f"AUC {separation.auc:.4f}, pass fraction at threshold {separation.pass_fraction_at_threshold:.3f}"
        )
    return "\n".join(lines)
