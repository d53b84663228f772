"""Correlated Gaussian Wigner pairs and their directed preprocessing.

``generate_pair`` draws two symmetric matrices whose entries are standard
bivariate normal with correlation ``epsilon`` across a latent uniform
permutation.  ``preprocess`` splits each symmetric matrix with fresh noise
into a matrix of fully independent directed entries, halving the
cross-correlation to ``epsilon / 2``.  All randomness comes from named
streams derived from a single master seed, so every artifact is
bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._rng import stream
from .errors import FileFormatError, ParameterError

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class CorrelatedPair:
    """Two symmetric n x n matrices correlated across a latent permutation.

    ``g`` and ``gs`` are exactly symmetric with zero diagonal; for each
    unordered pair ``(u, v)`` the entries ``(g[u, v], gs[pi[u], pi[v]])``
    were drawn standard bivariate normal with correlation ``epsilon``,
    independently across pairs.
    """

    n: int
    epsilon: float
    g: np.ndarray
    gs: np.ndarray
    pi: np.ndarray
    seed: int


@dataclass(frozen=True)
class DirectedPair:
    """Preprocessed pair with independent entries and halved correlation.

    ``gh[u, v] + gh[v, u] == sqrt(2) * g[u, v]`` for every off-diagonal
    pair; entries of ``gh`` are i.i.d. standard normal and
    ``Cov(gh[u, v], gsh[pi[u], pi[v]]) == epsilon_effective`` in the
    generative model.  ``excluded`` lists seed vertex pairs removed from
    iteration (empty at construction).
    """

    n: int
    epsilon_effective: float
    gh: np.ndarray
    gsh: np.ndarray
    pi: np.ndarray
    seed: int
    excluded: tuple = ()


def _upper_indices(n: int):
    return np.triu_indices(n, k=1)


def generate_pair(n: int, epsilon: float, seed: int) -> CorrelatedPair:
    """Draw a correlated pair with a uniform latent permutation.

    Deterministic given ``(n, epsilon, seed)``.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ParameterError(f"n must be an integer >= 2, got {n}")
    if not (0.0 <= epsilon <= 1.0):
        raise ParameterError(f"epsilon must lie in [0, 1], got {epsilon}")
    n = int(n)
    pi = stream(seed, "pi").permutation(n)
    iu = _upper_indices(n)
    m = len(iu[0])
    z = stream(seed, "g").standard_normal(m)
    w = stream(seed, "gs-noise").standard_normal(m)
    gs_vals = epsilon * z + math.sqrt(1.0 - epsilon * epsilon) * w

    g = np.zeros((n, n))
    g[iu] = z
    g += g.T

    gs = np.zeros((n, n))
    gs[pi[iu[0]], pi[iu[1]]] = gs_vals
    gs += gs.T

    return CorrelatedPair(n=n, epsilon=float(epsilon), g=g, gs=gs, pi=pi, seed=int(seed))


def _split_directed(sym: np.ndarray, noise: np.ndarray, iu) -> np.ndarray:
    # Orientation fixed as u < v: the (u, v) entry gets the + combination.
    n = sym.shape[0]
    out = np.zeros((n, n))
    out[iu] = (sym[iu] + noise) / _SQRT2
    out[iu[1], iu[0]] = (sym[iu] - noise) / _SQRT2
    return out


def preprocess(pair: CorrelatedPair, seed: int | None = None) -> DirectedPair:
    """Split both matrices into directed matrices with independent entries.

    ``seed`` defaults to the pair's own seed; the noise streams are named
    so preprocessing noise never collides with generation noise.
    """
    seed = pair.seed if seed is None else int(seed)
    iu = _upper_indices(pair.n)
    m = len(iu[0])
    gh = _split_directed(pair.g, stream(seed, "pre-g").standard_normal(m), iu)
    gsh = _split_directed(pair.gs, stream(seed, "pre-gs").standard_normal(m), iu)
    return DirectedPair(
        n=pair.n,
        epsilon_effective=pair.epsilon / 2.0,
        gh=gh,
        gsh=gsh,
        pi=pair.pi,
        seed=seed,
    )


def inject_noise(dp: DirectedPair, target_corr: float, seed: int | None = None) -> DirectedPair:
    """Mix fresh noise into both directed matrices to lower the correlation.

    Each off-diagonal entry becomes ``w * old + sqrt(1 - w^2) * fresh`` with
    ``w = sqrt(target_corr / epsilon_effective)``, which keeps unit
    variances and sets the cross-correlation to exactly ``target_corr``.
    """
    c = dp.epsilon_effective
    if not (0.0 < target_corr <= c):
        raise ParameterError(
            f"target correlation must lie in (0, {c}], got {target_corr}"
        )
    if target_corr == c:
        return dp
    seed = dp.seed if seed is None else int(seed)
    w = math.sqrt(target_corr / c)
    comp = math.sqrt(1.0 - w * w)
    iu = _upper_indices(dp.n)
    il = (iu[1], iu[0])

    def mix(mat: np.ndarray, tag: str) -> np.ndarray:
        rng = stream(seed, tag)
        out = np.zeros_like(mat)
        for idx in (iu, il):
            out[idx] = w * mat[idx] + comp * rng.standard_normal(len(idx[0]))
        return out

    return replace(
        dp,
        epsilon_effective=float(target_corr),
        gh=mix(dp.gh, "inject-g"),
        gsh=mix(dp.gsh, "inject-gs"),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# On-disk formats: WMAT1 binary matrices, one-index-per-line permutations,
# and a JSON sidecar recording (n, epsilon, seed, stage).

_MAGIC = b"WMAT1"


def save_matrix(path, mat: np.ndarray) -> None:
    """Write a square matrix: one header line, then little-endian f64 row-major."""
    mat = np.asarray(mat, dtype="<f8")
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ParameterError(f"matrix must be square, got shape {mat.shape}")
    with open(path, "wb") as fh:
        fh.write(_MAGIC + f" n={mat.shape[0]}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(mat).tobytes())


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline()
        if not header.startswith(_MAGIC + b" n="):
            raise FileFormatError(f"{path}: bad matrix header {header[:20]!r}")
        try:
            n = int(header[len(_MAGIC) + 3 : -1])
        except ValueError as exc:
            raise FileFormatError(f"{path}: unparseable matrix header") from exc
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * n:
        raise FileFormatError(f"{path}: expected {n * n} values, found {data.size}")
    return data.reshape(n, n).astype(float)


def save_permutation(path, pi: np.ndarray) -> None:
    """One vertex index per line; line i holds pi(i)."""
    with open(path, "w") as fh:
        for v in np.asarray(pi, dtype=int):
            fh.write(f"{v}\n")


def load_permutation(path) -> np.ndarray:
    with open(path) as fh:
        pi = np.array([int(line) for line in fh if line.strip()], dtype=int)
    if sorted(pi.tolist()) != list(range(len(pi))):
        raise FileFormatError(f"{path}: not a permutation of 0..{len(pi) - 1}")
    return pi


def save_sidecar(path, n: int, epsilon: float, seed: int, stage: str) -> None:
    with open(path, "w") as fh:
        json.dump({"n": int(n), "epsilon": float(epsilon), "seed": int(seed), "stage": stage}, fh)
        fh.write("\n")


def load_sidecar(path) -> dict:
    with open(path) as fh:
        meta = json.load(fh)
    for key in ("n", "epsilon", "seed", "stage"):
        if key not in meta:
            raise FileFormatError(f"{path}: sidecar missing key {key!r}")
    return meta


def save_pair(directory, pair: CorrelatedPair) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_matrix(d / "g.wmat", pair.g)
    save_matrix(d / "gs.wmat", pair.gs)
    save_permutation(d / "pi.txt", pair.pi)
    save_sidecar(d / "meta.json", pair.n, pair.epsilon, pair.seed, "raw")


def load_pair(directory) -> CorrelatedPair:
    d = Path(directory)
    meta = load_sidecar(d / "meta.json")
    if meta["stage"] != "raw":
        raise FileFormatError(f"{d}: expected stage 'raw', got {meta['stage']!r}")
    return CorrelatedPair(
        n=meta["n"],
        epsilon=meta["epsilon"],
        g=load_matrix(d / "g.wmat"),
        gs=load_matrix(d / "gs.wmat"),
        pi=load_permutation(d / "pi.txt"),
        seed=meta["seed"],
    )


def save_directed(directory, dp: DirectedPair) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_matrix(d / "gh.wmat", dp.gh)
    save_matrix(d / "gsh.wmat", dp.gsh)
    save_permutation(d / "pi.txt", dp.pi)
    save_sidecar(d / "meta.json", dp.n, dp.epsilon_effective, dp.seed, "directed")


def load_directed(directory) -> DirectedPair:
    d = Path(directory)
    meta = load_sidecar(d / "meta.json")
    if meta["stage"] != "directed":
        raise FileFormatError(f"{d}: expected stage 'directed', got {meta['stage']!r}")
    return DirectedPair(
        n=meta["n"],
        epsilon_effective=meta["epsilon"],
        gh=load_matrix(d / "gh.wmat"),
        gsh=load_matrix(d / "gsh.wmat"),
        pi=load_permutation(d / "pi.txt"),
        seed=meta["seed"],
    )
