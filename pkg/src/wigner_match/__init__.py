"""Matching correlated Gaussian Wigner matrices.

Library layout:

* ``model``       -- instance generation and directed preprocessing
* ``gaussquad``   -- tail probabilities and Taylor constants by quadrature
* ``spectral``    -- eigheavy subspace and test-direction machinery
* ``matcher``     -- the iterative matching engine and its entry points
* ``oracle``      -- brute-force reference and outcome grading
* ``diagnostics`` -- concentration and score-separation reports
* ``harness``     -- sweeps and the ``wigner-match`` command line
"""

from .errors import (
    EtaSelectionError,
    FileFormatError,
    NumericError,
    ParameterError,
    SamplingError,
    StepError,
    SubspaceError,
    WignerMatchError,
)
from .gaussquad import ModelConstants, TailParams, alpha, constants, iota, phi, phi_batch, taylor_c
from .model import (
    CorrelatedPair,
    DirectedPair,
    generate_pair,
    inject_noise,
    load_pair,
    preprocess,
    save_pair,
)
from .matcher import (
    IterationState,
    MatchOutcome,
    RunConfig,
    RunTrace,
    check_sampling,
    degrees,
    finish,
    init_sets,
    iterate_once,
    k_schedule,
    overlap,
    seeded_match,
    seedless_match,
)
from .oracle import EvalReport, brute_force_map, evaluate
from .diagnostics import (
    AdmissibilityReport,
    SeparationReport,
    admissibility_report,
    concentration_report,
    score_separation,
)
from .harness import CellResult, SweepSpec, cli, run_sweep
from .spectral import EtaSet, SpectralBands, band_select, constrained_subspace, select_eta, sym_eig

__version__ = "0.1.0"

__all__ = [
    "alpha",
    "phi",
    "phi_batch",
    "iota",
    "taylor_c",
    "constants",
    "TailParams",
    "ModelConstants",
    "CorrelatedPair",
    "DirectedPair",
    "generate_pair",
    "preprocess",
    "inject_noise",
    "save_pair",
    "load_pair",
    "RunConfig",
    "IterationState",
    "MatchOutcome",
    "RunTrace",
    "init_sets",
    "degrees",
    "check_sampling",
    "iterate_once",
    "finish",
    "overlap",
    "seeded_match",
    "seedless_match",
    "k_schedule",
    "EvalReport",
    "brute_force_map",
    "evaluate",
    "AdmissibilityReport",
    "SeparationReport",
    "admissibility_report",
    "concentration_report",
    "score_separation",
    "SweepSpec",
    "CellResult",
    "run_sweep",
    "cli",
    "EtaSet",
    "SpectralBands",
    "sym_eig",
    "band_select",
    "constrained_subspace",
    "select_eta",
    "WignerMatchError",
    "ParameterError",
    "NumericError",
    "SubspaceError",
    "EtaSelectionError",
    "SamplingError",
    "StepError",
    "FileFormatError",
]
