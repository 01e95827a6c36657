"""Compositional verification of C programs.

Derives per-function contracts from a single system-level assertion, checks
the composition with an external bounded model checker, and refines failing
contracts from counterexamples until the whole stack verifies or the budget
runs out.
"""

from .contracts import Contract, ContractOrigin, Mode, ParseFailure
from .errors import ContractorError
from .harness import RunOutcome, RunReport, SuiteReport, run_program, run_suite
from .program_model import ProgramModel, Tier, parse_program
from .refinement import (
    PipelineConfig,
    Strategy,
    Verdict,
    VerdictOutcome,
    delta_debug,
    run_pipeline,
)
from .verifier import Status, SubprocessVerifier, VerifierConfig

__version__ = "0.1.0"

__all__ = [
    "Contract",
    "ContractOrigin",
    "ContractorError",
    "Mode",
    "ParseFailure",
    "PipelineConfig",
    "ProgramModel",
    "RunOutcome",
    "RunReport",
    "Status",
    "Strategy",
    "SubprocessVerifier",
    "SuiteReport",
    "Tier",
    "Verdict",
    "VerdictOutcome",
    "VerifierConfig",
    "delta_debug",
    "parse_program",
    "run_pipeline",
    "run_program",
    "run_suite",
    "__version__",
]
