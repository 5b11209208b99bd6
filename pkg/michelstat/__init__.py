"""michelstat: abstract-interpretation analyzer for Michelson smart contracts."""

from .analyzer import Alarm, AnalysisResult, AnalysisTimeout, Analyzer, analyze
from .checkers import check_always_fail, check_owner_only_decrease
from .interpreter import CallContext, ContractFailure, run_contract, run_operations
from .parser import parse
from .settings import AnalysisConfig, settings
from .typechecker import typecheck

__all__ = [
    "Alarm",
    "AnalysisConfig",
    "AnalysisResult",
    "AnalysisTimeout",
    "Analyzer",
    "CallContext",
    "ContractFailure",
    "analyze",
    "check_always_fail",
    "check_owner_only_decrease",
    "parse",
    "run_contract",
    "run_operations",
    "settings",
    "typecheck",
]
