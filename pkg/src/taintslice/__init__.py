"""Taint-style slicing of decompiled programs into dangerous flows, with
LLM-driven vulnerability verdicts."""

from .model import (
    CallChain, DangerousFlow, Diagnostic, ExportError, FuncSpec, ImportEntry,
    FunctionRecord, ParamSelector, ProgramExport, PromptSequence, SourceCall,
    Verdict, VulnerableDestination, validate_export,
)

__all__ = [
    "CallChain", "DangerousFlow", "Diagnostic", "ExportError", "FuncSpec",
    "ImportEntry", "FunctionRecord", "ParamSelector", "ProgramExport",
    "PromptSequence", "SourceCall", "Verdict", "VulnerableDestination",
    "validate_export",
]

__version__ = "0.1.0"
