"""EEG keystroke decoding: epoching, four classifiers, and a live
virtual-keyboard prediction service."""

__version__ = "0.1.0"

from .ingest import (DEFAULT_KEEP_CHANNELS, Dataset, Onset, RawSession,
                     SessionMeta, Standardizer, TrialWindow, assemble_and_split,
                     extract_onsets, extract_windows, load_session,
                     standardizer_apply, standardizer_fit)

__all__ = [
    "DEFAULT_KEEP_CHANNELS", "Dataset", "Onset", "RawSession", "SessionMeta",
    "Standardizer", "TrialWindow", "assemble_and_split", "extract_onsets",
    "extract_windows", "load_session", "standardizer_apply", "standardizer_fit",
]
