"""Exception hierarchy shared across the toolkit.

Each error carries a ``kind`` so the service and CLI can map failures to
stable HTTP statuses and exit codes (usage=1, data=2, provider=3).
"""

__all__ = ["ClaimMatchError", "UsageError", "DataError", "ProviderError", "UnsupportedPairError"]


class ClaimMatchError(Exception):
    kind = "error"


class UsageError(ClaimMatchError):
    """Bad arguments or configuration."""

    kind = "usage"


class DataError(ClaimMatchError):
    """Malformed or inconsistent corpus/dataset/run input."""

    kind = "data"


class ProviderError(ClaimMatchError):
    """Embedding or translation provider failed (transport or protocol)."""

    kind = "provider"


class UnsupportedPairError(ProviderError):
    """Translation requested for a language pair the provider cannot serve."""
