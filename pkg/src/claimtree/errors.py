"""Exception types shared across the toolkit.

Recoverable per-item problems (a study whose response does not parse, a
label that duplicates an earlier one) are reported as data by the operation
that found them; exceptions are reserved for conditions the caller must
handle explicitly.
"""

from __future__ import annotations


class ClaimTreeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ClaimTreeError):
    """Project configuration is missing, unreadable, or out of range."""


# --- tree addressing / validation ------------------------------------------

class NodeNotFound(ClaimTreeError):
    def __init__(self, path):
        self.path = tuple(path)
        super().__init__(f"no node at path {' / '.join(self.path) or '(root)'}")


class ValidationFailed(ClaimTreeError):
    """A hierarchy failed invariant checks; carries the violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        rules = ", ".join(v.rule for v in self.violations)
        super().__init__(f"{len(self.violations)} violation(s): {rules}")


# --- completion backends ----------------------------------------------------

class BackendError(ClaimTreeError):
    """Base class for completion-backend failures."""


class MissingReplayEntry(BackendError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"replay store has no entry for digest {digest}")


class RemoteError(BackendError):
    """Remote completion failed after retries; keeps retry metadata."""

    def __init__(self, message: str, attempts: int = 1):
        self.attempts = attempts
        super().__init__(f"{message} (after {attempts} attempt(s))")


# --- model-output parsing ---------------------------------------------------

class UnparseableResponse(ClaimTreeError):
    """Model output did not contain the structure the prompt requested."""


class OutlineParseError(ClaimTreeError):
    """Base class for outline-grammar failures; carries the line number."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class NoRoot(OutlineParseError):
    pass


class MultipleRoots(OutlineParseError):
    pass


class IndentJump(OutlineParseError):
    pass


class MalformedRefs(OutlineParseError):
    pass


# --- external predictors ----------------------------------------------------

class VerifierUnavailable(ClaimTreeError):
    """Entailment verifier not configured or unreachable."""


class PredictorUnavailable(ClaimTreeError):
    """Relevance predictor not configured or unreachable."""


class UnparseableVerdict(ClaimTreeError):
    """Predictor response did not end in a recognizable verdict."""


class UnsupportedTask(ClaimTreeError):
    pass


# --- labels and agreement ---------------------------------------------------

class NoOverlap(ClaimTreeError):
    """Two annotators share no labeled instances."""


class DegenerateAgreement(ClaimTreeError):
    """Chance agreement is 1 (one category used everywhere); kappa undefined."""


class MissingLabel(ClaimTreeError):
    """A required (claim, category) or instance label is absent."""

    def __init__(self, pair):
        self.pair = pair
        super().__init__(f"no label for {pair!r}")


# --- evaluation -------------------------------------------------------------

class InvalidSplitConfig(ClaimTreeError):
    pass


class UnknownTopic(ClaimTreeError):
    def __init__(self, topic_id: str):
        self.topic_id = topic_id
        super().__init__(f"unknown topic {topic_id!r}")


class InsufficientForeignClaims(ClaimTreeError):
    pass


class StructureMismatch(ClaimTreeError):
    """Two hierarchies differ in names or edges where identity was required."""
