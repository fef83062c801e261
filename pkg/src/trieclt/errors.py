"""Exception types shared across the package."""


class TrieCltError(Exception):
    """Base class for all package errors."""


class DepthCapExceeded(TrieCltError):
    """Two strings agreed on the first D_max letters (or a finite stream ran out).

    With honest i.i.d. sources this has probability <= n^2 * pmax^D_max and
    signals either an astronomically unlikely collision or a bad source.
    """


class NodeNotInTrie(TrieCltError):
    """A node path was queried that is not part of the trie."""


class SpanUndetermined(TrieCltError):
    """The span gcd{-ln p_a} cannot be decided from the given probabilities."""


class StripViolation(TrieCltError):
    """A Mellin transform was requested outside its strip of convergence."""


class QuadratureNotConverged(TrieCltError):
    """Adaptive quadrature missed the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class TruncationNotConverged(TrieCltError):
    """A truncated prefix sum could not meet its tail-bound tolerance."""


class NoMethodAvailable(TrieCltError):
    """No closed form, series, or sampling route exists for the request."""


class CombinatorialBlowup(TrieCltError):
    """A subset-sum formula would need too many terms; use the symmetric or
    quadrature path instead."""


class EkUnavailable(TrieCltError):
    """E|T_k|_i could not be produced for the requested k."""
