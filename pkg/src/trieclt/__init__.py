"""Random tries: construction, additive functionals, exact asymptotic
constants, and Monte Carlo verification of the limit theorems."""

from .errors import (CombinatorialBlowup, DepthCapExceeded, EkUnavailable,
                     NodeNotInTrie, NoMethodAvailable, QuadratureNotConverged,
                     SpanUndetermined, StripViolation, TrieCltError,
                     TruncationNotConverged)
from .model import ProbModel, entropy, rho, span, symmetric
from .source import StringSource, poisson_draw
from .tolls import (Toll, bucket_occupancy, custom, e0, e0_minus_2leaf,
                    e0_minus_leaf, eval_additive, eval_toll, fringe_count,
                    fringe_count_ge, fringe_match, leaf, log_size,
                    log_subtrees, parse_toll, protected, size)
from .trie import (BucketTrie, Trie, bucket_trie, build_trie,
                   sample_bucket_fixed, sample_fixed, sample_poisson, validate)

__version__ = "0.1.0"

__all__ = [
    "ProbModel", "StringSource", "Trie", "BucketTrie", "Toll",
    "entropy", "rho", "span", "symmetric", "poisson_draw",
    "build_trie", "bucket_trie", "sample_fixed", "sample_poisson",
    "sample_bucket_fixed", "validate",
    "eval_toll", "eval_additive", "parse_toll",
    "leaf", "size", "fringe_count", "fringe_count_ge", "fringe_match",
    "protected", "bucket_occupancy", "log_subtrees", "log_size",
    "e0", "e0_minus_leaf", "e0_minus_2leaf", "custom",
    "TrieCltError", "DepthCapExceeded", "NodeNotInTrie", "SpanUndetermined",
    "StripViolation", "QuadratureNotConverged", "TruncationNotConverged",
    "NoMethodAvailable", "CombinatorialBlowup", "EkUnavailable",
    "__version__",
]
