"""Exception hierarchy.

Every error carries a short machine-readable ``category`` that the CLI
reports on failure.
"""


class TgrnError(Exception):
    category = "error"


class TgrnValueError(TgrnError, ValueError):
    category = "invalid_value"


# graph core
class EmptyInput(TgrnValueError):
    category = "empty_input"


class IdOutOfRange(TgrnValueError):
    category = "id_out_of_range"


class DuplicateEdge(TgrnValueError):
    category = "duplicate_edge"


class SelfLoop(TgrnValueError):
    category = "self_loop"


class TooFewSnapshots(TgrnValueError):
    category = "too_few_snapshots"


class VocabTooSmall(TgrnValueError):
    category = "vocab_too_small"


# io
class IoFailure(TgrnError, OSError):
    category = "io_failure"


class SchemaMismatch(TgrnValueError):
    category = "schema_mismatch"


class ChecksumMismatch(TgrnValueError):
    category = "checksum_mismatch"


class ParseError(TgrnValueError):
    category = "parse_error"


class NegativeValue(TgrnValueError):
    category = "negative_value"


class DimensionMismatch(TgrnValueError):
    category = "dimension_mismatch"


class EmptyAfterFiltering(TgrnValueError):
    category = "empty_after_filtering"


class NegativeConfidence(TgrnValueError):
    category = "negative_confidence"


class NoSnapshots(TgrnValueError):
    category = "no_snapshots"


class AllGenesMissing(TgrnValueError):
    category = "all_genes_missing"


# trajectory
class DegenerateInput(TgrnValueError):
    category = "degenerate_input"


class KTooLarge(TgrnValueError):
    category = "k_too_large"


class DisconnectedRoot(TgrnValueError):
    category = "disconnected_root"


class EigSolverFailure(TgrnError, ArithmeticError):
    category = "eig_solver_failure"


class TooFewCells(TgrnValueError):
    category = "too_few_cells"


# grn inference
class EmptyBin(TgrnValueError):
    category = "empty_bin"


class NoRegulators(TgrnValueError):
    category = "no_regulators"


class BinTooSmall(TgrnValueError):
    category = "bin_too_small"


# numerics
class ShapeMismatch(TgrnValueError):
    category = "shape_mismatch"


class NumericalError(TgrnError, ArithmeticError):
    category = "numerical_error"


class AsymmetricAdjacency(TgrnValueError):
    category = "asymmetric_adjacency"


class UninitializedState(TgrnError, RuntimeError):
    category = "uninitialized_state"


# bench
class NoNegativesAvailable(TgrnValueError):
    category = "no_negatives_available"


class DegenerateLabels(TgrnValueError):
    category = "degenerate_labels"


class LengthMismatch(TgrnValueError):
    category = "length_mismatch"


class EmptySeries(TgrnValueError):
    category = "empty_series"


class ConfigMismatch(TgrnValueError):
    category = "config_mismatch"


class ConfigError(TgrnValueError):
    category = "config_error"


class RankDeficientWarning(UserWarning):
    """Fewer informative components than requested; output was truncated."""
