"""Exception types shared across the package.

Every error raised on a documented failure path derives from ``OboiError``,
so callers (and the CLI) can distinguish data/validation problems from
genuine bugs.
"""


class OboiError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfig(OboiError):
    """A configuration value violates its invariants."""


class UnknownInstance(OboiError):
    """An instance id is not part of the label space."""


class RejectedValue(OboiError):
    """A tensor value is non-finite or not representable in storage."""


class ShapeMismatch(OboiError):
    """Array dimensions disagree with what the operation requires."""


class NotATensorFile(OboiError):
    """The file does not start with the tensor container magic."""


class CorruptTensor(OboiError):
    """Tensor header or payload is inconsistent with the declared layout."""


class VersionMismatch(OboiError):
    """Tensor container version is not supported."""


class MissingTensor(OboiError):
    """A manifest references a tensor file that does not exist."""

    def __init__(self, sample_id: str, path: str = ""):
        self.sample_id = sample_id
        self.path = path
        super().__init__(f"missing tensor for sample {sample_id!r}: {path}")


class InvalidManifest(OboiError):
    """A dataset manifest violates one or more invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"{len(self.violations)} manifest violation(s): {lines}{more}")


class InvalidBox(OboiError):
    """A bounding box violates 0 <= x1 < x2 <= W, 0 <= y1 < y2 <= H."""


class EmptySupport(OboiError):
    """An operation that needs at least one value/sample received none."""


class MissingLogits(OboiError):
    """Reduction mode 'logits' was requested but no logits are available."""


class DuplicateInstance(OboiError):
    """The instance is already present in the bag and replace was not set."""


class MissingStats(OboiError):
    """A transform that needs fitted statistics has none available."""


class NoCandidates(OboiError):
    """Conditioned search found no prototype for the predicted object."""

    def __init__(self, predicted_object: str):
        self.predicted_object = predicted_object
        super().__init__(f"no instance prototype for object {predicted_object!r}")


class IncompleteCoverage(OboiError):
    """An (instance, sequence) cell has too few samples for the protocol."""

    def __init__(self, instance: str, sequence: str, detail: str = ""):
        self.instance = instance
        self.sequence = sequence
        msg = f"instance {instance!r} has insufficient samples in sequence {sequence!r}"
        super().__init__(msg + (f": {detail}" if detail else ""))


class NotEnoughInstances(OboiError):
    """An object class has fewer instances than the requested subset size."""

    def __init__(self, object_class: str, have: int, want: int):
        self.object_class = object_class
        super().__init__(
            f"object {object_class!r} has {have} instance(s), need {want}"
        )


class EmptySplit(OboiError):
    """The requested evaluation split contains no samples."""


class UndefinedGain(OboiError):
    """Relative gain is undefined for a zero baseline accuracy."""


class InvalidSpec(OboiError):
    """A synthetic-dataset spec is malformed."""
