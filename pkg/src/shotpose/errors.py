"""Exception types shared across the package."""


class ShotposeError(Exception):
    """Base class for all shotpose errors."""


class ShapeMismatchError(ShotposeError, ValueError):
    """Operands have incompatible shapes."""

    def __init__(self, op: str, *shapes) -> None:
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)


class ContractError(ShotposeError, ValueError):
    """A caller violated a documented precondition."""


class ValidationError(ShotposeError, ValueError):
    """Input data violates the on-disk schema or a type invariant."""

    def __init__(self, message: str, field: str | None = None, clip_id: str | None = None) -> None:
        parts = []
        if clip_id is not None:
            parts.append(f"clip '{clip_id}'")
        if field is not None:
            parts.append(f"field '{field}'")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.field = field
        self.clip_id = clip_id


class DegeneratePoseError(ShotposeError, ValueError):
    """A pose is geometrically unusable (zero-length limb or torso)."""


class NoVisibleTorsoError(ShotposeError, ValueError):
    """No candidate pose has a visible torso reference point."""


class MissingArtifactError(ShotposeError, RuntimeError):
    """A pipeline stage needs an artifact that was never produced."""

    def __init__(self, artifact: str, producer: str) -> None:
        super().__init__(
            f"missing artifact '{artifact}'; run the '{producer}' command first"
        )
        self.artifact = artifact
        self.producer = producer


class CheckpointVersionError(ShotposeError, RuntimeError):
    """A model checkpoint has an unsupported format version or layout."""


class TrainingDivergedError(ShotposeError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, step: int) -> None:
        super().__init__(f"non-finite loss at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step
