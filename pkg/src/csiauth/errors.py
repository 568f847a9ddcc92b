"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have non-conformable shapes."""


class FormatError(ValueError):
    """A serialized file is malformed; carries the byte offset of the defect."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ConfigError(ValueError):
    """A configuration value violates a build-time constraint."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
