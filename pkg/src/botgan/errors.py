"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`BotGanError`
so callers (and the CLI) can separate pipeline failures from programming bugs.
"""


class BotGanError(Exception):
    """Base class for all package errors."""


# --- dataset -----------------------------------------------------------------

class DatasetError(BotGanError, ValueError):
    pass


class MissingColumn(DatasetError):
    def __init__(self, column):
        super().__init__(f"missing required column {column!r}")
        self.column = column


class WidthMismatch(DatasetError):
    def __init__(self, row, expected, got):
        where = "header" if row is None else f"row {row}"
        super().__init__(f"{where}: expected {expected} feature columns, got {got}")
        self.row = row
        self.expected = expected
        self.got = got


class NonNumericCell(DatasetError):
    def __init__(self, row, col, value):
        super().__init__(f"row {row}, feature column {col}: non-numeric value {value!r}")
        self.row = row
        self.col = col
        self.value = value


class UnknownLabel(DatasetError):
    def __init__(self, row, label):
        super().__init__(f"row {row}: unknown label {label!r}")
        self.row = row
        self.label = label


class ClassTooSmall(DatasetError):
    def __init__(self, label, count, needed):
        super().__init__(f"class {label!r} has {count} records, needs more than {needed - 1}")
        self.label = label
        self.count = count
        self.needed = needed


class EmptyDataset(DatasetError):
    pass


class SchemaMismatch(DatasetError):
    pass


class BadCovariance(DatasetError):
    pass


class UnknownCategory(DatasetError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


# --- numerics ----------------------------------------------------------------

class NumericsError(BotGanError):
    pass


class ShapeMismatch(NumericsError, ValueError):
    pass


class NonFiniteActivation(NumericsError, FloatingPointError):
    pass


class StaleTape(NumericsError, RuntimeError):
    pass


class LabelOutOfRange(NumericsError, IndexError):
    pass


# --- gan ---------------------------------------------------------------------

class BadConfig(BotGanError, ValueError):
    pass


class NonFiniteLoss(BotGanError, FloatingPointError):
    def __init__(self, message, epoch=None, step=None):
        ctx = []
        if epoch is not None:
            ctx.append(f"epoch {epoch}")
        if step is not None:
            ctx.append(f"step {step}")
        suffix = f" ({', '.join(ctx)})" if ctx else ""
        super().__init__(message + suffix)
        self.epoch = epoch
        self.step = step


class UntrainedModel(BotGanError, RuntimeError):
    pass


class WrongVariant(BotGanError, ValueError):
    pass


# --- oversampling / forest / metrics -----------------------------------------

class EmptyMinority(BotGanError, ValueError):
    pass


class EmptyHistogram(BotGanError, ValueError):
    pass


class SingleClass(BotGanError, ValueError):
    pass


class EmptyTrain(BotGanError, ValueError):
    pass


class LengthMismatch(BotGanError, ValueError):
    pass


class DegenerateSample(BotGanError, ValueError):
    pass


class MissingExternalData(BotGanError, FileNotFoundError):
    pass
