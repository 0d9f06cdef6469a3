class RobustezError(Exception):
    """
    Error base del motor. `codigo` es estable y apto para máquinas,
    `detail` es el mensaje para humanos.
    """
    codigo = "INTERNAL_ERROR"

    def __init__(self, detail, **contexto):
        super().__init__(detail)
        self.detail = detail
        self.contexto = contexto

    def as_dict(self):
        data = {"error": self.codigo, "detail": self.detail}
        data.update({k: v for k, v in self.contexto.items() if v is not None})
        return data


class NonFiniteError(RobustezError):
    codigo = "NON_FINITE"

    def __init__(self, detail, node_id=None, **contexto):
        super().__init__(detail, node_id=node_id, **contexto)
        self.node_id = node_id


class NonScalarLossError(RobustezError):
    codigo = "NON_SCALAR_LOSS"


class ShapeMismatchError(RobustezError):
    codigo = "SHAPE_MISMATCH"


class InvalidSpecError(RobustezError):
    codigo = "INVALID_SPEC"


class InvalidArgumentError(RobustezError):
    codigo = "INVALID_ARGUMENT"


class TrainingDivergedError(RobustezError):
    codigo = "TRAINING_DIVERGED"

    def __init__(self, detail, epoch=None, iteration=None):
        super().__init__(detail, epoch=epoch, iteration=iteration)
        self.epoch = epoch
        self.iteration = iteration


class UndefinedRatioError(RobustezError):
    codigo = "UNDEFINED_RATIO"


# ----------------------------- datos -----------------------------------

class DatasetFormatError(RobustezError):
    codigo = "DATASET_FORMAT"


class BadMagicError(DatasetFormatError):
    codigo = "BAD_MAGIC"


class TruncatedFileError(DatasetFormatError):
    codigo = "TRUNCATED_FILE"


class CountMismatchError(DatasetFormatError):
    codigo = "COUNT_MISMATCH"


class EmptyDatasetError(DatasetFormatError):
    codigo = "EMPTY_DATASET"


class MissingDatasetError(DatasetFormatError):
    codigo = "MISSING_DATASET"


# --------------------------- configuración -----------------------------

class MissingConfigError(RobustezError):
    codigo = "MISSING_CONFIG"


class InvalidConfigError(RobustezError):
    codigo = "INVALID_CONFIG"

    def __init__(self, detail, errores=None):
        super().__init__(detail, errores=errores)
        self.errores = errores or {}


class InvalidOverrideError(RobustezError):
    codigo = "INVALID_OVERRIDE"


class MissingCheckpointError(RobustezError):
    codigo = "MISSING_CHECKPOINT"


class CheckpointFormatError(RobustezError):
    codigo = "CHECKPOINT_FORMAT"
