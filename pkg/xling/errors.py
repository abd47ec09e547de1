# Error types shared by the xling modules and the command-line surface

from typing import Optional


class XlingError(Exception):
    """Base error; exit_code is what the CLI returns when it surfaces"""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmbeddingFormatError(XlingError, ValueError):
    pass


class CorpusFormatError(XlingError, ValueError):
    pass


class IobError(XlingError, ValueError):
    pass


class ShapeError(XlingError, ValueError):
    pass


class ConfigError(XlingError, ValueError):
    pass


class AlignmentError(XlingError, ValueError):
    pass


class EmptyDictionaryError(AlignmentError):
    exit_code = 3


class EvaluationError(XlingError, ValueError):
    pass


class ModelFormatError(XlingError, ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class AlignmentDivergedError(XlingError, RuntimeError):
    exit_code = 4

    def __init__(self, message: str, epoch: int):
        self.epoch = epoch
        super().__init__(f"epoch {epoch}: {message}")


class TrainingError(XlingError, RuntimeError):
    exit_code = 4

    def __init__(self, message: str, epoch: int, sentence: int):
        self.epoch = epoch
        self.sentence = sentence
        super().__init__(f"epoch {epoch} sentence {sentence}: {message}")
