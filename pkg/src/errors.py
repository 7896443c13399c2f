class CertCoderError(RuntimeError):
    pass


class UsageError(CertCoderError):
    pass


class ConfigError(CertCoderError):
    pass


class DataFormatError(CertCoderError):
    pass


class CorpusFormatError(DataFormatError):
    pass


class DictionaryFormatError(DataFormatError):
    pass


class EmbeddingFormatError(DataFormatError):
    pass


class CheckpointError(DataFormatError):
    pass


class KeyMismatchError(DataFormatError):
    pass


class NumericalError(CertCoderError):
    pass
