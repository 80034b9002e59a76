"""Exception types shared across the toolkit."""


class TemplmError(Exception):
    """Base class for all toolkit errors."""


class MissingField(TemplmError):
    """A template references a field that the input data does not carry."""

    def __init__(self, field: str):
        self.field = field
        super().__init__(f"template references field {field!r} absent from input data")


class IndexOutOfRange(TemplmError):
    """A value choice points past the end of a field's value list."""


class EmptyCorpus(TemplmError):
    """Training was requested on an empty corpus."""


class BackendUnavailable(TemplmError):
    """A remote backend could not be reached or reported itself not ready."""


class UnknownMode(TemplmError):
    """A conditioning context carries a mode the backend does not support."""


class NoValidField(TemplmError):
    """A nonterminal field has no value in some conditioning input."""

    def __init__(self, field: str):
        self.field = field
        super().__init__(f"no value available for field {field!r}")


class NoTemplateForCluster(TemplmError):
    """Inference hit an input whose cluster has no usable template."""

    def __init__(self, cluster: str):
        self.cluster = cluster
        super().__init__(f"no usable template for cluster {cluster!r}")


class CorpusFormatError(TemplmError):
    """A corpus line could not be parsed."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        super().__init__(f"corpus line {line_no}: {reason}")
