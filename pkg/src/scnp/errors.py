"""Exception hierarchy.

Every error raised by the library derives from :class:`ScnpError`.  The
``category`` attribute drives the CLI exit code (see :mod:`scnp.cli`).
"""


class ScnpError(Exception):
    category = "numeric"


class ConfigError(ScnpError):
    category = "config"


class IoError(ScnpError):
    category = "io"


# graph-core
class ZeroDegree(ScnpError):
    pass


class ShapeMismatch(ScnpError):
    pass


# dataset-io
class ParseError(IoError):
    def __init__(self, path, lineno, msg):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {msg}")


class InconsistentSize(IoError):
    pass


class UnknownNode(IoError):
    pass


class TooFewNodes(ConfigError):
    pass


# propagation
class SingularSystem(ScnpError):
    pass


class LengthMismatch(ScnpError):
    pass


class CorruptFile(IoError):
    pass


class VersionMismatch(IoError):
    pass


# neural-net / evaluation
class EmptyMask(ScnpError):
    pass


class StaleCache(ScnpError):
    pass


class MissingArtifact(ConfigError):
    pass


class EmptyInput(ScnpError):
    pass
