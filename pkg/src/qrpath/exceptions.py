"""Exception hierarchy shared by the solvers and the CLI."""


class QRPathError(Exception):
    """Base class; ``category`` is the machine-readable error tag used by the CLI."""

    category = "internal"


class ValidationError(QRPathError, ValueError):
    category = "invalid-input"


class DataFormatError(QRPathError, ValueError):
    category = "data-format"


class SingularElbowError(QRPathError, ArithmeticError):
    """The elbow Gram matrix is (numerically) singular.

    ``indices`` carries the offending elbow index set when known.
    """

    category = "singular-elbow"

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)


class PathDivergenceError(QRPathError, RuntimeError):
    category = "path-divergence"


class KKTCertificateError(QRPathError, RuntimeError):
    category = "kkt-certificate"


class OracleFailure(QRPathError, RuntimeError):
    category = "oracle-failure"
