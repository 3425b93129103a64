"""Exception types shared across the package."""


class SpindleRadonError(Exception):
    """Base class for all package errors."""

    code = "error"


class InvalidParamsError(SpindleRadonError, ValueError):
    """Torus parameters outside their validity set (e.g. ``s <= t**2``)."""

    code = "invalid-params"

    def __init__(self, message, index=None):
        if index is not None:
            message = f"parameter {index}: {message}"
        super().__init__(message)
        self.index = index


class DegeneratePointError(SpindleRadonError, ValueError):
    """A point lies on the directional axis (``g == 0``)."""

    code = "degenerate-point"


class InvalidSampleError(SpindleRadonError, ValueError):
    code = "invalid-sample"


class UnsupportedFamilyError(SpindleRadonError, ValueError):
    code = "unsupported-family"


class SizeLimitError(SpindleRadonError, ValueError):
    code = "size-limit"


class DivergenceError(SpindleRadonError, RuntimeError):
    code = "divergence"


class WindowError(SpindleRadonError, ValueError):
    code = "window-out-of-bounds"


class PhantomSupportError(SpindleRadonError, ValueError):
    code = "invalid-phantom"
