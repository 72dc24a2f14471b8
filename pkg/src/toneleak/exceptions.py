"""Custom exceptions for the toneleak toolkit.

This module defines the exception hierarchy for all toneleak errors. All custom
exceptions inherit from ToneLeakError, allowing callers (and the CLI) to catch
every toolkit error with a single except clause.

Example:
    >>> try:
    ...     butterworth_lowpass(5, 250.0, 400.0)
    ... except ToneLeakError as e:
    ...     print(f"Cannot design filter: {e}")
"""


class ToneLeakError(Exception):
    """Base exception for all toneleak errors.

    The error message can be accessed via str(exception) or exception.args[0].
    """

    pass


class InvalidArgumentError(ToneLeakError, ValueError):
    """Raised when an operation's precondition on its arguments is violated.

    Also a ValueError so that generic numeric callers keep working. Common causes:
    - Non-positive durations, amplitudes, or sampling rates
    - Filter cutoffs at or above the Nyquist frequency
    - Non-integer oversampling ratios
    - A filter applied to a signal sampled at a different rate

    Example:
        >>> if f_c >= rate / 2:
        ...     raise InvalidArgumentError(f"cutoff {f_c} Hz must be below {rate / 2} Hz")
    """

    pass


class AmbiguousToneError(ToneLeakError):
    """Raised when a frequency pair matches more than one touchtone.

    This happens when the matching tolerance is wider than half the gap between
    neighbouring DTMF frequencies.
    """

    pass


class RecordingTooShortError(ToneLeakError):
    """Raised when a recording holds fewer samples than one analysis frame."""

    pass


class FeatureLengthError(ToneLeakError):
    """Raised when a feature vector is longer than the requested padded length.

    Vectors are never truncated silently; an overlong vector means the target
    length was computed for a different recording shape.
    """

    pass


class DegenerateTrainingError(ToneLeakError):
    """Raised when a classifier is asked to learn from fewer than two classes."""

    pass


class ConfigError(ToneLeakError):
    """Raised when an experiment configuration is malformed or invalid.

    Common causes:
    - The config file is not valid JSON
    - Unknown keys (usually typos)
    - Parameters rejected by the owning module (e.g. an unknown sensor profile)
    """

    pass


class DataError(ToneLeakError):
    """Raised when dataset files are missing, malformed, or inconsistent.

    Example:
        >>> try:
        ...     manifest = json.loads(path.read_text())
        ... except json.JSONDecodeError as e:
        ...     raise DataError(f"Malformed manifest {path}: {e}") from e
    """

    pass
