"""Error taxonomy shared across the package and mapped to CLI exit codes."""

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5


class WormlocError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputOutputError(WormlocError):
    """Missing files, unreadable paths, failed writes."""

    exit_code = EXIT_IO


class DataFormatError(WormlocError):
    """Malformed manifests, images, configs, or checkpoints."""

    exit_code = EXIT_DATA


class NumericError(WormlocError):
    """Non-finite losses or other numeric failures during computation."""

    exit_code = EXIT_NUMERIC


class CheckpointError(DataFormatError):
    """Base for checkpoint deserialization failures."""


class BadMagicError(CheckpointError):
    """File does not start with the checkpoint magic bytes."""


class UnknownVersionError(CheckpointError):
    """Checkpoint format version is not supported by this build."""


class CorruptFileError(CheckpointError):
    """Checkpoint ends prematurely or fails internal consistency checks."""
