"""Exception types shared across the package.

InputFormatError groups every "your file is wrong" failure so the CLI can
map the whole family to one exit code; plain OSError is left to the caller
for genuine I/O trouble.
"""


class FlowLabelError(Exception):
    pass


class InputFormatError(FlowLabelError):
    pass


class NotPcapError(InputFormatError):
    """File does not start with a recognizable pcap global header."""


class UnsupportedLinkTypeError(InputFormatError):
    """Capture uses a link-layer type this reader does not decode."""


class TruncatedFileError(InputFormatError):
    """File ends before the bytes its own headers promise."""


class MissingColumnError(InputFormatError):
    """CSV header lacks a required column."""


class MalformedRowError(InputFormatError):
    """A CSV row holds an unparseable value; message carries the row number."""


class AllNullTupleError(InputFormatError):
    """IDS log row with all four flow attributes null."""


class SchemaMismatchError(InputFormatError):
    """Flow CSV header does not match the expected column list."""
