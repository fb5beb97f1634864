"""Text file open helpers with transparent gzip.

Reading sniffs the 0x1f8b prefix instead of trusting the file name;
writing compresses when the path ends in .gz, with a fixed gzip mtime so
identical inputs produce byte-identical outputs.
"""

from __future__ import annotations

import gzip
import io
from contextlib import contextmanager


@contextmanager
def open_text_read(path):
    raw = open(path, "rb")
    try:
        gzipped = raw.read(2) == b"\x1f\x8b"
        raw.seek(0)
        stream = gzip.GzipFile(fileobj=raw) if gzipped else raw
        text = io.TextIOWrapper(stream, encoding="utf-8", newline="")
        try:
            yield text
        finally:
            text.close()
    finally:
        raw.close()


@contextmanager
def open_text_write(path):
    raw = open(path, "wb")
    try:
        if str(path).endswith(".gz"):
            stream = gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0)
        else:
            stream = raw
        text = io.TextIOWrapper(stream, encoding="utf-8", newline="")
        try:
            yield text
        finally:
            text.close()
    finally:
        raw.close()
