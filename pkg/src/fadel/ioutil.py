"""Small file-system helpers: atomic writes, deterministic archives, hashes."""

from __future__ import annotations

import hashlib
import io
import os
import zipfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

import numpy as np
from numpy.lib import format as _npformat


@contextmanager
def atomic_path(final: Path) -> Iterator[Path]:
    """Yield a temporary path that replaces ``final`` only on success.

    The temporary file lives in the same directory as the target so the
    final ``os.replace`` is atomic on POSIX file systems.  On any
    exception the partial file is removed and nothing is left behind at
    the destination.
    """
    final = Path(final)
    tmp = final.with_name(final.name + ".tmp")
    try:
        yield tmp
        os.replace(tmp, final)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def write_text_atomic(path: Path, text: str) -> None:
    with atomic_path(Path(path)) as tmp:
        tmp.write_text(text, encoding="utf-8")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def savez_deterministic(path, **arrays) -> None:
    """Write an .npz readable by np.load with fully reproducible bytes.

    np.savez stamps zip members with the wall clock, which breaks
    byte-identical reruns; this writer pins member timestamps and orders
    entries by name.
    """
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            _npformat.write_array(buf, np.asarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())
