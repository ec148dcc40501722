"""On-disk corpus formats.

Binary format: a single file with a plain-text key-value header terminated
by an ``end-header`` line, followed by the raw float32 payload in row-major
N x T x F order. Point labels live in a ``<path>.labels`` sidecar, one byte
per timestamp. The layout is deliberately language-neutral.

Text format: one whitespace/comma separated T x F table per file; a
directory of such files is read in sorted order as one corpus.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

import numpy as np

from ..exceptions import DataIntegrityError, FormatError, ShapeError
from .corpus import Corpus, corpus_from_array

MAGIC = "dacr-corpus-v1"
HEADER_END = "end-header"
LABEL_SUFFIX = ".labels"


def save_corpus(corpus: Corpus, path) -> None:
    """Write a corpus in the binary manifest format (labels as a sidecar)."""
    path = Path(path)
    values = corpus.to_array()  # raises ShapeError on mixed lengths
    n, t, f = values.shape
    lines = [
        MAGIC,
        f"n_instances={n}",
        f"T={t}",
        f"F={f}",
        "dtype=float32",
        "layout=row-major NxTxF",
        f"origin={corpus.origin}",
    ]
    class_labels = [inst.class_label for inst in corpus]
    if all(c is not None for c in class_labels):
        lines.append("class_labels=" + ",".join(str(c) for c in class_labels))
    lines.append(HEADER_END)
    header = ("\n".join(lines) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())

    point_labels = [inst.point_labels for inst in corpus]
    if all(lab is not None for lab in point_labels):
        flat = np.concatenate(point_labels).astype(np.uint8)
        with open(str(path) + LABEL_SUFFIX, "wb") as fh:
            fh.write(flat.tobytes())


def _parse_header(fh) -> dict:
    first = fh.readline().decode("ascii", errors="replace").strip()
    if first != MAGIC:
        raise FormatError(f"missing '{MAGIC}' magic line")
    fields = {}
    while True:
        raw = fh.readline()
        if not raw:
            raise FormatError("header ended before 'end-header'")
        line = raw.decode("ascii", errors="replace").strip()
        if line == HEADER_END:
            return fields
        if "=" not in line:
            raise FormatError(f"malformed header line: {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()


def _load_binary(path: Path) -> Corpus:
    with open(path, "rb") as fh:
        fields = _parse_header(fh)
        try:
            n = int(fields["n_instances"])
            t = int(fields["T"])
            f = int(fields["F"])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"bad or missing size fields in header: {exc}") from exc
        if fields.get("dtype", "float32") != "float32":
            raise FormatError(f"unsupported dtype {fields.get('dtype')!r}")
        payload = fh.read()
    expected = n * t * f * 4
    if len(payload) != expected:
        raise FormatError(
            f"payload holds {len(payload)} bytes, header implies {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(n, t, f)

    class_labels = None
    if "class_labels" in fields:
        try:
            class_labels = [int(c) for c in fields["class_labels"].split(",")]
        except ValueError as exc:
            raise FormatError(f"bad class_labels list: {exc}") from exc
        if len(class_labels) != n:
            raise FormatError(
                f"class_labels lists {len(class_labels)} entries, expected {n}"
            )

    point_labels = None
    sidecar = Path(str(path) + LABEL_SUFFIX)
    if sidecar.exists():
        raw = np.fromfile(sidecar, dtype=np.uint8)
        if raw.size != n * t:
            raise FormatError(
                f"label sidecar holds {raw.size} bytes, expected {n * t}"
            )
        point_labels = raw.reshape(n, t).astype(bool)

    return corpus_from_array(
        values,
        origin=fields.get("origin", "unknown"),
        class_labels=class_labels,
        point_labels=point_labels,
    )


def _read_text_table(path: Path) -> np.ndarray:
    try:
        delim = "," if "," in path.read_text(errors="replace").splitlines()[0] else None
        table = np.loadtxt(path, delimiter=delim, ndmin=2)
    except (ValueError, IndexError, OSError) as exc:
        raise FormatError(f"cannot parse {path}: {exc}") from exc
    return table


def _load_text(path: Path) -> Corpus:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file())
        if not files:
            raise FormatError(f"{path} contains no instance files")
    else:
        files = [path]
    tables = [_read_text_table(p) for p in files]
    widths = {tab.shape[1] for tab in tables}
    if len(widths) != 1:
        raise ShapeError(f"instance files disagree on feature count: {sorted(widths)}")
    lengths = {tab.shape[0] for tab in tables}
    if len(lengths) == 1:
        return corpus_from_array(np.stack(tables), origin=path.stem)
    # mixed lengths: build instances one by one
    from .corpus import TimeSeriesInstance

    instances = tuple(
        TimeSeriesInstance(values=tab.astype(np.float32), id=f.stem)
        for f, tab in zip(files, tables)
    )
    return Corpus(instances, origin=path.stem)


def sniff_format(path) -> str:
    path = Path(path)
    if path.is_dir():
        return "columnar-text"
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    return "binary-array" if head == MAGIC.encode() else "columnar-text"


def load_corpus(path, format: str = "auto") -> Corpus:
    """Load a corpus from disk.

    ``format`` is one of ``binary-array``, ``columnar-text`` or ``auto``
    (sniff the magic line). Raises FormatError on parse failures,
    DataIntegrityError on NaN/Inf cells and ShapeError when instance files
    disagree on the feature count.
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"no such path: {path}")
    if format == "auto":
        format = sniff_format(path)
    if format == "binary-array":
        return _load_binary(path)
    if format == "columnar-text":
        return _load_text(path)
    raise FormatError(f"unknown corpus format {format!r}")
