"""Flat-file formats: bucket records, reconstructed profiles, spectrum maps,
resonance profiles, and run manifests.

Floats are written with repr (shortest exact round trip), so rewriting the
same data yields byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from typing import Iterable, Sequence

import numpy as np

from .acquisition import AcquisitionRecord
from .fiber import TemporalImage
from .reconstruction import ReconstructionResult
from .spectroscopy import BfsProfile, SpectrumMap
from .validation import DataError


def _fmt(x: float) -> str:
    return repr(float(x))


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file and rename, so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


RECORD_FIELDS = ["freq_mhz", "section", "shift", "row", "bucket", "bucket_inverse", "clip_count"]


def records_to_csv(records: Iterable[AcquisitionRecord]) -> str:
    lines = [",".join(RECORD_FIELDS)]
    for r in records:
        lines.append(
            ",".join(
                [
                    _fmt(r.frequency_mhz),
                    str(r.section),
                    str(r.shift),
                    str(r.row_index),
                    _fmt(r.bucket),
                    _fmt(r.bucket_inverse),
                    str(r.clip_count),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def write_records_csv(path: str, records: Iterable[AcquisitionRecord]) -> None:
    atomic_write_text(path, records_to_csv(records))


def read_records_csv(path: str) -> list[AcquisitionRecord]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != RECORD_FIELDS:
            raise DataError(f"{path}: unexpected header {reader.fieldnames}")
        out = []
        for row in reader:
            out.append(
                AcquisitionRecord(
                    row_index=int(row["row"]),
                    bucket=float(row["bucket"]),
                    bucket_inverse=float(row["bucket_inverse"]),
                    section=int(row["section"]),
                    shift=int(row["shift"]),
                    frequency_mhz=float(row["freq_mhz"]),
                    clip_count=int(row["clip_count"]),
                )
            )
    return out


def image_to_csv(image: TemporalImage) -> str:
    lines = ["freq_mhz,position_m,value"]
    freq = _fmt(image.frequency_mhz)
    for pos, val in zip(image.positions_m, image.values):
        lines.append(f"{freq},{_fmt(pos)},{_fmt(val)}")
    return "\n".join(lines) + "\n"


def write_image_csv(path: str, image: TemporalImage | ReconstructionResult) -> None:
    if isinstance(image, ReconstructionResult):
        image = image.image
    atomic_write_text(path, image_to_csv(image))


def read_image_csv(path: str) -> tuple[float, np.ndarray, np.ndarray]:
    """Returns (frequency_mhz, positions_m, values)."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["freq_mhz", "position_m", "value"]:
            raise DataError(f"{path}: unexpected header {header}")
        rows = [(float(a), float(b), float(c)) for a, b, c in reader]
    if not rows:
        raise DataError(f"{path}: no samples")
    freqs = {r[0] for r in rows}
    if len(freqs) > 1:
        raise DataError(f"{path}: mixed frequencies in one image file")
    positions = np.array([r[1] for r in rows])
    values = np.array([r[2] for r in rows])
    return rows[0][0], positions, values


def map_to_csv(spectrum: SpectrumMap) -> str:
    lines = [f"# spectrum map method={spectrum.method}"]
    lines.append(",".join(["freq_mhz"] + [_fmt(p) for p in spectrum.positions_m]))
    for i, freq in enumerate(spectrum.frequencies_mhz):
        lines.append(",".join([_fmt(freq)] + [_fmt(v) for v in spectrum.values[i]]))
    return "\n".join(lines) + "\n"


def write_map_csv(path: str, spectrum: SpectrumMap) -> None:
    atomic_write_text(path, map_to_csv(spectrum))


def read_map_csv(path: str) -> SpectrumMap:
    with open(path, newline="") as handle:
        first = handle.readline()
        method = "unknown"
        if first.startswith("#"):
            marker = "method="
            if marker in first:
                method = first.split(marker, 1)[1].strip()
            header_line = handle.readline()
        else:
            header_line = first
        header = header_line.rstrip("\n").split(",")
        if not header or header[0] != "freq_mhz":
            raise DataError(f"{path}: unexpected map header")
        positions = np.array([float(x) for x in header[1:]])
        freqs = []
        rows = []
        for line in handle:
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(header):
                raise DataError(f"{path}: ragged row with {len(parts)} cells")
            freqs.append(float(parts[0]))
            rows.append([float(x) for x in parts[1:]])
    if not rows:
        raise DataError(f"{path}: no spectra")
    return SpectrumMap(
        frequencies_mhz=np.array(freqs),
        positions_m=positions,
        values=np.array(rows),
        method=method,
    )


BFS_FIELDS = ["position_m", "bfs_mhz", "fwhm_mhz", "amplitude", "converged"]


def bfs_to_csv(profile: BfsProfile) -> str:
    lines = [",".join(BFS_FIELDS)]
    for j in range(len(profile)):
        lines.append(
            ",".join(
                [
                    _fmt(profile.positions_m[j]),
                    _fmt(profile.bfs_mhz[j]),
                    _fmt(profile.fwhm_mhz[j]),
                    _fmt(profile.amplitude[j]),
                    "1" if profile.converged[j] else "0",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def write_bfs_csv(path: str, profile: BfsProfile) -> None:
    atomic_write_text(path, bfs_to_csv(profile))


def read_bfs_csv(path: str) -> BfsProfile:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != BFS_FIELDS:
            raise DataError(f"{path}: unexpected header {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: empty profile")
    return BfsProfile(
        positions_m=np.array([float(r["position_m"]) for r in rows]),
        bfs_mhz=np.array([float(r["bfs_mhz"]) for r in rows]),
        fwhm_mhz=np.array([float(r["fwhm_mhz"]) for r in rows]),
        amplitude=np.array([float(r["amplitude"]) for r in rows]),
        converged=np.array([r["converged"] == "1" for r in rows]),
    )


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return None if math.isnan(v) else v
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def write_manifest(path: str, manifest: dict) -> None:
    atomic_write_text(path, json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")


def read_manifest(path: str) -> dict:
    with open(path) as handle:
        return json.load(handle)
