"""Minimal fixed-column PDB coordinate reader.

Keeps ATOM records only (HETATM is dropped), the first model, and the first
alternate location (' ' or 'A'). Coordinates come back centered, ready for
sampling. The user supplies the files; nothing is downloaded here.
"""

from __future__ import annotations

import io
import json

import numpy as np

from edmc.linalg import InvalidInputError, center_columns


class PdbParseError(ValueError):
    """A coordinate field failed to parse; carries the 1-based line number."""

    def __init__(self, message, line_no):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def parse_pdb(path_or_file):
    """Parse a PDB file into centered coordinates plus ingest statistics.

    Returns ``(coords, stats)`` where coords is an (n, 3) float array with zero
    column means and stats counts what was kept or skipped.
    """
    if isinstance(path_or_file, io.TextIOBase):
        lines = path_or_file.read().splitlines()
        source = getattr(path_or_file, "name", "<stream>")
    else:
        with open(path_or_file) as f:
            lines = f.read().splitlines()
        source = str(path_or_file)

    coords = []
    stats = {
        "file": source,
        "n_kept": 0,
        "n_dropped_hetatm": 0,
        "n_dropped_altloc": 0,
        "n_models_skipped": 0,
    }
    in_first_model = True
    seen_model = False
    for ln_no, line in enumerate(lines, start=1):
        rec = line[:6]
        if rec == "MODEL ":
            if seen_model:
                in_first_model = False
            seen_model = True
            continue
        if rec == "ENDMDL" and seen_model:
            in_first_model = False
            continue
        if rec == "HETATM":
            if in_first_model:
                stats["n_dropped_hetatm"] += 1
            continue
        if rec != "ATOM  ":
            continue
        if not in_first_model:
            stats["n_models_skipped"] += 1
            continue
        altloc = line[16] if len(line) > 16 else " "
        if altloc not in (" ", "A"):
            stats["n_dropped_altloc"] += 1
            continue
        try:
            # Fixed columns: x 31-38, y 39-46, z 47-54 (1-based, inclusive).
            x = float(line[30:38])
            y = float(line[38:46])
            z = float(line[46:54])
        except (ValueError, IndexError) as exc:
            raise PdbParseError(f"bad coordinate field: {exc}", ln_no) from exc
        coords.append((x, y, z))
        stats["n_kept"] += 1

    if not coords:
        raise InvalidInputError(f"no ATOM records found in {source}")
    P = center_columns(np.asarray(coords, dtype=float))
    return P, stats


def append_stats_jsonl(stats, path_or_file):
    """Append one JSON object per ingest to a JSON-lines log."""
    line = json.dumps(stats, sort_keys=True)
    if isinstance(path_or_file, io.TextIOBase):
        path_or_file.write(line + "\n")
    else:
        with open(path_or_file, "a") as f:
            f.write(line + "\n")
