"""
Line-delimited possession and oracle files.

One JSON object per line. Floats are written with ``repr`` so every value
round-trips exactly. Paths ending in ``.gz`` are gzip-compressed. Lines
starting with ``#`` are provenance comments and are skipped on read.

Possession line::

    {"id": "p000001", "attack_direction": "right", "coords": "cartesian",
     "lineup": [10 ints], "terminal_action": "Turnover", "terminal_index": 611,
     "n": 612, "moments": [n * 24 numbers, row-major], "events": [[idx, tag], ...]}

Oracle line::

    {"id": "p000001", "n": 612, "probs": [n * 5 numbers, row-major]}

where row ``t`` of ``probs`` is the outcome distribution at moment ``t``.
"""

from __future__ import annotations

import gzip
import io
import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from courtvalue.tracking import MOMENT_DIM, N_CLASSES, Lineup, Possession, TerminalAction, ValidationError


class ParseError(ValueError):
    def __init__(self, path, line: int, field: str, message: str):
        super().__init__(f"{path}:{line}: field {field!r}: {message}")
        self.path = str(path)
        self.line = line
        self.field = field


def open_text(path, mode: str = "r"):
    path = Path(path)
    if path.suffix == ".gz":
        # fixed mtime keeps compressed output byte-identical across runs
        raw = open(path, mode.replace("t", "") + "b")
        if "w" in mode:
            gz = gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0)
        else:
            gz = gzip.GzipFile(fileobj=raw, mode="rb")
        return _Closing(io.TextIOWrapper(gz, encoding="utf-8", newline="\n"), raw)
    return open(path, mode, encoding="utf-8", newline="\n")


class _Closing:
    def __init__(self, wrapper, raw):
        self._wrapper, self._raw = wrapper, raw

    def __getattr__(self, name):
        return getattr(self._wrapper, name)

    def __iter__(self):
        return iter(self._wrapper)

    def __enter__(self):
        return self._wrapper

    def __exit__(self, *exc):
        self._wrapper.close()
        self._raw.close()


def _num(x: float) -> float | int:
    x = float(x)
    return int(x) if x.is_integer() and abs(x) < 2**53 else x


def possession_to_record(p: Possession) -> str:
    rec = {
        "id": p.id,
        "attack_direction": p.attack_direction,
        "coords": p.coords,
        "lineup": list(p.lineup.ids),
        "terminal_action": p.terminal_action.tag,
        "terminal_index": p.terminal_index,
        "n": len(p),
        "moments": [_num(v) for v in p.moments.ravel()],
        "events": [[i, tag] for i, tag in p.events],
    }
    return json.dumps(rec, separators=(",", ":"), allow_nan=False)


def _field(rec: dict, name: str, path, line: int):
    if name not in rec:
        raise ParseError(path, line, name, "missing")
    return rec[name]


def possession_from_record(text: str, path="<string>", line: int = 1) -> Possession:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, line, "<line>", f"invalid JSON: {exc.msg}") from None
    if not isinstance(rec, dict):
        raise ParseError(path, line, "<line>", "expected a JSON object")
    n = _field(rec, "n", path, line)
    if not isinstance(n, int) or n < 1:
        raise ParseError(path, line, "n", f"expected a positive integer, got {n!r}")
    flat = _field(rec, "moments", path, line)
    if not isinstance(flat, list) or len(flat) != n * MOMENT_DIM:
        got = len(flat) if isinstance(flat, list) else type(flat).__name__
        raise ParseError(path, line, "moments", f"expected {n * MOMENT_DIM} numbers, got {got}")
    try:
        moments = np.array(flat, dtype=np.float64).reshape(n, MOMENT_DIM)
    except (TypeError, ValueError):
        raise ParseError(path, line, "moments", "non-numeric entry") from None
    try:
        lineup = Lineup.from_ids(_field(rec, "lineup", path, line))
    except (ValidationError, TypeError, ValueError) as exc:
        raise ParseError(path, line, "lineup", str(exc)) from None
    try:
        action = TerminalAction.from_tag(_field(rec, "terminal_action", path, line))
    except ValueError as exc:
        raise ParseError(path, line, "terminal_action", str(exc)) from None
    events = _field(rec, "events", path, line) if "events" in rec else []
    try:
        events = tuple((int(i), str(tag)) for i, tag in events)
    except (TypeError, ValueError):
        raise ParseError(path, line, "events", "expected [index, tag] pairs") from None
    try:
        return Possession(
            id=_field(rec, "id", path, line),
            moments=moments,
            lineup=lineup,
            terminal_action=action,
            terminal_index=_field(rec, "terminal_index", path, line),
            attack_direction=_field(rec, "attack_direction", path, line),
            coords=rec.get("coords", "cartesian"),
            events=events,
        )
    except ValidationError as exc:
        raise ParseError(path, line, exc.invariant, str(exc)) from None


def _skip(text: str) -> bool:
    return not text.strip() or text.startswith("#")


def _write_header(fh, header: Iterable[str]) -> None:
    for line in header:
        fh.write(line if line.startswith("#") else "# " + line)
        fh.write("\n")


def write_possessions(path, possessions: Iterable[Possession], header: Iterable[str] = ()) -> int:
    count = 0
    with open_text(path, "w") as fh:
        _write_header(fh, header)
        for p in possessions:
            fh.write(possession_to_record(p))
            fh.write("\n")
            count += 1
    return count


def iter_possessions(path) -> Iterator[Possession]:
    with open_text(path, "r") as fh:
        for k, text in enumerate(fh, start=1):
            if not _skip(text):
                yield possession_from_record(text, path, k)


def read_possessions(path) -> list[Possession]:
    return list(iter_possessions(path))


def oracle_to_record(possession_id: str, probs: np.ndarray) -> str:
    probs = np.asarray(probs, dtype=np.float64)
    rec = {"id": possession_id, "n": int(probs.shape[0]), "probs": [_num(v) for v in probs.ravel()]}
    return json.dumps(rec, separators=(",", ":"), allow_nan=False)


def write_oracles(path, items: Iterable[tuple[str, np.ndarray]], header: Iterable[str] = ()) -> None:
    with open_text(path, "w") as fh:
        _write_header(fh, header)
        for pid, probs in items:
            fh.write(oracle_to_record(pid, probs))
            fh.write("\n")


def read_oracles(path) -> dict[str, np.ndarray]:
    out = {}
    with open_text(path, "r") as fh:
        for k, text in enumerate(fh, start=1):
            if _skip(text):
                continue
            try:
                rec = json.loads(text)
                n = int(rec["n"])
                probs = np.array(rec["probs"], dtype=np.float64).reshape(n, N_CLASSES)
                out[str(rec["id"])] = probs
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, k, "probs", str(exc)) from None
    return out
