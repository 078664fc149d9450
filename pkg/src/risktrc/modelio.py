"""Reading and writing model files.

Two formats carry the same content:

* JSON: ``{"n_states", "n_actions", "transitions": [[s, a, s_next, p, r], ...],
  "mu": [...]}`` with optional ``"labels": {"states": [...], "actions": [...]}``,
  ``"allowed_actions"`` and ``"name"``. ``s_next = -1`` is the sink.
* CSV: ``transitions.csv`` with header ``s,a,s_next,p,r`` plus a sidecar
  ``mu.csv`` with header ``s,mu`` in the same directory. ``n_states`` and
  ``n_actions`` are inferred (largest id + 1, with ``mu.csv`` fixing the
  state count).

Floats are written with ``repr`` so a write/read round trip is lossless.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

from .errors import ModelFormatError
from .model import SINK, TransientMdp

CSV_HEADER = ["s", "a", "s_next", "p", "r"]
MU_HEADER = ["s", "mu"]
MU_SIDECAR = "mu.csv"


def atomic_write_text(path, text: str) -> None:
    """Write through a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# JSON


def model_to_dict(model: TransientMdp) -> dict:
    out = {
        "n_states": model.n_states,
        "n_actions": model.n_actions,
        "transitions": [list(t) for t in model.transitions()],
        "mu": [float(m) for m in model.mu],
    }
    if model.state_labels is not None or model.action_labels is not None:
        labels = {}
        if model.state_labels is not None:
            labels["states"] = list(model.state_labels)
        if model.action_labels is not None:
            labels["actions"] = list(model.action_labels)
        out["labels"] = labels
    if model.allowed_actions is not None:
        out["allowed_actions"] = [list(a) for a in model.allowed_actions]
    if model.name:
        out["name"] = model.name
    return out


def dumps_model(model: TransientMdp) -> str:
    """JSON text with one transition per line."""
    doc = model_to_dict(model)
    parts = []
    for key, value in doc.items():
        if key == "transitions":
            rows = ",\n".join("  " + json.dumps(t) for t in value)
            parts.append(f' "transitions": [\n{rows}\n ]' if value else ' "transitions": []')
        else:
            parts.append(f" {json.dumps(key)}: {json.dumps(value)}")
    return "{\n" + ",\n".join(parts) + "\n}\n"


def _line_of(text: str, needle_index: int) -> int:
    return text.count("\n", 0, needle_index) + 1


def _transition_lines(text: str, count: int) -> list[int | None]:
    """Best-effort 1-based line of each transition entry, for error messages."""
    key = text.find('"transitions"')
    if key < 0:
        return [None] * count
    lines: list[int | None] = []
    i = text.find("[", key)
    depth = 0
    while i < len(text) and len(lines) < count:
        ch = text[i]
        if ch == "[":
            depth += 1
            if depth == 2:
                lines.append(_line_of(text, i))
        elif ch == "]":
            depth -= 1
            if depth == 0:
                break
        i += 1
    return lines + [None] * (count - len(lines))


def _require_int(value, what: str, path, line) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ModelFormatError(f"{what} must be an integer, got {value!r}", path, line)
    return value


def _require_float(value, what: str, path, line) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFormatError(f"{what} must be a number, got {value!r}", path, line)
    return float(value)


def model_from_dict(doc, path=None, text: str | None = None) -> TransientMdp:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object", path, 1)
    for key in ("n_states", "n_actions", "transitions", "mu"):
        if key not in doc:
            raise ModelFormatError(f"missing required key {key!r}", path, 1)

    def key_line(key):
        if text is None:
            return None
        i = text.find(f'"{key}"')
        return _line_of(text, i) if i >= 0 else None

    n_states = _require_int(doc["n_states"], "n_states", path, key_line("n_states"))
    n_actions = _require_int(doc["n_actions"], "n_actions", path, key_line("n_actions"))
    raw = doc["transitions"]
    if not isinstance(raw, list):
        raise ModelFormatError("transitions must be a list", path, key_line("transitions"))
    lines = _transition_lines(text, len(raw)) if text is not None else [None] * len(raw)
    rows = []
    for k, (t, ln) in enumerate(zip(raw, lines)):
        if not isinstance(t, list) or len(t) != 5:
            raise ModelFormatError(f"transition {k} must be [s, a, s_next, p, r], got {t!r}", path, ln)
        s = _require_int(t[0], f"transition {k}: s", path, ln)
        a = _require_int(t[1], f"transition {k}: a", path, ln)
        t2 = _require_int(t[2], f"transition {k}: s_next", path, ln)
        p = _require_float(t[3], f"transition {k}: p", path, ln)
        r = _require_float(t[4], f"transition {k}: r", path, ln)
        _check_ids(s, a, t2, n_states, n_actions, f"transition {k}", path, ln)
        rows.append((s, a, t2, p, r))
    mu = doc["mu"]
    if not isinstance(mu, list):
        raise ModelFormatError("mu must be a list", path, key_line("mu"))
    mu = [_require_float(m, f"mu[{i}]", path, key_line("mu")) for i, m in enumerate(mu)]
    if len(mu) != n_states:
        raise ModelFormatError(f"mu has {len(mu)} entries, expected n_states = {n_states}", path, key_line("mu"))
    labels = doc.get("labels") or {}
    if not isinstance(labels, dict):
        raise ModelFormatError("labels must be an object with 'states'/'actions'", path, key_line("labels"))
    allowed = doc.get("allowed_actions")
    if allowed is not None:
        if not isinstance(allowed, list) or len(allowed) != n_states:
            raise ModelFormatError("allowed_actions must list one action set per state", path, key_line("allowed_actions"))
        allowed = [[_require_int(a, "allowed action", path, key_line("allowed_actions")) for a in acts] for acts in allowed]
    return TransientMdp.from_transitions(
        n_states,
        n_actions,
        rows,
        mu,
        state_labels=labels.get("states"),
        action_labels=labels.get("actions"),
        allowed_actions=allowed,
        name=str(doc.get("name", "")),
    )


def _check_ids(s, a, t, n_states, n_actions, what, path, line):
    if not 0 <= s < n_states:
        raise ModelFormatError(f"{what}: state {s} out of range [0, {n_states})", path, line)
    if not 0 <= a < n_actions:
        raise ModelFormatError(f"{what}: action {a} out of range [0, {n_actions})", path, line)
    if t != SINK and not 0 <= t < n_states:
        raise ModelFormatError(f"{what}: next state {t} out of range (use -1 for the sink)", path, line)


def loads_model(text: str, path=None) -> TransientMdp:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(exc.msg, path, exc.lineno) from exc
    return model_from_dict(doc, path, text)


# ---------------------------------------------------------------------------
# CSV


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_model_csv(model: TransientMdp, path) -> tuple[Path, Path]:
    """Write ``path`` plus ``mu.csv`` beside it. Labels and action sets are not part of this format."""
    path = Path(path)
    atomic_write_text(path, _csv_text(CSV_HEADER, model.transitions()))
    mu_path = path.parent / MU_SIDECAR
    atomic_write_text(mu_path, _csv_text(MU_HEADER, [(s, float(m)) for s, m in enumerate(model.mu)]))
    return path, mu_path


def _read_csv_rows(path: Path, header: list[str]):
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ModelFormatError("file not found", path) from exc
    reader = csv.reader(text.splitlines())
    got = next(reader, None)
    if got is None or [h.strip() for h in got] != header:
        raise ModelFormatError(f"expected header {','.join(header)!r}, got {','.join(got or [])!r}", path, 1)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ModelFormatError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
        yield lineno, [c.strip() for c in row]


def _parse(cast, cell, what, path, line):
    try:
        return cast(cell)
    except ValueError as exc:
        raise ModelFormatError(f"{what}: cannot parse {cell!r}", path, line) from exc


def read_model_csv(path, mu_path=None) -> TransientMdp:
    path = Path(path)
    mu_path = Path(mu_path) if mu_path is not None else path.parent / MU_SIDECAR
    rows = []
    for ln, (s, a, t, p, r) in _read_csv_rows(path, CSV_HEADER):
        rows.append(
            (
                _parse(int, s, "s", path, ln),
                _parse(int, a, "a", path, ln),
                _parse(int, t, "s_next", path, ln),
                _parse(float, p, "p", path, ln),
                _parse(float, r, "r", path, ln),
            )
        )
    mu_rows = {}
    for ln, (s, m) in _read_csv_rows(mu_path, MU_HEADER):
        s = _parse(int, s, "s", mu_path, ln)
        if s in mu_rows:
            raise ModelFormatError(f"duplicate state {s}", mu_path, ln)
        mu_rows[s] = (_parse(float, m, "mu", mu_path, ln), ln)
    n_states = max(mu_rows, default=-1) + 1
    if sorted(mu_rows) != list(range(n_states)):
        raise ModelFormatError("mu.csv must list every state 0..S-1 exactly once", mu_path)
    n_actions = max((r[1] for r in rows), default=-1) + 1
    for k, row in enumerate(rows):
        _check_ids(row[0], row[1], row[2], n_states, n_actions, f"row {k + 1}", path, k + 2)
    mu = [mu_rows[s][0] for s in range(n_states)]
    return TransientMdp.from_transitions(n_states, n_actions, rows, mu)


# ---------------------------------------------------------------------------
# dispatch on suffix


def read_model(path) -> TransientMdp:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_model_csv(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ModelFormatError("file not found", path) from exc
    return loads_model(text, path)


def write_model(model: TransientMdp, path) -> list[Path]:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return list(write_model_csv(model, path))
    atomic_write_text(path, dumps_model(model))
    return [path]
