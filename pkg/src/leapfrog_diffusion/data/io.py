"""Trajectory CSV interchange format.

Columns ``scene_id,agent_id,role,t,x,y``; ``role`` is ``ego`` or
``neighbor`` and ``t`` runs over ``0..T_p+T_f-1`` with the first ``T_p``
steps forming the past.  Lines starting with ``#`` are comments; a comment
of the form ``# t_past=<n>`` declares ``T_p``.  Neighbours may omit their
future rows, and so may the ego when the file is used for pure inference.
Scene metadata (intent labels, reference endpoints, generator settings) goes
to a JSON sidecar ``<path>.meta.json``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ParseError
from .scenes import SceneSet, TrajectoryScene

HEADER = "scene_id,agent_id,role,t,x,y"
ROLES = ("ego", "neighbor")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_scenes(scene_set: SceneSet, path, header_lines: list[str] | None = None) -> None:
    lines = [f"# {h}" for h in header_lines or []]
    lines.append(f"# t_past={scene_set.t_past}")
    lines.append(HEADER)
    for s in scene_set:
        ego = s.past if s.future is None else np.concatenate([s.past, s.future])
        for t, (x, y) in enumerate(ego):
            lines.append(f"{s.scene_id},0,ego,{t},{_fmt(x)},{_fmt(y)}")
        for j, nb in enumerate(s.neighbors, start=1):
            for t, (x, y) in enumerate(nb):
                lines.append(f"{s.scene_id},{j},neighbor,{t},{_fmt(x)},{_fmt(y)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    meta = {
        "set": _jsonable(scene_set.metadata),
        "t_past": scene_set.t_past,
        "t_future": scene_set.t_future,
        "scenes": {str(s.scene_id): _jsonable(s.meta) for s in scene_set if s.meta},
    }
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _from_json(obj):
    if isinstance(obj, dict):
        if set(obj) == {"__array__"}:
            return np.array(obj["__array__"], dtype=np.float64)
        return {k: _from_json(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_from_json(v) for v in obj]
    return obj


def read_scenes(path, t_past: int | None = None) -> SceneSet:
    path = Path(path)
    meta = {}
    if sidecar_path(path).exists():
        meta = _from_json(json.loads(sidecar_path(path).read_text(encoding="utf-8")))
    if t_past is None:
        t_past = meta.get("t_past")

    # scene_id -> agent_id -> (role, first line, [(t, x, y)])
    scenes: dict[int, dict[int, list]] = {}
    seen_header = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("t_past=") and t_past is None:
                    t_past = int(body.split("=", 1)[1])
                continue
            if not seen_header:
                if line.replace(" ", "") != HEADER:
                    raise ParseError(f"expected header {HEADER!r}, got {line!r}", lineno)
                seen_header = True
                continue
            fields = line.split(",")
            if len(fields) != 6:
                raise ParseError(f"expected 6 fields, got {len(fields)}", lineno)
            try:
                sid, aid, t = int(fields[0]), int(fields[1]), int(fields[3])
                x, y = float(fields[4]), float(fields[5])
            except ValueError as exc:
                raise ParseError(f"bad number: {exc}", lineno) from None
            role = fields[2].strip()
            if role not in ROLES:
                raise ParseError(f"unknown role {role!r} (expected one of {ROLES})", lineno)
            agents = scenes.setdefault(sid, {})
            if aid not in agents:
                agents[aid] = [role, lineno, []]
            elif agents[aid][0] != role:
                raise ParseError(f"agent {aid} of scene {sid} changes role", lineno)
            agents[aid][2].append((t, x, y, lineno))
    if not seen_header:
        raise ParseError(f"missing header {HEADER!r}", None)

    out: list[TrajectoryScene] = []
    t_future = None
    n_neighbors = None
    for sid, agents in scenes.items():
        egos = [a for a, v in agents.items() if v[0] == "ego"]
        if len(egos) != 1:
            line = next(iter(agents.values()))[1]
            raise ParseError(f"scene {sid} needs exactly one ego agent, found {len(egos)}", line)
        ego_rows = agents[egos[0]][2]
        if t_past is None:
            nb_lens = [len(v[2]) for v in agents.values() if v[0] == "neighbor"]
            if nb_lens and min(nb_lens) < len(ego_rows):
                t_past = min(nb_lens)
            else:
                raise ParseError("cannot determine the past length; add a '# t_past=<n>' comment", None)
        ego = _series(sid, egos[0], ego_rows)
        if len(ego) < t_past:
            raise ParseError(f"scene {sid}: ego has {len(ego)} steps, fewer than t_past={t_past}", ego_rows[-1][3])
        fut_len = len(ego) - t_past
        if fut_len:
            if t_future is None:
                t_future = fut_len
            elif fut_len != t_future:
                raise ParseError(f"scene {sid}: ego future has {fut_len} steps, expected {t_future}", ego_rows[-1][3])
        neighbors = []
        for aid in sorted(a for a, v in agents.items() if v[0] == "neighbor"):
            rows = agents[aid][2]
            series = _series(sid, aid, rows)
            if len(series) < t_past:
                raise ParseError(f"scene {sid}: neighbour {aid} has {len(series)} steps < t_past={t_past}", rows[-1][3])
            neighbors.append(series[:t_past])
        if n_neighbors is None:
            n_neighbors = len(neighbors)
        elif len(neighbors) != n_neighbors:
            raise ParseError(f"scene {sid}: {len(neighbors)} neighbours, expected {n_neighbors}", agents[egos[0]][1])
        scene_meta = meta.get("scenes", {}).get(str(sid), {})
        out.append(
            TrajectoryScene(
                past=ego[:t_past],
                neighbors=np.array(neighbors).reshape(len(neighbors), t_past, 2),
                future=ego[t_past:] if fut_len else None,
                scene_id=sid,
                meta=scene_meta,
            )
        )
    if t_future is None:
        t_future = meta.get("t_future", 0)
    has_future = [s.future is not None for s in out]
    if any(has_future) and not all(has_future):
        sid = out[has_future.index(False)].scene_id
        raise ParseError(f"scene {sid}: ego has no future while other scenes do (ragged file)", None)
    return SceneSet(out, int(t_past or 0), int(t_future), int(n_neighbors or 0), metadata=meta.get("set", {}))


def _series(sid: int, aid: int, rows: list) -> np.ndarray:
    rows = sorted(rows, key=lambda r: r[0])
    ts = [r[0] for r in rows]
    if ts != list(range(len(ts))):
        bad = next((r for i, r in enumerate(rows) if r[0] != i), rows[-1])
        raise ParseError(f"scene {sid}, agent {aid}: time steps must run 0..{len(ts) - 1} without gaps", bad[3])
    return np.array([[r[1], r[2]] for r in rows], dtype=np.float64)
