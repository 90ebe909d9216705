"""MOTChallenge-style text files and the embedding side table.

Detection / result lines: ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z``.
Raw detections carry ``id = -1``. Result files written here store the
originating detection index in the ``x`` column (``-1`` for interpolated
boxes) so embeddings can be re-joined later.

GT lines: ``frame,id,bb_left,bb_top,bb_width,bb_height,flag,class,visibility``.

Embedding CSV: header ``frame,det_index,f0,...,f{D-1}``, one row per detection.
"""

from __future__ import annotations

import configparser
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from ..core import BBox, Detection, GTRecord, SequenceBundle, Tracklet


class MOTFormatError(ValueError):
    pass


def fmt(x: float) -> str:
    """Shortest round-tripping positional decimal, no trailing zeros."""
    x = float(x)
    if x == 0:
        return "0"
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return np.format_float_positional(x, trim="-")


def _lines(path) -> Iterable[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, [f.strip() for f in line.split(",")]


def _numbers(path, lineno: int, fields: list[str], arity: int) -> list[float]:
    if len(fields) < arity:
        raise MOTFormatError(f"{path}:{lineno}: expected {arity} fields, found {len(fields)}")
    try:
        return [float(f) for f in fields]
    except ValueError as exc:
        raise MOTFormatError(f"{path}:{lineno}: {exc}") from exc


def _box(path, lineno, x, y, w, h) -> BBox:
    try:
        return BBox(x, y, w, h)
    except ValueError as exc:
        raise MOTFormatError(f"{path}:{lineno}: {exc}") from exc


def _frame(path, lineno, value: float) -> int:
    if not value.is_integer() or value < 1:
        raise MOTFormatError(f"{path}:{lineno}: frame must be a positive integer, got {value}")
    return int(value)


def read_detections(path) -> dict[int, list[Detection]]:
    """Per-frame detections in file order; ``det_index`` is the position within the frame."""
    frames: dict[int, list[Detection]] = defaultdict(list)
    for lineno, fields in _lines(path):
        v = _numbers(path, lineno, fields, 7)
        frame = _frame(path, lineno, v[0])
        box = _box(path, lineno, *v[2:6])
        det_index = len(frames[frame])
        frames[frame].append(Detection(frame, box, v[6], None, det_index))
    return dict(frames)


def write_detections(path, detections: Iterable[Detection]) -> None:
    rows = sorted(detections, key=lambda d: (d.frame, d.det_index))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d in rows:
            b = d.box
            fh.write(
                f"{d.frame},-1,{fmt(b.x)},{fmt(b.y)},{fmt(b.w)},{fmt(b.h)},{fmt(d.confidence)},-1,-1,-1\n"
            )


def read_tracks(path) -> list[Tracklet]:
    """Group result lines by id into tracklets, ordered by id."""
    by_id: dict[int, list[Detection]] = defaultdict(list)
    per_frame: dict[int, int] = defaultdict(int)
    for lineno, fields in _lines(path):
        v = _numbers(path, lineno, fields, 7)
        frame = _frame(path, lineno, v[0])
        box = _box(path, lineno, *v[2:6])
        det_index = int(v[7]) if len(v) > 7 and v[7] >= 0 else -1
        per_frame[frame] += 1
        by_id[int(v[1])].append(Detection(frame, box, v[6], None, det_index))
    tracks = []
    for tid in sorted(by_id):
        dets = sorted(by_id[tid], key=lambda d: d.frame)
        try:
            tracks.append(Tracklet(tid, dets))
        except ValueError as exc:
            raise MOTFormatError(f"{path}: {exc}") from exc
    return tracks


def write_tracks(path, tracks: Iterable[Tracklet]) -> None:
    rows = sorted(((d.frame, t.id, d) for t in tracks for d in t.detections), key=lambda r: r[:2])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for frame, tid, d in rows:
            b = d.box
            fh.write(
                f"{frame},{tid},{fmt(b.x)},{fmt(b.y)},{fmt(b.w)},{fmt(b.h)},"
                f"{fmt(d.confidence)},{d.det_index if d.det_index >= 0 else -1},-1,-1\n"
            )


def read_gt(path) -> list[GTRecord]:
    out = []
    for lineno, fields in _lines(path):
        v = _numbers(path, lineno, fields, 9)
        frame = _frame(path, lineno, v[0])
        box = _box(path, lineno, *v[2:6])
        out.append(GTRecord(frame, int(v[1]), box, v[8], int(v[6]), int(v[7])))
    return out


def write_gt(path, records: Iterable[GTRecord]) -> None:
    rows = sorted(records, key=lambda r: (r.frame, r.identity))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in rows:
            b = r.box
            fh.write(
                f"{r.frame},{r.identity},{fmt(b.x)},{fmt(b.y)},{fmt(b.w)},{fmt(b.h)},"
                f"{r.flag},{r.cls},{fmt(r.visibility)}\n"
            )


def read_embeddings(path) -> tuple[int, dict[tuple[int, int], np.ndarray]]:
    """Return (D_app, {(frame, det_index): vector})."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["frame", "det_index"] or len(header) < 3:
            raise MOTFormatError(f"{path}:1: header must be frame,det_index,f0,...")
        dim = len(header) - 2
        table: dict[tuple[int, int], np.ndarray] = {}
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != dim + 2:
                raise MOTFormatError(
                    f"{path}:{lineno}: expected {dim} embedding values, found {len(fields) - 2}"
                )
            try:
                frame, idx = int(fields[0]), int(fields[1])
                table[(frame, idx)] = np.array([float(f) for f in fields[2:]])
            except ValueError as exc:
                raise MOTFormatError(f"{path}:{lineno}: {exc}") from exc
    return dim, table


def write_embeddings(path, detections: Iterable[Detection]) -> None:
    rows = sorted(
        (d for d in detections if d.embedding is not None), key=lambda d: (d.frame, d.det_index)
    )
    if not rows:
        raise ValueError("no embeddings to write")
    dim = rows[0].embedding.shape[0]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["frame", "det_index"] + [f"f{k}" for k in range(dim)]) + "\n")
        for d in rows:
            if d.embedding.shape[0] != dim:
                raise ValueError(f"embedding dimension {d.embedding.shape[0]} != {dim}")
            fh.write(f"{d.frame},{d.det_index}," + ",".join(fmt(v) for v in d.embedding) + "\n")


def attach_embeddings(detections: Iterable[Detection], table) -> list[Detection]:
    return [d.with_embedding(table.get((d.frame, d.det_index))) for d in detections]


def attach_to_tracks(tracks: Sequence[Tracklet], table) -> list[Tracklet]:
    return [Tracklet(t.id, attach_embeddings(t.detections, table)) for t in tracks]


def read_seqinfo(path) -> dict:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path, encoding="utf-8") or "Sequence" not in parser:
        raise MOTFormatError(f"{path}: missing [Sequence] section")
    sec = parser["Sequence"]
    try:
        info = {
            "name": sec.get("name", Path(path).parent.name),
            "fps": float(sec["frameRate"]),
            "frame_count": int(sec["seqLength"]),
        }
    except (KeyError, ValueError) as exc:
        raise MOTFormatError(f"{path}: bad or missing key {exc}") from exc
    if "imWidth" in sec and "imHeight" in sec:
        info["width"] = float(sec["imWidth"])
        info["height"] = float(sec["imHeight"])
    return info


def write_seqinfo(path, bundle: SequenceBundle) -> None:
    lines = [
        "[Sequence]",
        f"name={bundle.name}",
        f"frameRate={fmt(bundle.fps)}",
        f"seqLength={bundle.frame_count}",
    ]
    if bundle.width is not None and bundle.height is not None:
        lines += [f"imWidth={fmt(bundle.width)}", f"imHeight={fmt(bundle.height)}"]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


DET_FILE = Path("det") / "det.txt"
GT_FILE = Path("gt") / "gt.txt"
EMB_FILE = Path("emb") / "emb.csv"
SEQINFO = "seqinfo.ini"


def save_sequence(bundle: SequenceBundle, directory) -> Path:
    """Lay a bundle out as ``seqinfo.ini``, ``det/det.txt``, ``gt/gt.txt``, ``emb/emb.csv``."""
    root = Path(directory)
    for sub in (DET_FILE, GT_FILE, EMB_FILE):
        (root / sub).parent.mkdir(parents=True, exist_ok=True)
    write_seqinfo(root / SEQINFO, bundle)
    dets = bundle.all_detections()
    write_detections(root / DET_FILE, dets)
    if any(d.embedding is not None for d in dets):
        write_embeddings(root / EMB_FILE, dets)
    if bundle.ground_truth is not None:
        write_gt(root / GT_FILE, bundle.ground_truth)
    return root


def load_sequence(
    directory,
    det_path=None,
    emb_path=None,
    gt_path=None,
) -> SequenceBundle:
    root = Path(directory)
    info = read_seqinfo(root / SEQINFO)
    det_path = Path(det_path) if det_path else root / DET_FILE
    if not det_path.exists():
        raise FileNotFoundError(f"detections file {det_path} not found")
    per_frame = read_detections(det_path)
    emb_path = Path(emb_path) if emb_path else root / EMB_FILE
    table = read_embeddings(emb_path)[1] if emb_path.exists() else {}
    gt_path = Path(gt_path) if gt_path else root / GT_FILE
    gt = read_gt(gt_path) if gt_path.exists() else None
    frames = [
        attach_embeddings(per_frame.get(f, []), table) for f in range(1, info["frame_count"] + 1)
    ]
    outside = sorted(f for f in per_frame if f > info["frame_count"])
    if outside:
        raise MOTFormatError(
            f"{det_path}: frame {outside[0]} beyond seqLength {info['frame_count']}"
        )
    return SequenceBundle(
        info["name"], info["fps"], info["frame_count"], frames, gt,
        info.get("width"), info.get("height"),
    )
