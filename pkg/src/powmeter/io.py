"""Reading and writing chain datasets, reports, and result records.

Headers and reports use JSON Lines with hex-encoded 256-bit values; result
records export to JSON or CSV with stable column ordering.
"""
from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .chain import (
    BITCOIN_STYLE,
    CHAIN_KINDS,
    BlockHeader,
    ChainKind,
    StatusReport,
    Target,
    target_from_difficulty,
    target_from_raw,
    validate_header,
)


class ChainDataError(ValueError):
    """Malformed or inconsistent chain data; message carries location context."""


@dataclass
class ChainDataset:
    headers: list[BlockHeader]
    reports: Optional[list[StatusReport]] = None
    chain_kind: ChainKind = BITCOIN_STYLE
    provenance: str = ""


def _hex_to_int(value: str, what: str, line: int) -> int:
    try:
        return int(value, 16)
    except (TypeError, ValueError):
        raise ChainDataError(f"line {line}: invalid hex for {what}: {value!r}")


def _parse_header(obj: dict, line: int, chain_kind: ChainKind) -> BlockHeader:
    try:
        if "target" in obj:
            target = target_from_raw(_hex_to_int(obj["target"], "target", line),
                                     chain_kind)
        elif "difficulty" in obj:
            target = target_from_difficulty(float(obj["difficulty"]), chain_kind)
        else:
            raise ChainDataError(f"line {line}: header needs target or difficulty")
        return BlockHeader(
            id=obj["id"],
            parent_id=obj["parent"],
            timestamp=int(obj["ts"]),
            pow_hash=_hex_to_int(obj["pow"], "pow", line),
            target=target,
            miner=obj["miner"],
            is_ommer=bool(obj.get("ommer", False)),
        )
    except KeyError as e:
        raise ChainDataError(f"line {line}: missing header field {e}")


def _topo_sort(headers: list[BlockHeader]) -> list[BlockHeader]:
    by_id = {h.id: h for h in headers}
    children: dict[str, list[str]] = {}
    roots = []
    for h in headers:
        if h.parent_id in by_id:
            children.setdefault(h.parent_id, []).append(h.id)
        else:
            roots.append(h.id)
    ordered = []
    stack = list(reversed(roots))
    while stack:
        hid = stack.pop()
        ordered.append(by_id[hid])
        stack.extend(reversed(children.get(hid, [])))
    if len(ordered) != len(headers):
        raise ChainDataError("cycle detected in header parent links")
    return ordered


def read_headers(path: str | Path,
                 chain_kind: str | ChainKind = BITCOIN_STYLE,
                 provenance: str = "") -> ChainDataset:
    """Parse, validate, and topologically order a headers file."""
    if isinstance(chain_kind, str):
        chain_kind = CHAIN_KINDS[chain_kind]
    headers = []
    seen = set()
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ChainDataError(f"line {line_no}: {e}")
            header = _parse_header(obj, line_no, chain_kind)
            if header.id in seen:
                raise ChainDataError(f"line {line_no}: duplicate id {header.id}")
            seen.add(header.id)
            violations = validate_header(header)
            if violations:
                raise ChainDataError(
                    f"line {line_no}: header {header.id}: {'; '.join(violations)}")
            headers.append(header)
    return ChainDataset(headers=_topo_sort(headers), chain_kind=chain_kind,
                        provenance=provenance)


def write_headers(headers: Sequence[BlockHeader], path: str | Path) -> None:
    with open(path, "w") as fh:
        for h in headers:
            fh.write(json.dumps({
                "id": h.id,
                "parent": h.parent_id,
                "ts": h.timestamp,
                "pow": f"{h.pow_hash:064x}",
                "target": f"{h.target.t:064x}",
                "miner": h.miner,
                "ommer": h.is_ommer,
            }) + "\n")


def read_reports(path: str | Path) -> list[StatusReport]:
    """Parse a reports file; chain verification is a separate, explicit step."""
    reports = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ChainDataError(f"line {line_no}: {e}")
            try:
                reports.append(StatusReport(
                    miner=obj["miner"],
                    interval_index=int(obj["idx"]),
                    interval_seconds=float(obj["sigma"]),
                    min_hash=_hex_to_int(obj["min_hash"], "min_hash", line_no),
                    report_nonce=_hex_to_int(obj["nonce"], "nonce", line_no),
                    chained_nonce=_hex_to_int(obj["chained"], "chained", line_no),
                    prior_block_id=obj["prior_block"],
                ))
            except KeyError as e:
                raise ChainDataError(f"line {line_no}: missing report field {e}")
    return reports


def write_reports(reports: Sequence[StatusReport], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in reports:
            fh.write(json.dumps({
                "miner": r.miner,
                "idx": r.interval_index,
                "sigma": r.interval_seconds,
                "min_hash": f"{r.min_hash:064x}",
                "nonce": f"{r.report_nonce:064x}",
                "chained": f"{r.chained_nonce:064x}",
                "prior_block": r.prior_block_id,
            }) + "\n")


def write_ground_truth(segments, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump([{
            "start": s.start,
            "end": s.end,
            "rates": s.rates,
            "total_rate": s.total_rate,
        } for s in segments], fh, indent=2)


def _record_to_dict(record) -> dict:
    if dataclasses.is_dataclass(record) and not isinstance(record, type):
        return dataclasses.asdict(record)
    if isinstance(record, dict):
        return dict(record)
    raise TypeError(f"cannot serialize record of type {type(record)!r}")


def _format_value(value):
    if isinstance(value, float):
        return f"{value:.12g}"
    return value


def export_results(records: Sequence, fmt: str, path: str | Path,
                   columns: Optional[Sequence[str]] = None) -> None:
    """Write homogeneous records as JSON (round-trippable) or CSV."""
    dicts = [_record_to_dict(r) for r in records]
    if dicts:
        cols = list(dicts[0].keys())
        for d in dicts[1:]:
            if list(d.keys()) != cols:
                raise ValueError("records are not homogeneous")
    else:
        cols = list(columns) if columns else []
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(dicts, fh, indent=2)
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for d in dicts:
                writer.writerow([_format_value(d[c]) for c in cols])
    else:
        raise ValueError(f"unknown format: {fmt}")


def import_results(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return json.load(fh)
