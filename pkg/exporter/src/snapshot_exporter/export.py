"""Assemble a schema-v1 snapshot document from radare2 query results.

The exporter never leaves a partial file behind: the document is built and
checked in memory, then written atomically.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

from .r2 import query_json

FUNCTION_WARNING_LIMIT = 300
WARNING_MARKER = "function_count_exceeds_300"

# radare2 instruction types that transfer to a callable
_CALL_TYPES = {"call", "ucall", "rcall", "icall", "ircall", "ccall"}


class ExportError(RuntimeError):
    """The binary produced data we cannot turn into a valid snapshot."""


def _mnemonic(op_text: str) -> str:
    token = op_text.split()[0].lower() if op_text.split() else ""
    if not token:
        raise ExportError(f"instruction without a mnemonic: {op_text!r}")
    return token


def _collect_blocks(binary: Path, entry_addr: int):
    (raw_blocks,) = query_json(binary, [f"afbj @ {entry_addr:#x}"])
    if not raw_blocks:
        raise ExportError(f"no basic blocks recovered at entry {entry_addr:#x}")
    raw_blocks = sorted(raw_blocks, key=lambda b: int(b["addr"]))
    addr_to_id = {int(b["addr"]): i for i, b in enumerate(raw_blocks)}

    per_block = query_json(
        binary, [f"pdbj @ {int(b['addr']):#x}" for b in raw_blocks]
    )
    blocks = []
    edges = set()
    for bid, (raw, ops) in enumerate(zip(raw_blocks, per_block)):
        addr = int(raw["addr"])
        instructions = []
        for op in ops or []:
            op_type = op.get("type", "")
            is_call = op_type in _CALL_TYPES
            ins = {"addr": int(op["offset"]), "mnemonic": _mnemonic(op.get("opcode", ""))}
            if is_call:
                ins["is_call"] = True
                if op.get("jump") is not None:
                    ins["call_target"] = int(op["jump"])
            instructions.append(ins)
        instructions.sort(key=lambda i: i["addr"])
        if instructions:
            addr = instructions[0]["addr"]
        blocks.append({"id": bid, "start_addr": addr, "instructions": instructions})
        for key in ("jump", "fail"):
            target = raw.get(key)
            if target is not None and int(target) in addr_to_id:
                edges.add((bid, addr_to_id[int(target)]))
    return blocks, sorted(edges)


def build_snapshot(binary: Path) -> dict:
    binary = Path(binary)
    if not binary.is_file():
        raise ExportError(f"binary {binary} not found")

    sections_raw, imports_raw, strings_raw, functions_raw, entries_raw = query_json(
        binary, ["iSj", "iij", "izj", "aflj", "iej"]
    )

    sections = [
        {
            "name": str(s.get("name", "")),
            "virtual_size": int(s.get("vsize", 0)),
            "physical_size": int(s.get("size", 0)),
        }
        for s in sections_raw or []
    ]

    imports = [
        {"name": str(i["name"]), "plt_addr": int(i["plt"])}
        for i in imports_raw or []
        if i.get("plt")
    ]

    functions = []
    for fn in functions_raw or []:
        call_sites = [
            [int(ref["at"]), int(ref["addr"])]
            for ref in fn.get("callrefs", [])
            if ref.get("type", "").upper() == "CALL" and "at" in ref and "addr" in ref
        ]
        functions.append(
            {
                "name": str(fn.get("name", f"fcn.{int(fn['offset']):x}")),
                "entry_addr": int(fn["offset"]),
                "call_sites": sorted(call_sites),
            }
        )
    functions.sort(key=lambda f: f["entry_addr"])

    if not entries_raw:
        raise ExportError("binary has no entry point")
    entry_addr = int(entries_raw[0]["vaddr"])
    entry_name = next(
        (f["name"] for f in functions if f["entry_addr"] == entry_addr), "entry0"
    )
    if all(f["entry_addr"] != entry_addr for f in functions):
        functions.append({"name": entry_name, "entry_addr": entry_addr, "call_sites": []})
        functions.sort(key=lambda f: f["entry_addr"])

    string_items = [
        (str(s["string"]), int(s["vaddr"]))
        for s in strings_raw or []
        if s.get("string") and s.get("vaddr") is not None
    ]
    refs_per_string = query_json(
        binary, [f"axtj @ {vaddr:#x}" for _text, vaddr in string_items]
    ) if string_items else []
    strings = []
    for (text, _vaddr), refs in zip(string_items, refs_per_string):
        strings.append(
            {
                "text": text,
                "ref_addrs": sorted({int(r["from"]) for r in refs or [] if "from" in r}),
            }
        )

    blocks, edges = _collect_blocks(binary, entry_addr)

    warnings = []
    if len(functions) > FUNCTION_WARNING_LIMIT:
        warnings.append(WARNING_MARKER)

    doc = {
        "schema_version": 1,
        "binary_id": hashlib.sha256(binary.read_bytes()).hexdigest(),
        "sections": sections,
        "imports": imports,
        "strings": strings,
        "functions": functions,
        "entry_function": {"name": entry_name, "addr": entry_addr},
        "blocks": blocks,
        "edges": [list(e) for e in edges],
    }
    if warnings:
        doc["warnings"] = warnings
    _check(doc)
    return doc


def _check(doc: dict) -> None:
    """Schema self-check so an invalid document is never written out."""
    blocks = doc["blocks"]
    ids = [b["id"] for b in blocks]
    if ids != list(range(len(blocks))):
        raise ExportError("block ids are not dense")
    if any(
        blocks[i]["start_addr"] >= blocks[i + 1]["start_addr"]
        for i in range(len(blocks) - 1)
    ):
        raise ExportError("blocks are not in ascending address order")
    id_set = set(ids)
    for u, v in doc["edges"]:
        if u not in id_set or v not in id_set:
            raise ExportError(f"dangling edge ({u}, {v})")
    entry = doc["entry_function"]["addr"]
    containing = [
        b["id"]
        for b in blocks
        if b["start_addr"] <= entry
        and entry <= (b["instructions"][-1]["addr"] if b["instructions"] else b["start_addr"])
    ]
    if len(containing) != 1:
        raise ExportError(f"{len(containing)} blocks contain the entry address")
    for b in blocks:
        addrs = [i["addr"] for i in b["instructions"]]
        if addrs != sorted(set(addrs)):
            raise ExportError(f"block {b['id']} instructions not strictly ascending")
        for ins in b["instructions"]:
            m = ins["mnemonic"]
            if not m or m != m.lower() or any(ch.isspace() for ch in m):
                raise ExportError(f"bad mnemonic {m!r} in block {b['id']}")
            if "call_target" in ins and not ins.get("is_call"):
                raise ExportError("call_target without is_call")


def export_snapshot(binary: Path, out_path: Path) -> dict:
    """Analyze ``binary`` and atomically write the snapshot to ``out_path``."""
    doc = build_snapshot(Path(binary))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        dir=out_path.parent, prefix=out_path.name, suffix=".tmp"
    )
    try:
        with os.fdopen(fd, "w") as handle:
            json.dump(doc, handle, indent=1)
            handle.write("\n")
        os.replace(tmp_name, out_path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
    return doc
