"""export-snapshot <binary> -o <snapshot.json>

Exit codes: 0 success, 1 usage, 2 export failure (tool missing, analysis
failed, unreadable binary).  No output file is left behind on failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import ExportError, export_snapshot
from .r2 import R2Error


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def main(argv=None) -> int:
    parser = _Parser(prog="export-snapshot", description=__doc__)
    parser.add_argument("binary", help="path to the binary to analyze")
    parser.add_argument("-o", "--out", required=True, help="snapshot JSON output path")
    args = parser.parse_args(argv)
    try:
        doc = export_snapshot(Path(args.binary), Path(args.out))
    except (ExportError, R2Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    blocks = len(doc["blocks"])
    functions = len(doc["functions"])
    warn = f" warnings={','.join(doc['warnings'])}" if doc.get("warnings") else ""
    print(f"wrote {args.out}: {blocks} blocks, {functions} functions{warn}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
