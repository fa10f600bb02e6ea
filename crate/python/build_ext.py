#!/usr/bin/env python3
"""Build the parframe_py extension with cargo and copy it next to this script.

Fallback for environments without maturin: `pip install crates/parframe-py`
is the preferred route where maturin is available.
"""

import shutil
import subprocess
import sys
import sysconfig
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "parframe-py"], cwd=ROOT, check=True
    )
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    built = ROOT / "target" / "release" / "libparframe_py.so"
    if not built.exists():  # macOS / Windows artifact names
        for candidate in ("libparframe_py.dylib", "parframe_py.dll"):
            alt = ROOT / "target" / "release" / candidate
            if alt.exists():
                built = alt
                break
    target = Path(__file__).resolve().parent / f"parframe_py{suffix}"
    shutil.copy2(built, target)
    print(f"extension ready: {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
