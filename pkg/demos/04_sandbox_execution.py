"""Sandboxed execution: capture, artifacts, and timeout hygiene."""

import sys
import tempfile
from pathlib import Path

from labloop.sandbox import ExecutionRequest, collect_artifacts, execute

base = Path(tempfile.mkdtemp(prefix="demo-sandbox-"))

# A well-behaved program: writes results and an archive directory.
workdir = base / "ok"
workdir.mkdir()
(workdir / "main.py").write_text(
    "import json, os\n"
    "json.dump({'score': 0.42}, open('results.json', 'w'))\n"
    "os.makedirs('to_save', exist_ok=True)\n"
    "open('to_save/plot.txt', 'w').write('fake plot')\n"
    "print('RESULT 0.42')\n",
    "utf-8",
)
record = execute(
    ExecutionRequest(
        run_id="demo", iteration_index=1, workdir=workdir,
        entry_command=(sys.executable, "main.py"), time_limit=30.0,
    )
)
print(f"exit: {record.exit_status} (code {record.exit_code}) in {record.duration:.2f}s")
print(f"stdout: {record.stdout.decode().strip()!r}")
print(f"artifacts: {record.artifacts}")

digests, warnings = collect_artifacts(record, workdir, base / "archive")
for path, digest in digests:
    print(f"  archived {path}  sha256={digest[:12]}...")

# A runaway program: killed at the limit, process group included.
runaway = base / "runaway"
runaway.mkdir()
(runaway / "main.py").write_text("import time\nprint('started', flush=True)\ntime.sleep(600)\n", "utf-8")
record = execute(
    ExecutionRequest(
        run_id="demo", iteration_index=2, workdir=runaway,
        entry_command=(sys.executable, "main.py"), time_limit=1.0,
    )
)
print(f"\nrunaway: {record.exit_status} after {record.duration:.2f}s "
      f"(limit 1s + kill window); stdout still captured: {record.stdout.decode().strip()!r}")
