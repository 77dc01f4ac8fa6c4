"""Instrumented execution sandbox.

Runs one generated program in its own working directory and process group,
enforces a wall-clock limit with a 2 s kill window, captures stdout/stderr
byte-exactly up to a cap, and enumerates every file the program created.
Isolation is directory + process-group + environment-allowlist level;
container isolation is a deployment concern layered on top.
"""

from __future__ import annotations

import hashlib
import os
import shutil
import signal
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

KILL_GRACE_SECONDS = 2.0
DEFAULT_STREAM_CAP = 16 * 1024 * 1024

STATUS_COMPLETED = "completed"
STATUS_TIMED_OUT = "timed_out"
STATUS_LAUNCH_FAILED = "launch_failed"

_BASE_ENV_PASSTHROUGH = ("PATH", "LANG", "LC_ALL", "SYSTEMROOT")


@dataclass(frozen=True)
class ExecutionRequest:
    run_id: str
    iteration_index: int
    workdir: Path
    entry_command: tuple[str, ...]
    env: dict[str, str] = field(default_factory=dict)
    time_limit: float = 5400.0

    def __post_init__(self) -> None:
        if self.time_limit <= 0:
            raise ValidationError("time_limit must be > 0")


@dataclass
class ExecutionRecord:
    exit_status: str
    exit_code: int | None
    stdout: bytes
    stderr: bytes
    duration: float
    artifacts: list[str] = field(default_factory=list)
    log_files: list[tuple[str, bytes]] = field(default_factory=list)
    stdout_truncated: bool = False
    stderr_truncated: bool = False
    diagnostic: str = ""

    @property
    def timed_out(self) -> bool:
        return self.exit_status == STATUS_TIMED_OUT

    @property
    def completed_ok(self) -> bool:
        return self.exit_status == STATUS_COMPLETED and self.exit_code == 0


def _snapshot(workdir: Path) -> set[str]:
    return {
        str(path.relative_to(workdir))
        for path in workdir.rglob("*")
        if path.is_file()
    }


def _build_env(request: ExecutionRequest, scratch: Path) -> dict[str, str]:
    env: dict[str, str] = {}
    for key in _BASE_ENV_PASSTHROUGH:
        value = os.environ.get(key)
        if value:
            env[key] = value
    env["HOME"] = str(request.workdir)
    env["TMPDIR"] = str(scratch)
    env["PYTHONDONTWRITEBYTECODE"] = "1"
    env.update(request.env)
    return env


def _read_capped(path: Path, cap: int) -> tuple[bytes, bool]:
    size = path.stat().st_size
    with open(path, "rb") as handle:
        data = handle.read(cap)
    return data, size > cap


def _signal_group(pgid: int, sig: int) -> None:
    try:
        os.killpg(pgid, sig)
    except ProcessLookupError:
        pass


def _sweep_group(pgid: int) -> None:
    """Kill any group members left after the main child was reaped."""
    if not process_group_alive(pgid):
        return
    _signal_group(pgid, signal.SIGKILL)
    deadline = time.monotonic() + 1.0
    while time.monotonic() < deadline and process_group_alive(pgid):
        time.sleep(0.01)


def process_group_alive(pgid: int) -> bool:
    try:
        os.killpg(pgid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def execute(request: ExecutionRequest, stream_cap: int = DEFAULT_STREAM_CAP) -> ExecutionRecord:
    """Run the program and return a full capture; timeout is a status, not an error."""
    workdir = Path(request.workdir)
    if not workdir.is_dir():
        return ExecutionRecord(
            exit_status=STATUS_LAUNCH_FAILED,
            exit_code=None,
            stdout=b"",
            stderr=b"",
            duration=0.0,
            diagnostic=f"workdir does not exist: {workdir}",
        )

    before = _snapshot(workdir)
    started = time.monotonic()

    with tempfile.TemporaryDirectory(prefix="sandbox-cap-") as capture_dir:
        scratch = Path(capture_dir)
        stdout_path = scratch / "stdout"
        stderr_path = scratch / "stderr"
        try:
            with open(stdout_path, "wb") as out, open(stderr_path, "wb") as err:
                process = subprocess.Popen(
                    list(request.entry_command),
                    cwd=workdir,
                    stdout=out,
                    stderr=err,
                    stdin=subprocess.DEVNULL,
                    env=_build_env(request, scratch),
                    start_new_session=True,
                )
        except (FileNotFoundError, PermissionError, NotADirectoryError, OSError) as exc:
            return ExecutionRecord(
                exit_status=STATUS_LAUNCH_FAILED,
                exit_code=None,
                stdout=b"",
                stderr=b"",
                duration=time.monotonic() - started,
                diagnostic=f"launch failed: {exc}",
            )

        pgid = process.pid
        timed_out = False
        try:
            exit_code: int | None = process.wait(timeout=request.time_limit)
        except subprocess.TimeoutExpired:
            timed_out = True
            _signal_group(pgid, signal.SIGTERM)
            try:
                exit_code = process.wait(timeout=KILL_GRACE_SECONDS - 0.5)
            except subprocess.TimeoutExpired:
                _signal_group(pgid, signal.SIGKILL)
                process.wait()
                exit_code = None
        # The main child is reaped; sweep any same-group stragglers.
        _sweep_group(pgid)
        duration = time.monotonic() - started

        stdout, stdout_truncated = _read_capped(stdout_path, stream_cap)
        stderr, stderr_truncated = _read_capped(stderr_path, stream_cap)

    after = _snapshot(workdir)
    artifacts = sorted(after - before)
    log_files: list[tuple[str, bytes]] = []
    for rel in artifacts:
        if rel.endswith(".log") or rel.startswith("logs/") or "/logs/" in rel:
            data, _ = _read_capped(workdir / rel, stream_cap)
            log_files.append((rel, data))

    return ExecutionRecord(
        exit_status=STATUS_TIMED_OUT if timed_out else STATUS_COMPLETED,
        exit_code=None if timed_out else exit_code,
        stdout=stdout,
        stderr=stderr,
        duration=duration,
        artifacts=artifacts,
        log_files=log_files,
        stdout_truncated=stdout_truncated,
        stderr_truncated=stderr_truncated,
    )


def collect_artifacts(
    record: ExecutionRecord, workdir: Path, destination: Path
) -> tuple[list[tuple[str, str]], list[str]]:
    """Copy produced artifacts under destination; returns (digests, warnings).

    Digests are (relative path, sha256). A file that vanished between
    enumeration and copy produces a warning entry, not a failure.
    """
    destination.mkdir(parents=True, exist_ok=True)
    digests: list[tuple[str, str]] = []
    warnings: list[str] = []
    for rel in record.artifacts:
        source = Path(workdir) / rel
        target = destination / rel
        try:
            data = source.read_bytes()
        except OSError as exc:
            warnings.append(f"unreadable artifact {rel}: {exc}")
            continue
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(source, target)
        digests.append((rel, hashlib.sha256(data).hexdigest()))
    return digests, warnings
