"""Append-only provenance records for run directories.

Every artifact a run produces (grasp cache, checkpoint, metrics table,
figure) gets one manifest entry carrying its path, content digest, and the
config/seed that produced it, so any output can be traced and regenerated
from the manifest alone.
"""

import hashlib
import json
import os
import subprocess
import time

MANIFEST_NAME = "manifest.jsonl"


def file_digest(path, algo: str = "sha256") -> str:
    h = hashlib.new(algo)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def source_revision() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True,
            timeout=10, cwd=os.path.dirname(os.path.abspath(__file__)))
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def manifest_path(run_dir) -> str:
    return os.path.join(run_dir, MANIFEST_NAME)


def append_entry(run_dir, kind: str, *, seed: int | None = None,
                 config: dict | None = None, artifacts: dict | None = None,
                 extra: dict | None = None) -> dict:
    """Record one pipeline action.

    artifacts maps role -> file path; each is stored with its digest.
    Returns the entry as written.
    """
    os.makedirs(run_dir, exist_ok=True)
    entry = {
        "time": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "kind": kind,
        "revision": source_revision(),
    }
    if seed is not None:
        entry["seed"] = int(seed)
    if config is not None:
        blob = json.dumps(config, sort_keys=True).encode()
        entry["config"] = config
        entry["config_hash"] = hashlib.sha256(blob).hexdigest()[:16]
    if artifacts:
        entry["artifacts"] = {
            role: {"path": os.path.relpath(p, run_dir),
                   "sha256": file_digest(p)}
            for role, p in artifacts.items()}
    if extra:
        entry.update(extra)
    with open(manifest_path(run_dir), "a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return entry


def read_manifest(run_dir) -> list:
    path = manifest_path(run_dir)
    if not os.path.exists(path):
        return []
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def verify_manifest(run_dir) -> list:
    """Re-hash every artifact the manifest mentions.

    Returns a list of problem strings; empty means every artifact exists
    and matches its recorded digest (later entries supersede earlier ones
    for the same path).
    """
    latest = {}
    for entry in read_manifest(run_dir):
        for role, art in entry.get("artifacts", {}).items():
            latest[art["path"]] = art["sha256"]
    problems = []
    for rel, digest in sorted(latest.items()):
        path = os.path.join(run_dir, rel)
        if not os.path.exists(path):
            problems.append(f"missing artifact: {rel}")
        elif file_digest(path) != digest:
            problems.append(f"digest mismatch: {rel}")
    return problems
