"""Compile-and-run harness for emitted C programs."""

from __future__ import annotations

import os
import shutil
import subprocess

from .intrinsics import runtime_header_path

CFLAGS = ["-std=c99", "-O3", "-ffp-contract=off", "-Wall", "-Wextra"]


class CompileError(RuntimeError):
    pass


def find_cc():
    for name in ("cc", "gcc", "clang"):
        path = shutil.which(name)
        if path:
            return path
    raise CompileError("no C compiler found on PATH")


def write_sources(c_text, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    src = os.path.join(out_dir, "query.c")
    with open(src, "w") as fh:
        fh.write(c_text)
    hdr = os.path.join(out_dir, "runtime.h")
    with open(hdr, "w") as fh:
        fh.write(runtime_header_path().read_text())
    return src


def compile_c(src, out_bin=None, extra_flags=(), werror=False):
    """Compile one emitted translation unit; returns (binary path, warnings)."""
    out_bin = out_bin or os.path.splitext(src)[0]
    cmd = [find_cc(), *CFLAGS, *extra_flags]
    if werror:
        cmd.append("-Werror")
    cmd += [src, "-o", out_bin]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise CompileError(f"cc failed:\n{proc.stderr}")
    return out_bin, proc.stderr


def run_binary(binary, data_dir, timeout=300):
    proc = subprocess.run([binary, data_dir], capture_output=True, text=True,
                          timeout=timeout)
    if proc.returncode != 0:
        raise CompileError(
            f"query binary failed ({proc.returncode}):\n{proc.stderr}")
    timings = {}
    for line in proc.stderr.splitlines():
        parts = line.strip().split(",")
        if len(parts) == 3:
            timings[parts[1]] = float(parts[2])
    rows = proc.stdout.splitlines()
    return rows, timings


def compile_and_run(c_text, work_dir, data_dir, werror=False):
    src = write_sources(c_text, work_dir)
    binary, warnings = compile_c(src, werror=werror)
    rows, timings = run_binary(binary, data_dir)
    return rows, timings, warnings
