#!/usr/bin/env python3
"""Reducer for "Maximum of a Sequence".

Input format: N on the first line, then N integers on one line.
Environment:
  RF_REF_CMD, RF_BUGGY_CMD   shell commands reading the test from stdin
  RF_INPUT, RF_OUTPUT        original failing input / where to write the result
  RF_BUDGET_SECS             total time budget
  RF_RUN_TIMEOUT_SECS        per-execution timeout
"""
import os
import subprocess
import sys
import time

REF_CMD = os.environ["RF_REF_CMD"]
BUGGY_CMD = os.environ["RF_BUGGY_CMD"]
INPUT_PATH = os.environ["RF_INPUT"]
OUTPUT_PATH = os.environ["RF_OUTPUT"]
BUDGET = float(os.environ.get("RF_BUDGET_SECS", "60"))
RUN_TIMEOUT = float(os.environ.get("RF_RUN_TIMEOUT_SECS", "5"))
# leave some slack so the harness never has to kill us
DEADLINE = time.monotonic() + BUDGET * 0.85


def normalize(text):
    lines = [line.rstrip() for line in text.splitlines()]
    while lines and not lines[-1]:
        lines.pop()
    return "\n".join(lines)


def run_program(cmd, data):
    """Run `cmd` with `data` on stdin. Returns (ok, normalized stdout)."""
    try:
        proc = subprocess.run(cmd, shell=True, input=data.encode(),
                              capture_output=True, timeout=RUN_TIMEOUT)
    except subprocess.TimeoutExpired:
        return False, ""
    out = normalize(proc.stdout.decode("utf-8", errors="replace"))
    return proc.returncode == 0, out


def render(values):
    return "%d\n%s\n" % (len(values), " ".join(str(v) for v in values))


def parse(text):
    tokens = text.split()
    n = int(tokens[0])
    values = [int(t) for t in tokens[1:1 + n]]
    if len(values) != n:
        raise ValueError("truncated input")
    return values


def is_interesting(values):
    if not values:
        return False  # N >= 1
    data = render(values)
    ref_ok, ref_out = run_program(REF_CMD, data)
    if not ref_ok:
        return False
    bug_ok, bug_out = run_program(BUGGY_CMD, data)
    return (not bug_ok) or bug_out != ref_out


def checkpoint(values):
    tmp = OUTPUT_PATH + ".tmp"
    with open(tmp, "w") as f:
        f.write(render(values))
    os.replace(tmp, OUTPUT_PATH)


def out_of_time():
    return time.monotonic() >= DEADLINE


def ddmin(values):
    n = 2
    while len(values) >= 2 and not out_of_time():
        size = -(-len(values) // n)
        chunks = [values[i:i + size] for i in range(0, len(values), size)]
        reduced = None
        for chunk in chunks:
            if is_interesting(chunk):
                reduced, n = chunk, 2
                break
            if out_of_time():
                return values
        if reduced is None and len(chunks) > 2:
            for i in range(len(chunks)):
                rest = [v for j, c in enumerate(chunks) if j != i for v in c]
                if is_interesting(rest):
                    reduced, n = rest, max(n - 1, 2)
                    break
                if out_of_time():
                    return values
        if reduced is not None:
            values = reduced
            checkpoint(values)
            continue
        if n >= len(values):
            break
        n = min(2 * n, len(values))
    return values


def simplify_values(values):
    """Try to replace each value with a smaller one; roll back on failure."""
    for i in range(len(values)):
        if out_of_time():
            break
        for candidate in (0, 1, -1):
            if values[i] == candidate:
                break
            trial = values[:i] + [candidate] + values[i + 1:]
            if is_interesting(trial):
                values = trial
                checkpoint(values)
                break
    return values


def main():
    with open(INPUT_PATH) as f:
        original = f.read()
    try:
        values = parse(original)
    except (ValueError, IndexError):
        values = None
    if values is None or not is_interesting(values):
        # nothing we can do; hand back the original unchanged
        with open(OUTPUT_PATH, "w") as f:
            f.write(original)
        return 0
    checkpoint(values)
    values = ddmin(values)
    values = simplify_values(values)
    checkpoint(values)
    return 0


if __name__ == "__main__":
    sys.exit(main())
