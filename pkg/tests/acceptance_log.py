"""Collects one PASS/FAIL line per acceptance sub-check."""
LINES = []


def record(tag, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {tag}: {detail}"
    LINES.append(line)
    print(line)
    return ok


def info(tag, detail):
    line = f"INFO  {tag}: {detail}"
    LINES.append(line)
    print(line)
