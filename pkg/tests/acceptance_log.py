"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    LINES.append(line)
    print(line, flush=True)
    return ok
