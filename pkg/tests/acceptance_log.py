"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES = []


def record(name: str, ok: bool, detail: str, gating: bool = True) -> str:
    verdict = ("PASS" if ok else "FAIL") if gating else "REPORT"
    line = f"{verdict}  {name}: {detail}"
    LINES.append(line)
    print(line)
    return line
