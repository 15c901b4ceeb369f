"""Shared verdict collector for the acceptance suite's summary lines."""

ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str = "") -> bool:
    """Log one acceptance-criterion verdict for the terminal summary."""
    status = "PASS" if ok else "FAIL"
    suffix = f" -- {detail}" if detail else ""
    ACCEPTANCE_LINES.append(f"[{status}] {name}{suffix}")
    return ok
