"""Shared state between the test modules and the terminal summary."""

RESULTS: dict[int, tuple[bool, str]] = {}
LEMMA1 = {"runs": 0, "steps": 0, "violations": []}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (ok, detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
