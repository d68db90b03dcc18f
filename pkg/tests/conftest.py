import os
import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """The 12-track synthetic corpus (WAV + MIDI + manifest with sessions)."""
    from ocmusic.synth import write_fixture_corpus

    return write_fixture_corpus(tmp_path_factory.mktemp("corpus"), n_per_class=4, seed=0)


# -- tiny independent SMF writer used as an oracle ---------------------------


def vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def smf(events, ppq=480, fmt=0):
    """Build a one-track SMF from ``[(delta_ticks, raw_event_bytes), ...]``."""
    body = b"".join(vlq(d) + e for d, e in events) + b"\x00\xff\x2f\x00"
    return b"MThd" + struct.pack(">IHHH", 6, fmt, 1, ppq) + b"MTrk" + struct.pack(">I", len(body)) + body


def tempo_event(bpm):
    return b"\xff\x51\x03" + int(round(60e6 / bpm)).to_bytes(3, "big")


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE: list = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per criterion; printed at the end of the run."""

    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}" + (f"  [{detail}]" if detail else "")
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
