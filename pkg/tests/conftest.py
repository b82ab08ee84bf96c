import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root so the flat modules import
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from flows import FlowWindow, PacketRecord  # noqa: E402

ADDRESSES = [f"10.0.0.{k}" for k in range(1, 9)]


def window_of(*rows, index: int = 0, start: float = 0.0, duration: float = 1.0) -> FlowWindow:
    """Build a window from (t, src, dst, port) tuples."""
    packets = tuple(sorted((PacketRecord(*r) for r in rows), key=lambda p: p.t))
    return FlowWindow(index, start, duration, packets)


def random_window(rng: np.random.Generator, max_packets: int = 50, max_addresses: int = 8) -> FlowWindow:
    n_addr = int(rng.integers(2, max_addresses + 1))
    n = int(rng.integers(0, max_packets + 1))
    rows = []
    for _ in range(n):
        src, dst = rng.choice(n_addr, size=2, replace=False)
        rows.append((float(rng.random()), ADDRESSES[src], ADDRESSES[dst], int(rng.choice([22, 53, 80, 443]))))
    return window_of(*rows)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240517))
