# Cross-check of the STOI oracle against the pystoi reference implementation.
# The two differ only in the 16 -> 10 kHz resampling filter (about 1e-5).

import numpy as np
import pytest

import mtq

pystoi = pytest.importorskip("pystoi")


CASES = [
    ("white", -5.0, "none"),
    ("white", 5.0, "none"),
    ("pink", 0.0, "none"),
    ("pink", 10.0, "wiener-gain"),
    ("modulated-tonal", 5.0, "spectral-subtraction"),
    ("white", 15.0, "lowpass"),
    ("white", 0.0, "hard-clip"),
]


@pytest.mark.parametrize("noise,snr,enhancer", CASES)
def test_stoi_matches_pystoi(noise, snr, enhancer):
    clean = mtq.synth_clean(3.0, 11)
    degraded = mtq.degrade(clean, noise, snr, enhancer, seed=4)
    ours = mtq.stoi(clean, degraded)
    ref = pystoi.stoi(clean, degraded, mtq.SAMPLE_RATE, extended=False)
    assert ours == pytest.approx(ref, abs=1e-4)


def test_ranking_agrees_with_pystoi():
    clean = mtq.synth_clean(3.0, 12)
    ours, ref = [], []
    for snr in (-10.0, -5.0, 0.0, 5.0, 10.0, 20.0):
        y = mtq.degrade(clean, "white", snr, seed=1)
        ours.append(mtq.stoi(clean, y))
        ref.append(pystoi.stoi(clean, y, mtq.SAMPLE_RATE))
    assert mtq.srcc(ours, ref) == 1.0
