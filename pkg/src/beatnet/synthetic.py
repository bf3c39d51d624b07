"""Synthetic ECG records with known beat times.

Used by tests and by the ``build-dataset`` CLI command to exercise the
full pipeline without any real recordings: each record is a noisy
baseline plus a stereotyped QRS-like spike at every beat, so windows
whose 0.10-0.15 s sub-window contains a spike are learnably different
from the rest. All randomness flows through one seeded generator
(NumPy PCG64), so a (seed, shape) pair fully determines the output.
"""

from __future__ import annotations

import numpy as np

from .records import EcgRecord

# Spike morphology (seconds, millivolts): an R peak flanked by Q/S dips
# and a shallow T bump. Widths are Gaussian sigmas.
_R_AMP, _R_SIGMA = 1.2, 0.012
_Q_AMP, _Q_OFF, _Q_SIGMA = -0.15, -0.020, 0.010
_S_AMP, _S_OFF, _S_SIGMA = -0.25, 0.025, 0.010
_T_AMP, _T_OFF, _T_SIGMA = 0.15, 0.180, 0.040


def _spike(dt: np.ndarray) -> np.ndarray:
    """QRS-plus-T waveform evaluated at offsets ``dt`` from the beat."""
    return (_R_AMP * np.exp(-((dt / _R_SIGMA) ** 2))
            + _Q_AMP * np.exp(-(((dt - _Q_OFF) / _Q_SIGMA) ** 2))
            + _S_AMP * np.exp(-(((dt - _S_OFF) / _S_SIGMA) ** 2))
            + _T_AMP * np.exp(-(((dt - _T_OFF) / _T_SIGMA) ** 2)))


def synth_record(record_id: str, subject_id: str, dataset_tag: str,
                 duration: float, fs: float,
                 rng: np.random.Generator,
                 noise_mv: float = 0.03) -> EcgRecord:
    """One synthetic record of ``duration`` seconds sampled at ``fs``.

    Beats are spaced 0.55-0.95 s apart (uniform), far enough apart that
    rounded sample indices stay strictly increasing at any fs >= 4 Hz.
    """
    n = int(round(duration * fs))
    t = np.arange(n, dtype=np.float64) / fs

    beat_times = []
    pos = 0.35 + rng.uniform(0.0, 0.3)
    while pos < duration - 0.3:
        beat_times.append(pos)
        pos += rng.uniform(0.55, 0.95)
    beats = np.asarray(beat_times, dtype=np.float64)

    signal = (0.08 * np.sin(2 * np.pi * 0.33 * t + rng.uniform(0, 2 * np.pi))
              + 0.04 * np.sin(2 * np.pi * 0.05 * t + rng.uniform(0, 2 * np.pi)))
    for b in beats:
        lo = max(0, int((b - 0.35) * fs))
        hi = min(n, int((b + 0.45) * fs) + 1)
        signal[lo:hi] += _spike(t[lo:hi] - b)
    signal += rng.normal(0.0, noise_mv, n)

    beat_samples = np.round(beats * fs).astype(np.int64)
    beat_samples = beat_samples[beat_samples < n]
    return EcgRecord(record_id, subject_id, dataset_tag, float(fs),
                     signal.astype(np.float32), beat_samples)


def make_synthetic_records(n_subjects: int = 4, duration: float = 12.5,
                           fs: float = 250.0, seed: int = 0,
                           tags=("NormalSinus", "LongTerm"),
                           ) -> list[EcgRecord]:
    """One record per synthetic subject, cycling through ``tags``.

    The default tags both pool into the NormalSinus+LongTerm subset;
    passing extra tags (e.g. "Arrhythmia") yields target subsets for
    transfer-learning smoke runs. Give each tag's subset at least two
    subjects or the train/test split will reject it.
    """
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_subjects):
        tag = tags[i % len(tags)]
        records.append(synth_record(f"syn{i:02d}", f"subj{i:02d}", tag,
                                    duration, fs, rng))
    return records
