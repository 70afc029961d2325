"""Bundled data, simulators, and sequence file I/O.

The eruption-duration dataset ships with the package so tests and
benchmarks are hermetic.  Simulators draw from numpy's PCG64 generator
(seeded explicitly), which has a stable cross-platform stream, so a fixed
seed reproduces a dataset byte for byte.
"""

from __future__ import annotations

import csv
import importlib.resources
from dataclasses import dataclass

import numpy as np

from .core import ModelSpec, ObsSequence

FAITHFUL_LENGTH = 272


class DataCorrupt(ValueError):
    """A bundled or user-supplied data file failed a sanity check."""


@dataclass
class SimConfig:
    """Settings for a reproducible simulation run."""

    model: str
    theta: np.ndarray
    length: int
    seed: int
    spacing_cm: float = 0.1
    eps: float = 1e-3
    freq_range: tuple = (0.1, 0.9)
    missing_rate: float = 0.0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.length < 1:
            raise ValueError("length must be at least 1")


def load_faithful() -> ObsSequence:
    """The 272 eruption durations (minutes), in observation order."""
    path = importlib.resources.files("hmmopt.datasets") / "faithful.csv"
    with path.open() as fh:
        reader = csv.DictReader(fh)
        durations = [float(row["duration_min"]) for row in reader]
    if len(durations) != FAITHFUL_LENGTH:
        raise DataCorrupt(f"expected {FAITHFUL_LENGTH} durations, found {len(durations)}")
    return ObsSequence(observations=np.asarray(durations, dtype=float))


def dichotomise(seq: ObsSequence, threshold: float = 3.0) -> ObsSequence:
    """Binarize a continuous sequence: below the threshold -> code 0
    ("Dinf3"), at or above -> code 1 ("Dsup3")."""
    x = np.asarray(seq.observations, dtype=float)
    return ObsSequence(observations=(x >= threshold).astype(np.int64),
                       positions=seq.positions)


def simulate_discrete(model: ModelSpec, theta, length: int, seed: int) -> ObsSequence:
    """Draw a sequence exactly from a discrete model's pi, T, and E."""
    rng = np.random.default_rng(seed)
    theta = np.asarray(theta, dtype=float)
    dummy = ObsSequence(observations=np.zeros(length, dtype=np.int64))
    pi = np.asarray(model.initial_distribution(theta), dtype=float)
    T = np.asarray(model.transition_matrices(theta, dummy), dtype=float)
    n_codes = max(code for code in model.alphabet.values()) + 1
    probe = ObsSequence(observations=np.arange(n_codes, dtype=np.int64))
    E = np.asarray(model.emission_weights(theta, probe), dtype=float)  # (code, state)
    if model.missing_code is not None:
        E = np.delete(E, model.missing_code, axis=0)
    codes = np.delete(np.arange(n_codes), model.missing_code) if model.missing_code is not None \
        else np.arange(n_codes)
    states = np.empty(length, dtype=np.int64)
    obs = np.empty(length, dtype=np.int64)
    states[0] = rng.choice(model.n_states, p=pi)
    for i in range(1, length):
        step_T = T if T.ndim == 2 else T[i - 1]
        states[i] = rng.choice(model.n_states, p=step_T[states[i - 1]])
    for i in range(length):
        col = E[:, states[i]]
        obs[i] = codes[rng.choice(col.size, p=col / col.sum())]
    return ObsSequence(observations=obs, hidden_truth=states,
                       missing_code=model.missing_code)


def simulate_hbd(cfg: SimConfig) -> ObsSequence:
    """Simulate genotypes over an HBD/non-HBD hidden chain.

    Positions are evenly spaced at ``cfg.spacing_cm``; per-position
    reference-allele frequencies are drawn uniformly from
    ``cfg.freq_range`` and stored on the sequence, since the emission
    model needs them back at estimation time.  The hidden chain is kept
    as ``hidden_truth``.
    """
    rng = np.random.default_rng(cfg.seed)
    f, a = float(cfg.theta[0]), float(cfg.theta[1])
    L = cfg.length
    positions = cfg.spacing_cm * np.arange(L, dtype=float)
    freq = rng.uniform(cfg.freq_range[0], cfg.freq_range[1], size=L)

    q_stay = np.exp(-a * cfg.spacing_cm)
    states = np.empty(L, dtype=np.int64)
    states[0] = rng.random() < f
    for i in range(1, L):
        if rng.random() < q_stay:
            states[i] = states[i - 1]
        else:
            states[i] = rng.random() < f
    obs = np.empty(L, dtype=np.int64)
    for i in range(L):
        p = freq[i]
        qa = 1.0 - p
        if states[i] == 0:
            probs = (p * p, 2.0 * p * qa, qa * qa)
        else:
            e = cfg.eps
            probs = ((1.0 - e) * p + e * p * p, 2.0 * e * p * qa, (1.0 - e) * qa + e * qa * qa)
        obs[i] = rng.choice(3, p=np.asarray(probs))
    if cfg.missing_rate > 0.0:
        obs[rng.random(L) < cfg.missing_rate] = 3
    return ObsSequence(observations=obs, positions=positions, freq_a=freq,
                       hidden_truth=states, missing_code=3)


# ---------------------------------------------------------------------------
# sequence file I/O


def _invert_alphabet(model: ModelSpec) -> dict:
    return {code: label for label, code in model.alphabet.items()}


def write_sequence(path, seq: ObsSequence, model: ModelSpec | None = None) -> None:
    """Write a sequence as CSV: obs plus any position/frequency/truth columns.

    Discrete observation codes are written through the model's alphabet
    when one is supplied.
    """
    to_label = _invert_alphabet(model) if model is not None and model.alphabet else None
    header = ["obs"]
    if seq.positions is not None:
        header.append("position_cM")
    if seq.freq_a is not None:
        header.append("pA")
    if seq.hidden_truth is not None:
        header.append("hidden_truth")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(seq)):
            x = seq.observations[i]
            row = [to_label[int(x)] if to_label is not None else repr(float(x))]
            if seq.positions is not None:
                row.append(repr(float(seq.positions[i])))
            if seq.freq_a is not None:
                row.append(repr(float(seq.freq_a[i])))
            if seq.hidden_truth is not None:
                row.append(int(seq.hidden_truth[i]))
            writer.writerow(row)


def read_sequence(path, model: ModelSpec | None = None) -> ObsSequence:
    """Read a sequence from CSV or from plain text (one observation per line).

    CSV files must have an ``obs`` column and may carry ``position_cM``,
    ``pA``, and ``hidden_truth`` columns.  Observation labels are decoded
    through the model's alphabet when one is supplied; otherwise
    observations must be numeric.
    """
    with open(path) as fh:
        first = fh.readline()
        fh.seek(0)
        if "," in first or first.strip() == "obs":
            rows = list(csv.DictReader(fh))
            if not rows or "obs" not in rows[0]:
                raise DataCorrupt(f"{path}: expected an 'obs' column")
            raw = [row["obs"] for row in rows]
            positions = [row["position_cM"] for row in rows] if "position_cM" in rows[0] else None
            freq = [row["pA"] for row in rows] if "pA" in rows[0] else None
            truth = [row["hidden_truth"] for row in rows] if "hidden_truth" in rows[0] else None
        else:
            raw = [line.strip() for line in fh if line.strip()]
            positions = freq = truth = None
    obs = _decode_observations(raw, model, path)
    return ObsSequence(
        observations=obs,
        positions=None if positions is None else np.asarray(positions, dtype=float),
        freq_a=None if freq is None else np.asarray(freq, dtype=float),
        hidden_truth=None if truth is None else np.asarray(truth, dtype=np.int64),
        missing_code=model.missing_code if model is not None else None,
    )


def _decode_observations(raw: list, model: ModelSpec | None, path) -> np.ndarray:
    if model is not None and model.alphabet:
        try:
            return np.asarray([model.alphabet[x] for x in raw], dtype=np.int64)
        except KeyError as exc:
            raise DataCorrupt(
                f"{path}: observation {exc.args[0]!r} not in the {model.name} alphabet "
                f"{sorted(model.alphabet)}"
            ) from None
    try:
        return np.asarray([float(x) for x in raw], dtype=float)
    except ValueError as exc:
        raise DataCorrupt(f"{path}: non-numeric observation ({exc})") from None


def default_sequence(model: ModelSpec, sim_seed: int = 1) -> ObsSequence:
    """The dataset a model is benchmarked on when none is supplied.

    Geyser models read the bundled eruption durations; the umbrella and
    HBD models fall back to documented simulations (56 days at
    (a, b) = (0.3, 0.2); 1050 positions at 0.1 cM with
    (f, a) = (0.0625, 0.064)).
    """
    if model.name == "geyser-cont":
        return load_faithful()
    if model.name == "geyser-disc":
        return dichotomise(load_faithful())
    if model.name == "umbrella":
        return simulate_discrete(model, np.array([0.3, 0.2]), 56, seed=sim_seed)
    if model.name == "hbd":
        cfg = SimConfig(model="hbd", theta=np.array([0.0625, 0.064]), length=1050,
                        seed=sim_seed)
        return simulate_hbd(cfg)
    raise KeyError(f"no default dataset for model {model.name!r}")
