"""Training and evaluation pipelines for the three user scenarios.

A *slot* carries one symbol per user through a freshly drawn channel.
After combining, every slot reduces to one complex observation

    y = sum_l c_l * x_l + n

where ``c_l`` is the real post-combining gain that couples user ``l``'s
symbol into the observation.  With resource allocation (and for a single
user) only the served user couples; under multiuser interference every
user does and user 0 is the target.

Detectors
---------
qam_ml_perfect
    QAM transmitter, ML decision with the true target gain.
qam_ml_blind
    QAM transmitter, ML decision with a second-moment gain estimate taken
    over blocks of consecutive received slots (no channel knowledge).
qam_dnn
    QAM transmitter, receiver network fed ``(Re y, Im y)``.
end_to_end_dnn
    Transmitter network (one-hot to point) and receiver network trained
    jointly through the channel.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from fsomimo import link as lk
from fsomimo import neuralnet as nn
from fsomimo.link import Combiner, LinkConfig
from fsomimo.modem import Constellation, normalize_constellation, qam_constellation
from fsomimo.streams import derive_rng
from fsomimo.turbulence import STRONG, TurbulenceRegime, draw_channel

__all__ = [
    "UserMode",
    "Detector",
    "ScenarioSpec",
    "TrainConfig",
    "LossReport",
    "SlotBatch",
    "SerPoint",
    "SerCurve",
    "TrainedModels",
    "TrainingDivergedError",
    "ModelMismatchError",
    "simulate_slots",
    "simulate_slot",
    "learned_constellation",
    "train_receiver_dnn",
    "train_end_to_end",
    "end_to_end_loss",
    "evaluate_ser",
    "wilson_interval",
    "CHUNK_SIZE",
]

# Trials per independent random sub-stream during evaluation.  Part of the
# reproducibility contract: changing it changes every SER estimate.
CHUNK_SIZE = 4096


class UserMode(str, enum.Enum):
    SINGLE_USER = "single_user"
    MULTIUSER_ALLOCATION = "multiuser_allocation"
    MULTIUSER_INTERFERENCE = "multiuser_interference"


class Detector(str, enum.Enum):
    QAM_ML_PERFECT = "qam_ml_perfect"
    QAM_ML_BLIND = "qam_ml_blind"
    QAM_DNN = "qam_dnn"
    END_TO_END_DNN = "end_to_end_dnn"


class TrainingDivergedError(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"training loss became non-finite at iteration {iteration}")
        self.iteration = iteration


class ModelMismatchError(ValueError):
    """Detector and supplied models do not fit together."""


@dataclass(frozen=True)
class ScenarioSpec:
    """One link scenario.

    ``regime=None`` disables turbulence (every intensity equals 1).
    """

    user_mode: UserMode = UserMode.SINGLE_USER
    n_users: int = 1
    combiner: Combiner = Combiner.EGC
    n_tx: int = 1
    n_rx: int = 1
    regime: TurbulenceRegime | None = STRONG
    modulation_order: int = 16
    detector: Detector = Detector.QAM_ML_PERFECT
    conversion_gain: float = 1.0
    blind_block: int = 1000

    def __post_init__(self) -> None:
        object.__setattr__(self, "user_mode", UserMode(self.user_mode))
        object.__setattr__(self, "combiner", Combiner(self.combiner))
        object.__setattr__(self, "detector", Detector(self.detector))
        if self.user_mode is UserMode.SINGLE_USER and self.n_users != 1:
            raise ValueError("single_user mode requires n_users = 1")
        if self.user_mode is not UserMode.SINGLE_USER and self.n_users < 2:
            raise ValueError(f"{self.user_mode.value} requires n_users >= 2")
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("n_tx and n_rx must be >= 1")
        if self.blind_block < 2:
            raise ValueError("blind_block must be >= 2")
        qam_constellation(self.modulation_order)  # validates the order

    def link_config(self, es_n0_db: float) -> LinkConfig:
        return LinkConfig(
            conversion_gain=self.conversion_gain,
            n_tx=self.n_tx,
            n_rx=self.n_rx,
            n_users=self.n_users,
            noise_variance=lk.noise_variance_from_es_n0(es_n0_db),
        )


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and data budget for training.

    Each iteration draws ``samples_per_batch_ratio * batch_size`` fresh
    slots and takes one Adam step per ``batch_size`` slice.
    """

    batch_size: int = 64
    samples_per_batch_ratio: int = 4
    iterations: int = 1000
    learning_rate: float = 0.005
    train_es_n0_db: float = 15.0
    seed: int = 0
    hidden_layers: int = 4
    hidden_width: int = 40

    def __post_init__(self) -> None:
        for name in ("batch_size", "samples_per_batch_ratio", "iterations", "hidden_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.hidden_layers < 0:
            raise ValueError("hidden_layers must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def hidden(self) -> list[int]:
        return [self.hidden_width] * self.hidden_layers


@dataclass
class LossReport:
    losses: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def final(self) -> float:
        return float(self.losses[-1])


@dataclass
class SlotBatch:
    """Result of simulating ``n`` slots.

    Attributes
    ----------
    observation : complex ndarray, shape (n,)
        Combined sample entering the detector.
    target : int ndarray, shape (n,)
        User whose symbol is to be detected.
    gain : ndarray, shape (n,)
        Post-combining gain of the target user.
    coupling : ndarray, shape (n, n_users)
        Post-combining gain of every user's symbol in ``observation``
        (zero for users that do not reach it).
    noise_variance : float
        Variance of the combined noise.
    """

    observation: np.ndarray
    target: np.ndarray
    gain: np.ndarray
    coupling: np.ndarray
    noise_variance: float

    def features(self) -> np.ndarray:
        return np.stack([self.observation.real, self.observation.imag], axis=-1)


@dataclass
class TrainedModels:
    rx: nn.MlpParams
    tx: nn.MlpParams | None = None


@dataclass(frozen=True)
class SerPoint:
    es_n0_db: float
    trials: int
    errors: int
    ser: float
    ci_low: float
    ci_high: float


@dataclass
class SerCurve:
    points: list[SerPoint]
    label: str = ""

    @property
    def es_n0_db(self) -> np.ndarray:
        return np.array([p.es_n0_db for p in self.points])

    @property
    def ser(self) -> np.ndarray:
        return np.array([p.ser for p in self.points])

    @property
    def ci_low(self) -> np.ndarray:
        return np.array([p.ci_low for p in self.points])

    @property
    def ci_high(self) -> np.ndarray:
        return np.array([p.ci_high for p in self.points])


def wilson_interval(errors: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(errors), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def simulate_slots(
    spec: ScenarioSpec, tx_points, cfg: LinkConfig, rng: np.random.Generator
) -> SlotBatch:
    """Push one symbol per user through ``n`` independent slots.

    Parameters
    ----------
    tx_points : complex array_like, shape (n, n_users)
        Transmitted constellation point of every user in every slot.
    cfg : LinkConfig
        Noise variance and gain constants for this run.

    Notes
    -----
    Random draws happen in a fixed order (channel, then noise) regardless
    of the user mode, so scenarios evaluated with the same stream see the
    same channel and noise realizations.
    """
    x = np.asarray(tx_points, dtype=complex)
    n, n_users = x.shape
    if n_users != spec.n_users:
        raise ValueError(f"expected symbols for {spec.n_users} users, got {n_users}")
    gains = draw_channel(n_users, spec.n_rx, spec.n_tx, spec.regime, rng, n_slots=n).gains
    rows = np.arange(n)
    if spec.user_mode is UserMode.MULTIUSER_ALLOCATION:
        target = lk.allocate_best_user(gains, spec.combiner, cfg)
    else:
        target = np.zeros(n, dtype=int)
    target_gains = gains[rows, target]

    if spec.user_mode is UserMode.MULTIUSER_INTERFERENCE:
        y = lk.superpose_interference(lk.faded_signal(x, gains, cfg), cfg, rng)
    else:
        y = lk.transmit(x[rows, target], target_gains, cfg, rng)

    if spec.combiner is Combiner.EGC:
        obs = lk.egc_combine(y)
        per_user = lk.effective_gain(gains, Combiner.EGC, cfg)
    else:
        p, obs = lk.sc_select(y, target_gains)
        per_user = (cfg.conversion_gain / spec.n_tx) * gains[rows, :, p, :].sum(axis=-1)

    if spec.user_mode is UserMode.MULTIUSER_INTERFERENCE:
        coupling = per_user
    else:
        coupling = np.zeros_like(per_user)
        coupling[rows, target] = per_user[rows, target]
    return SlotBatch(
        observation=np.asarray(obs).reshape(n),
        target=target,
        gain=per_user[rows, target],
        coupling=coupling,
        noise_variance=lk.combined_noise_variance(cfg, spec.combiner),
    )


def simulate_slot(
    spec: ScenarioSpec,
    symbol_indices,
    rng: np.random.Generator,
    es_n0_db: float,
    constellation: Constellation | None = None,
) -> tuple[complex, int, float]:
    """Single-slot convenience wrapper around :func:`simulate_slots`.

    Returns the combined observation, the target user and its gain.
    """
    c = constellation or qam_constellation(spec.modulation_order)
    idx = np.asarray(symbol_indices).reshape(1, spec.n_users)
    b = simulate_slots(spec, c.points[idx], spec.link_config(es_n0_db), rng)
    return complex(b.observation[0]), int(b.target[0]), float(b.gain[0])


def _network_dims(n_in: int, n_out: int, cfg: TrainConfig) -> list[int]:
    return [n_in, *cfg.hidden(), n_out]


def _check_finite(loss: float, iteration: int) -> None:
    if not math.isfinite(loss):
        raise TrainingDivergedError(iteration)


def train_receiver_dnn(spec: ScenarioSpec, cfg: TrainConfig) -> tuple[nn.MlpParams, LossReport]:
    """Train a blind detector on QAM symbols.

    The network only ever sees the combined observation as two reals; the
    channel gains are never an input.
    """
    if spec.detector is not Detector.QAM_DNN:
        raise ValueError("train_receiver_dnn requires detector = qam_dnn")
    m = spec.modulation_order
    points = qam_constellation(m).points
    params = nn.init_params(_network_dims(2, m, cfg), derive_rng(cfg.seed, 0))
    state = nn.init_adam(params)
    data_rng = derive_rng(cfg.seed, 1)
    link = spec.link_config(cfg.train_es_n0_db)
    k = cfg.batch_size
    losses = np.empty(cfg.iterations)
    for it in range(cfg.iterations):
        n = k * cfg.samples_per_batch_ratio
        symbols = data_rng.integers(0, m, size=(n, spec.n_users))
        batch = simulate_slots(spec, points[symbols], link, data_rng)
        labels = symbols[np.arange(n), batch.target]
        feats = batch.features()
        total = 0.0
        for b in range(cfg.samples_per_batch_ratio):
            sl = slice(b * k, (b + 1) * k)
            logits, cache = nn.forward(params, feats[sl])
            loss, g = nn.softmax_cross_entropy(logits, labels[sl])
            _check_finite(loss, it)
            grads, _ = nn.backward(params, cache, g)
            params, state = nn.adam_step(params, grads, state, cfg.learning_rate)
            total += loss
        losses[it] = total / cfg.samples_per_batch_ratio
    return params, LossReport(losses)


def learned_constellation(tx: nn.MlpParams) -> Constellation:
    """Unit-energy constellation produced by a transmitter network."""
    m = tx.layer_dims[0]
    raw, _ = nn.forward(tx, np.eye(m))
    return normalize_constellation(raw[:, 0] + 1j * raw[:, 1])


def end_to_end_loss(
    tx: nn.MlpParams,
    rx: nn.MlpParams,
    symbols: np.ndarray,
    target: np.ndarray,
    coupling: np.ndarray,
    noise: np.ndarray,
) -> tuple[float, nn.MlpParams, nn.MlpParams]:
    """Loss and gradients of the transmitter/receiver chain for fixed channel and noise.

    The observation is ``y = sum_l coupling[:, l] * x[symbols[:, l]] + noise``
    with ``x`` the normalized transmitter output.  Because every coupling
    is real, ``dL/dx_l = coupling_l * dL/dy`` on the (Re, Im) pair.

    Returns
    -------
    loss, tx_grads, rx_grads
    """
    m = tx.layer_dims[0]
    n = symbols.shape[0]
    raw, tx_cache = nn.forward(tx, np.eye(m))
    pts = raw[:, 0] + 1j * raw[:, 1]
    scale = np.sqrt(np.mean(np.abs(pts) ** 2))
    pn = pts / scale
    x = pn[symbols]
    y = (coupling * x).sum(axis=1) + noise
    logits, rx_cache = nn.forward(rx, np.stack([y.real, y.imag], axis=-1))
    labels = symbols[np.arange(n), target]
    loss, g = nn.softmax_cross_entropy(logits, labels)
    rx_grads, g_in = nn.backward(rx, rx_cache, g)
    gy = g_in[:, 0] + 1j * g_in[:, 1]
    gx = coupling * gy[:, None]
    g_pn = np.zeros(m, dtype=complex)
    np.add.at(g_pn, symbols.reshape(-1), gx.reshape(-1))
    # back through p -> p / sqrt(mean |p|^2)
    dot = np.sum(g_pn.real * pn.real + g_pn.imag * pn.imag)
    g_pts = (g_pn - dot * pn / m) / scale
    tx_grads, _ = nn.backward(tx, tx_cache, np.stack([g_pts.real, g_pts.imag], axis=-1))
    return loss, tx_grads, rx_grads


def train_end_to_end(
    spec: ScenarioSpec, cfg: TrainConfig
) -> tuple[nn.MlpParams, nn.MlpParams, LossReport, Constellation]:
    """Jointly train a constellation-shaping transmitter and a blind receiver.

    All users share the transmitter.  Per Adam step the ``M`` candidate
    points are renormalized to unit average energy, a fresh channel and
    noise are drawn per example, and gradients flow from the receiver loss
    through the real channel gain into the transmitter.
    """
    if spec.detector is not Detector.END_TO_END_DNN:
        raise ValueError("train_end_to_end requires detector = end_to_end_dnn")
    m = spec.modulation_order
    init_rng = derive_rng(cfg.seed, 0)
    tx = nn.init_params(_network_dims(m, 2, cfg), init_rng)
    rx = nn.init_params(_network_dims(2, m, cfg), init_rng)
    tx_state, rx_state = nn.init_adam(tx), nn.init_adam(rx)
    data_rng = derive_rng(cfg.seed, 1)
    link = spec.link_config(cfg.train_es_n0_db)
    k = cfg.batch_size
    losses = np.empty(cfg.iterations)
    for it in range(cfg.iterations):
        symbols = data_rng.integers(0, m, size=(k * cfg.samples_per_batch_ratio, spec.n_users))
        total = 0.0
        for b in range(cfg.samples_per_batch_ratio):
            sym = symbols[b * k : (b + 1) * k]
            pts = learned_constellation(tx).points
            batch = simulate_slots(spec, pts[sym], link, data_rng)
            noise = batch.observation - (batch.coupling * pts[sym]).sum(axis=1)
            loss, tx_g, rx_g = end_to_end_loss(tx, rx, sym, batch.target, batch.coupling, noise)
            _check_finite(loss, it)
            tx, tx_state = nn.adam_step(tx, tx_g, tx_state, cfg.learning_rate)
            rx, rx_state = nn.adam_step(rx, rx_g, rx_state, cfg.learning_rate)
            total += loss
        losses[it] = total / cfg.samples_per_batch_ratio
    return tx, rx, LossReport(losses), learned_constellation(tx)


def _blind_gains(observation: np.ndarray, noise_variance: float, block: int) -> np.ndarray:
    # Consecutive slots are grouped into blocks of ``block`` samples (the
    # last one may be shorter); every slot in a block gets the block's
    # second-moment estimate.  Under per-slot fading the block spans many
    # channel realizations, so the estimate tracks the RMS gain rather
    # than the instantaneous one.
    n = observation.size
    out = np.empty(n)
    for start in range(0, n, block):
        sl = slice(start, min(start + block, n))
        if sl.stop - sl.start < 2:
            sl = slice(max(sl.stop - 2, 0), sl.stop)
        out[start : start + block] = lk.blind_gain_estimate(observation[sl], noise_variance)
    return out


def _check_models(spec: ScenarioSpec, models: TrainedModels | None) -> None:
    m = spec.modulation_order
    if spec.detector in (Detector.QAM_ML_PERFECT, Detector.QAM_ML_BLIND):
        if models is not None:
            raise ModelMismatchError(f"{spec.detector.value} takes no trained models")
        return
    if models is None or models.rx is None:
        raise ModelMismatchError(f"{spec.detector.value} requires a trained receiver")
    if models.rx.layer_dims[:1] != [2] or models.rx.layer_dims[-1] != m:
        raise ModelMismatchError(f"receiver dims {models.rx.layer_dims} do not fit 2 -> {m}")
    if spec.detector is Detector.END_TO_END_DNN:
        if models.tx is None:
            raise ModelMismatchError("end_to_end_dnn requires a trained transmitter")
        if models.tx.layer_dims[0] != m or models.tx.layer_dims[-1] != 2:
            raise ModelMismatchError(f"transmitter dims {models.tx.layer_dims} do not fit {m} -> 2")


def _chunk_errors(
    spec: ScenarioSpec,
    models: TrainedModels | None,
    points: np.ndarray,
    es_n0_db: float,
    n: int,
    rng: np.random.Generator,
) -> int:
    cfg = spec.link_config(es_n0_db)
    symbols = rng.integers(0, points.size, size=(n, spec.n_users))
    batch = simulate_slots(spec, points[symbols], cfg, rng)
    truth = symbols[np.arange(n), batch.target]
    if spec.detector is Detector.QAM_ML_PERFECT:
        decided = lk.ml_detect(batch.observation, batch.gain, Constellation(points))
    elif spec.detector is Detector.QAM_ML_BLIND:
        g_hat = _blind_gains(batch.observation, batch.noise_variance, spec.blind_block)
        decided = lk.ml_detect(batch.observation, g_hat, Constellation(points))
    else:
        decided = nn.predict(models.rx, batch.features())
    return int(np.count_nonzero(decided != truth))


def evaluate_ser(
    spec: ScenarioSpec,
    models: TrainedModels | None,
    es_n0_grid,
    trials: int,
    seed: int,
    workers: int = 1,
) -> SerCurve:
    """Monte Carlo symbol error rate of the target user over an Es/N0 grid.

    Trials are split into chunks of :data:`CHUNK_SIZE`; chunk ``c`` at grid
    index ``k`` uses sub-stream ``(seed, k, c)``.  Error counts are summed
    as integers, so the result does not depend on ``workers``.

    Raises
    ------
    ModelMismatchError
        If the detector and ``models`` do not pair up.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    _check_models(spec, models)
    if spec.detector is Detector.END_TO_END_DNN:
        points = learned_constellation(models.tx).points
    else:
        points = qam_constellation(spec.modulation_order).points
    grid = [float(v) for v in es_n0_grid]
    tasks = []
    for k, db in enumerate(grid):
        for c, start in enumerate(range(0, trials, CHUNK_SIZE)):
            tasks.append((k, c, db, min(CHUNK_SIZE, trials - start)))

    def run(task):
        k, c, db, n = task
        return _chunk_errors(spec, models, points, db, n, derive_rng(seed, k, c))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(run, tasks))
    else:
        counts = [run(t) for t in tasks]

    errors = [0] * len(grid)
    for (k, _, _, _), e in zip(tasks, counts):
        errors[k] += e
    out = []
    for db, e in zip(grid, errors):
        lo, hi = wilson_interval(e, trials)
        out.append(SerPoint(db, trials, e, e / trials, lo, hi))
    return SerCurve(out, label=spec.detector.value)
