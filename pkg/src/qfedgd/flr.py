"""Federated linear regression: local gradients, secure aggregation, update, stop test."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import qgd, qsmc

GRADIENT_BACKENDS = ("classical", "quantum_shortcut", "quantum_full")
AGGREGATIONS = ("qsmc", "plain_sum")


@dataclass
class ClientDataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if self.X.shape[0] < 1:
            raise ValueError("a client needs at least one sample")
        if self.y.shape[0] != self.X.shape[0]:
            raise ValueError(f"{self.X.shape[0]} samples but {self.y.shape[0]} labels")

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def D(self) -> int:
        return self.X.shape[1]


@dataclass
class TrainConfig:
    alpha: float = 0.01
    epsilon: float = 1e-6
    max_epochs: int = 100
    b: float = 0.0
    gradient_backend: str = "classical"
    aggregation: str = "qsmc"
    seed: int = 0
    gamma: float = 1e6
    moduli: tuple | None = None
    # unsigned CRT window [0, S) is only safe for nonnegative gradients
    signed: bool = True
    delta: int = 0
    threshold: float = 0.0
    attacker: str | None = None
    attack_targets: tuple = (1,)
    ghz_backend: str = "sampler"
    theta_mode: str = "exact"
    l: int = 8
    approx: bool = False
    shots: int | None = None
    method: str = "angle_tree"
    c1: float | None = None
    c2: float | None = None
    verbose: bool = False
    max_gamma_halvings: int = 40

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.gradient_backend not in GRADIENT_BACKENDS:
            raise ValueError(f"gradient_backend must be one of {GRADIENT_BACKENDS}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.moduli is not None:
            self.moduli = tuple(int(d) for d in self.moduli)
        self.attack_targets = tuple(int(k) for k in self.attack_targets)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["moduli"] = None if self.moduli is None else list(self.moduli)
        d["attack_targets"] = list(self.attack_targets)
        return d


def residuals(X, y, w, b: float = 0.0) -> np.ndarray:
    return np.asarray(X, dtype=float) @ np.asarray(w, dtype=float) + b - np.asarray(y, dtype=float)


def mse_loss(X, y, w, b: float = 0.0) -> float:
    """E = 1/(2M) sum_i (x_i.w + b - y_i)^2."""
    r = residuals(np.atleast_2d(X), y, w, b)
    return float(r @ r / (2 * r.shape[0]))


def classical_gradient(data: ClientDataset, w, b: float = 0.0) -> np.ndarray:
    """g^j = (1/M) sum_i (x_i.w + b - y_i) x_i^j."""
    w = np.asarray(w, dtype=float)
    if w.shape[0] != data.D:
        raise ValueError(f"parameter length {w.shape[0]} does not match data dimension {data.D}")
    return data.X.T @ residuals(data.X, data.y, w, b) / data.M


def update_parameters(w, G, alpha: float) -> np.ndarray:
    return np.asarray(w, dtype=float) - alpha * np.asarray(G, dtype=float)


def converged(G, epsilon: float) -> bool:
    G = np.asarray(G, dtype=float)
    return bool(G @ G <= epsilon)


def local_gradient(data: ClientDataset, w, config: TrainConfig, client: int, epoch: int):
    """Client gradient and, for the quantum backends, its diagnostics dict."""
    if config.gradient_backend == "classical":
        return classical_gradient(data, w, config.b), None
    est = qgd.local_gradient(
        data.X,
        data.y,
        w,
        config.b,
        backend="full" if config.gradient_backend == "quantum_full" else "shortcut",
        theta_mode=config.theta_mode,
        l=config.l,
        approx=config.approx,
        shots=config.shots,
        seed=(config.seed, client, epoch),
        method=config.method,
        c1=config.c1,
        c2=config.c2,
    )
    return est.g, est.to_dict()


@dataclass
class EpochRecord:
    epoch: int
    w: list
    G: list
    loss: float
    grad_norm2: float
    gamma: float | None = None
    moduli: list | None = None
    transcript: dict | None = None
    diagnostics: list | None = None


@dataclass
class TrainingHistory:
    records: list = field(default_factory=list)
    status: str = "max_epochs"
    w_final: list | None = None
    abort_reason: str | None = None

    def to_csv(self) -> str:
        D = len(self.records[0].w) if self.records else 0
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["epoch", "loss", "grad_norm2", *[f"w{j}" for j in range(D)]])
        for r in self.records:
            wr.writerow([r.epoch, repr(r.loss), repr(r.grad_norm2), *[repr(v) for v in r.w]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "abort_reason": self.abort_reason,
            "w_final": self.w_final,
            "epochs": [asdict(r) for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check_clients(clients):
    if not clients:
        raise ValueError("at least one client is required")
    D = clients[0].D
    if any(c.D != D for c in clients):
        raise ValueError("clients disagree on the feature count")
    return D


def _auto_moduli(grads, beta, gamma, signed=True):
    bound = sum(b * float(np.abs(g).max()) for g, b in zip(grads, beta))
    # headroom so the moduli set survives later epochs without re-announcing
    return qsmc.CrtConfig.for_bound(8 * bound + 1, gamma, beta, signed).moduli


def train(clients, config: TrainConfig, w0=None) -> tuple[np.ndarray, TrainingHistory]:
    """Run epochs of local gradients, aggregation, update and the convergence test.

    The loss recorded for epoch n is the pooled MSE at w(n), before the update.
    """
    D = _check_clients(clients)
    w = np.zeros(D) if w0 is None else np.asarray(w0, dtype=float).copy()
    beta = qsmc.CrtConfig.weights([c.M for c in clients])
    X_all = np.vstack([c.X for c in clients])
    y_all = np.concatenate([c.y for c in clients])
    hist = TrainingHistory()
    gamma, moduli = config.gamma, config.moduli
    attacker = None
    if config.attacker and config.attacker != "none":
        attacker = qsmc.Attacker(config.attacker, config.attack_targets)

    for epoch in range(config.max_epochs):
        results = [local_gradient(c, w, config, k, epoch) for k, c in enumerate(clients, start=1)]
        grads = [g for g, _ in results]
        diagnostics = [d for _, d in results] if config.verbose and results[0][1] is not None else None
        transcript = None
        if config.aggregation == "plain_sum":
            G = qsmc.plain_sum(grads, beta)
        else:
            if moduli is None:
                moduli = _auto_moduli(grads, beta, gamma, config.signed)
            for _ in range(config.max_gamma_halvings + 1):
                cfg = qsmc.CrtConfig(moduli, gamma, beta, signed=config.signed)
                try:
                    res = qsmc.run_protocol(
                        grads, cfg, attacker, seed=[config.seed, 1 << 20, epoch],
                        delta=config.delta, threshold=config.threshold, ghz_backend=config.ghz_backend,
                    )
                    break
                except qsmc.OverflowAbort:
                    gamma /= 2
            else:
                raise qsmc.OverflowAbort(f"epoch {epoch}: totals do not fit after {config.max_gamma_halvings} halvings")
            transcript = res.transcript
            if res.aborted:
                hist.status = "aborted"
                hist.abort_reason = transcript.abort_reason
                hist.records.append(
                    EpochRecord(epoch, [float(v) for v in w], [], mse_loss(X_all, y_all, w, config.b), float("nan"),
                                gamma, list(moduli), transcript.to_dict())
                )
                break
            G = res.G
        rec = EpochRecord(
            epoch,
            [float(v) for v in w],
            [float(v) for v in G],
            mse_loss(X_all, y_all, w, config.b),
            float(np.dot(G, G)),
            gamma if config.aggregation == "qsmc" else None,
            list(moduli) if config.aggregation == "qsmc" else None,
            transcript.to_dict() if transcript is not None and config.verbose else None,
            diagnostics,
        )
        hist.records.append(rec)
        if converged(G, config.epsilon):
            hist.status = "converged"
            break
        w = update_parameters(w, G, config.alpha)
    hist.w_final = [float(v) for v in w]
    return w, hist


def centralized_gd(X, y, alpha: float, epochs: int, b: float = 0.0, w0=None) -> np.ndarray:
    """Batch gradient descent on pooled data, the reference for federated runs."""
    data = ClientDataset(X, y)
    w = np.zeros(data.D) if w0 is None else np.asarray(w0, dtype=float).copy()
    for _ in range(epochs):
        w = update_parameters(w, classical_gradient(data, w, b), alpha)
    return w


def make_synthetic(sizes, D: int, w_star=None, b: float = 0.0, noise: float = 0.0, seed: int = 0):
    """Split y = X w* + b (+ noise) over clients of the given sizes."""
    rng = np.random.default_rng(seed)
    w_star = rng.uniform(-1, 1, D) if w_star is None else np.asarray(w_star, dtype=float)
    out = []
    for m in sizes:
        X = rng.uniform(-1, 1, (m, D))
        y = X @ w_star + b + noise * rng.standard_normal(m)
        out.append(ClientDataset(X, y))
    return out, w_star
