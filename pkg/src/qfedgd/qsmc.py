"""Secure aggregation of scaled gradients with GHZ masks, decoy checks and CRT.

Each client k scales its gradient to integers mu_k = round(gamma beta_k g_k),
splits every component into residues modulo pairwise-coprime d_i, and adds a
mask o_k drawn from a d_i-level GHZ round. The server adds its own mask o_s;
masks cancel because the round outcomes sum to 0 mod d_i. The Chinese
remainder theorem then recovers sum_k mu_k.

Message format in a transcript (stable for replay)::

    {"sender": str, "receiver": str, "kind": str, "component": int,
     "modulus": int, "round": int, "payload": int | list | dict}
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .fixedpoint import round_half_away

STATEVECTOR_CAP = 1 << 22
SERVER = "server"


class OverflowAbort(ArithmeticError):
    """The summed scaled gradients do not fit the CRT window."""


def _client(k: int) -> str:
    return f"client{k}"


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    r = math.isqrt(n)
    return all(n % p for p in range(3, r + 1, 2))


@dataclass(frozen=True)
class CrtConfig:
    """Moduli, precision and client weights for one aggregation.

    ``signed`` decodes CRT totals in [-S/2, S/2); with ``signed=False`` the
    window is [0, S) and all scaled values must be nonnegative.
    """

    moduli: tuple[int, ...]
    gamma: float
    beta: tuple[float, ...]
    signed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "moduli", tuple(int(d) for d in self.moduli))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if not self.moduli:
            raise ValueError("at least one modulus is required")
        if any(d < 2 for d in self.moduli):
            raise ValueError(f"moduli must exceed 1: {self.moduli}")
        for a in range(len(self.moduli)):
            for b in range(a + 1, len(self.moduli)):
                if math.gcd(self.moduli[a], self.moduli[b]) != 1:
                    raise ValueError(f"moduli {self.moduli[a]} and {self.moduli[b]} are not coprime")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not self.beta:
            raise ValueError("at least one client weight is required")

    @property
    def S(self) -> int:
        return math.prod(self.moduli)

    @property
    def K(self) -> int:
        return len(self.beta)

    @property
    def window(self) -> tuple[int, int]:
        """Half-open range of representable totals."""
        S = self.S
        return (-(S // 2), S - S // 2) if self.signed else (0, S)

    @staticmethod
    def weights(sizes) -> tuple[float, ...]:
        total = sum(sizes)
        return tuple(m / total for m in sizes)

    @classmethod
    def for_bound(cls, bound: float, gamma: float, beta, signed: bool = True, start: int = 23) -> "CrtConfig":
        """Smallest run of consecutive primes >= ``start`` whose product covers |sum mu| <= bound."""
        need = int(math.ceil(gamma * bound)) + 1
        need = 2 * need if signed else need
        moduli, p, S = [], max(2, start), 1
        while S <= need:
            while not is_prime(p):
                p += 1
            moduli.append(p)
            S *= p
            p += 1
        return cls(tuple(moduli), gamma, tuple(beta), signed)

    def to_dict(self) -> dict:
        return {"moduli": list(self.moduli), "gamma": self.gamma, "beta": list(self.beta), "signed": self.signed}

    @classmethod
    def from_dict(cls, data) -> "CrtConfig":
        return cls(tuple(data["moduli"]), data["gamma"], tuple(data["beta"]), data.get("signed", True))


# ---------------------------------------------------------------------------
# Shares and reconstruction


def scale_to_integers(g, beta_k: float, gamma: float, config: CrtConfig | None = None) -> np.ndarray:
    """mu = round(gamma beta g) half away from zero, checked against the CRT window."""
    mu = np.array([round_half_away(gamma * beta_k * v) for v in np.atleast_1d(g)], dtype=object)
    if config is not None:
        lo, hi = config.window
        for v in mu:
            if not lo <= v < hi:
                raise OverflowAbort(f"scaled value {v} outside [{lo}, {hi})")
    return mu


def compute_shares(mu: int, moduli) -> tuple[int, ...]:
    return tuple(int(mu) % int(d) for d in moduli)


def aggregate_residue(masked_shares, server_mask: int, d: int, round_modulus: int | None = None) -> int:
    """(o_s + sum_k s'_k) mod d."""
    if round_modulus is not None and round_modulus != d:
        raise ValueError(f"GHZ round over Z_{round_modulus} cannot unmask shares mod {d}")
    return (int(server_mask) + sum(int(s) for s in masked_shares)) % d


def crt_reconstruct(residues, moduli, signed: bool = False) -> int:
    """Unique x in [0, S) (or [-S/2, S/2) when ``signed``) with x = r_i mod d_i."""
    moduli = [int(d) for d in moduli]
    if len(residues) != len(moduli):
        raise ValueError(f"{len(residues)} residues for {len(moduli)} moduli")
    S = math.prod(moduli)
    x = 0
    for r, d in zip(residues, moduli):
        n = S // d
        try:
            inv = pow(n, -1, d)
        except ValueError:
            raise ValueError(f"modulus {d} is not coprime with the others") from None
        x += int(r) * n * inv
    x %= S
    if signed and x >= S - S // 2:
        x -= S
    return x


# ---------------------------------------------------------------------------
# GHZ masks


@dataclass(frozen=True)
class GhzRound:
    """Fourier-basis outcomes (o_s, o_1, ..., o_K) of one d-level GHZ state."""

    d: int
    server: int
    clients: tuple[int, ...]
    backend: str = "sampler"

    @property
    def outcomes(self) -> tuple[int, ...]:
        return (self.server, *self.clients)

    def check(self) -> bool:
        return sum(self.outcomes) % self.d == 0


def ghz_distribution(K: int, d: int, cap: int = STATEVECTOR_CAP) -> np.ndarray:
    """Joint outcome probabilities over Z_d^(K+1) from the qudit statevector.

    Builds (1/sqrt d) sum_q |q>^(K+1) and applies the inverse Fourier matrix
    on every particle; axis 0 is the server.
    """
    if d < 2 or K < 1:
        raise ValueError("need d >= 2 and K >= 1")
    n = K + 1
    if d**n > cap:
        raise MemoryError(f"d^(K+1) = {d**n} amplitudes exceeds the cap of {cap}")
    psi = np.zeros((d,) * n, dtype=np.complex128)
    for q in range(d):
        psi[(q,) * n] = 1 / math.sqrt(d)
    k = np.arange(d)
    Fdag = np.exp(-2j * np.pi * np.outer(k, k) / d) / math.sqrt(d)
    for axis in range(n):
        psi = np.moveaxis(np.tensordot(Fdag, psi, axes=([1], [axis])), 0, axis)
    p = np.abs(psi) ** 2
    return p / p.sum()


def sample_ghz_rounds(K: int, d: int, n: int, backend: str = "sampler", seed=None, cap: int = STATEVECTOR_CAP) -> np.ndarray:
    """(n, K+1) array of outcomes; column 0 is the server."""
    rng = np.random.default_rng(seed)
    if backend == "sampler":
        if d < 2 or K < 1:
            raise ValueError("need d >= 2 and K >= 1")
        clients = rng.integers(0, d, size=(n, K))
        server = (-clients.sum(axis=1)) % d
        return np.column_stack([server, clients])
    if backend == "statevector":
        p = ghz_distribution(K, d, cap).ravel()
        flat = rng.choice(p.shape[0], size=n, p=p)
        return np.column_stack(np.unravel_index(flat, (d,) * (K + 1)))
    raise ValueError(f"unknown GHZ backend {backend!r}")


def run_ghz_round(K: int, d: int, backend: str = "sampler", seed=None) -> GhzRound:
    o = sample_ghz_rounds(K, d, 1, backend, seed)[0]
    return GhzRound(d, int(o[0]), tuple(int(v) for v in o[1:]), backend)


# ---------------------------------------------------------------------------
# Decoy checks


@dataclass(frozen=True)
class Attacker:
    """Channel adversary; ``targets`` lists the attacked client indices (1-based)."""

    kind: str = "intercept_resend"
    targets: tuple[int, ...] = (1,)

    def __post_init__(self):
        if self.kind not in ("none", "intercept_resend"):
            raise ValueError(f"unknown attacker {self.kind!r}")

    def attacks(self, k: int) -> bool:
        return self.kind != "none" and k in self.targets


def decoy_bases(d: int) -> np.ndarray:
    """Columns of basis 0 (computational) and basis 1 (Fourier), shape (2, d, d)."""
    k = np.arange(d)
    return np.stack([np.eye(d, dtype=np.complex128), np.exp(2j * np.pi * np.outer(k, k) / d) / math.sqrt(d)])


def _transition_cdfs(d: int) -> np.ndarray:
    """cdf[a, b, p, :] for measuring basis-a state p in basis b."""
    V = decoy_bases(d)
    overlap = np.abs(np.einsum("aip,biq->abpq", V.conj(), V)) ** 2
    overlap /= overlap.sum(axis=-1, keepdims=True)
    return np.cumsum(overlap, axis=-1)


_CDF_CACHE: dict[int, np.ndarray] = {}


def _measure(rng, cdf, from_basis, to_basis, states):
    rows = cdf[from_basis, to_basis, states]
    u = rng.random(states.shape[0])
    return np.minimum((u[:, None] > rows).sum(axis=1), rows.shape[1] - 1)


@dataclass(frozen=True)
class DecoyResult:
    delta: int
    errors: int
    threshold: float

    @property
    def error_rate(self) -> float:
        return self.errors / self.delta if self.delta else 0.0

    @property
    def passed(self) -> bool:
        return self.error_rate <= self.threshold

    def to_dict(self) -> dict:
        return {"delta": self.delta, "errors": self.errors, "error_rate": self.error_rate, "passed": self.passed}


def run_decoy_check(delta: int, d: int, attacker: bool | str = False, threshold: float = 0.0, seed=None) -> DecoyResult:
    """Send ``delta`` decoys in random bases; an intercept-resend attacker measures and re-sends each.

    Same-basis interception is invisible; cross-basis interception randomizes
    the outcome, so each decoy is flagged with probability (d - 1) / (2d).
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0:
        return DecoyResult(0, 0, threshold)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if d not in _CDF_CACHE:
        _CDF_CACHE[d] = _transition_cdfs(d)
    cdf = _CDF_CACHE[d]
    basis = rng.integers(0, 2, size=delta)
    sent = rng.integers(0, d, size=delta)
    state_basis, state = basis, sent
    if attacker and attacker != "none":
        eve = rng.integers(0, 2, size=delta)
        state = _measure(rng, cdf, state_basis, eve, state)
        state_basis = eve
    got = _measure(rng, cdf, state_basis, basis, state)
    return DecoyResult(delta, int(np.count_nonzero(got != sent)), threshold)


def detection_probability(d: int, delta: int) -> float:
    return 1 - ((d + 1) / (2 * d)) ** delta


# ---------------------------------------------------------------------------
# Protocol


@dataclass
class ProtocolTranscript:
    config: CrtConfig
    messages: list = field(default_factory=list)
    rounds: list = field(default_factory=list)
    totals: list = field(default_factory=list)
    G: list | None = None
    status: str = "ok"
    abort_reason: str | None = None
    error_rates: dict = field(default_factory=dict)

    @property
    def aborted(self) -> bool:
        return self.status != "ok"

    def send(self, sender, receiver, kind, component, modulus, rnd, payload):
        self.messages.append(
            {"sender": sender, "receiver": receiver, "kind": kind, "component": component,
             "modulus": modulus, "round": rnd, "payload": payload}
        )

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "messages": self.messages,
            "rounds": self.rounds,
            "totals": self.totals,
            "G": self.G,
            "status": self.status,
            "abort_reason": self.abort_reason,
            "error_rates": self.error_rates,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data) -> "ProtocolTranscript":
        return cls(
            CrtConfig.from_dict(data["config"]),
            list(data["messages"]),
            list(data["rounds"]),
            list(data["totals"]),
            data["G"],
            data["status"],
            data.get("abort_reason"),
            dict(data.get("error_rates", {})),
        )

    def replay(self) -> list | None:
        """Recompute G from the recorded masked shares and server masks alone."""
        if self.aborted:
            return None
        cfg = self.config
        shares: dict = {}
        for m in self.messages:
            if m["kind"] == "masked_share":
                shares.setdefault((m["component"], m["modulus"]), []).append(m["payload"])
        D = 1 + max(j for j, _ in shares) if shares else 0
        server = {(r["component"], r["modulus"]): r["outcomes"][0] for r in self.rounds}
        G = []
        for j in range(D):
            res = [aggregate_residue(shares[(j, d)], server[(j, d)], d) for d in cfg.moduli]
            G.append(crt_reconstruct(res, cfg.moduli, cfg.signed) / cfg.gamma)
        return G

    def verify(self) -> bool:
        return self.aborted or self.replay() == self.G


@dataclass
class ProtocolResult:
    G: np.ndarray | None
    transcript: ProtocolTranscript

    @property
    def aborted(self) -> bool:
        return self.transcript.aborted


def _as_attacker(attacker) -> Attacker:
    if attacker is None:
        return Attacker("none", ())
    if isinstance(attacker, str):
        return Attacker(attacker)
    return attacker


def run_protocol(
    local_gradients,
    config: CrtConfig,
    attacker=None,
    seed=None,
    delta: int = 0,
    threshold: float = 0.0,
    ghz_backend: str = "sampler",
    masks: dict | None = None,
) -> ProtocolResult:
    """Aggregate G = sum_k beta_k g_k through masked modular shares.

    One GHZ round and one decoy check per client channel are run for every
    (component, modulus) pair. ``masks`` may pin rounds as
    {(component, modulus): (o_s, o_1, ..., o_K)}. Any failed decoy check
    aborts with no output. Raises ``OverflowAbort`` when a total leaves the
    CRT window.
    """
    grads = [np.atleast_1d(np.asarray(g, dtype=float)) for g in local_gradients]
    K = config.K
    if len(grads) != K:
        raise ValueError(f"{len(grads)} gradients for {K} client weights")
    D = grads[0].shape[0]
    if any(g.shape[0] != D for g in grads):
        raise ValueError("clients report gradients of different lengths")
    att = _as_attacker(attacker)
    rng = np.random.default_rng(seed)
    tr = ProtocolTranscript(config)
    for k in range(1, K + 1):
        tr.send(SERVER, _client(k), "announce", -1, 0, 0, {"gamma": config.gamma, "beta": config.beta[k - 1]})

    mu = [scale_to_integers(g, b, config.gamma) for g, b in zip(grads, config.beta)]
    lo, hi = config.window
    for j in range(D):
        vals = [int(m[j]) for m in mu]
        total = sum(vals)
        if not config.signed and min(vals) < 0:
            raise OverflowAbort(f"component {j}: negative scaled value in unsigned mode")
        if not lo <= total < hi:
            raise OverflowAbort(f"component {j}: total {total} outside [{lo}, {hi})")

    totals = []
    for j in range(D):
        residues = []
        for rnd, d in enumerate(config.moduli):
            for k in range(1, K + 1):
                if delta:
                    res = run_decoy_check(delta, d, att.attacks(k), threshold, rng)
                    tr.send(_client(k), SERVER, "decoy_result", j, d, rnd, res.to_dict())
                    tr.error_rates[f"{j}/{d}/{_client(k)}"] = res.error_rate
                    if not res.passed:
                        tr.status = "abort"
                        tr.abort_reason = f"decoy error rate {res.error_rate:.3f} on {_client(k)} (d={d})"
                        return ProtocolResult(None, tr)
            if masks and (j, d) in masks:
                o = tuple(int(v) for v in masks[(j, d)])
                ghz = GhzRound(d, o[0], o[1:], "fixed")
                if not ghz.check() or len(o) != K + 1:
                    raise ValueError(f"pinned round {o} is not a valid sum-zero round for K={K}, d={d}")
            else:
                ghz = run_ghz_round(K, d, ghz_backend, rng)
            tr.rounds.append({"component": j, "modulus": d, "outcomes": list(ghz.outcomes), "backend": ghz.backend})
            masked = []
            for k in range(1, K + 1):
                s = int(mu[k - 1][j]) % d
                sp = (s + ghz.clients[k - 1]) % d
                masked.append(sp)
                tr.send(_client(k), SERVER, "masked_share", j, d, rnd, sp)
            residues.append(aggregate_residue(masked, ghz.server, d))
        total = crt_reconstruct(residues, config.moduli, config.signed)
        totals.append({"component": j, "residues": residues, "total": total})
    tr.totals = totals
    G = np.array([t["total"] / config.gamma for t in totals])
    tr.G = [float(v) for v in G]
    return ProtocolResult(G, tr)


def plain_sum(local_gradients, beta) -> np.ndarray:
    """Unprotected weighted sum, the reference for the protocol."""
    return reduce(np.add, (b * np.asarray(g, dtype=float) for g, b in zip(local_gradients, beta)))
