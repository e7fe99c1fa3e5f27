"""Fixed-point codec for real values held in q-qubit registers."""
from __future__ import annotations

import math
from dataclasses import dataclass


def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass(frozen=True)
class FixedPoint:
    """q-bit fixed-point numbers with ``frac_bits`` fractional bits.

    Signed values use two's complement, so raw register contents are always
    in [0, 2**q).
    """

    q: int
    frac_bits: int = 0
    signed: bool = True

    def __post_init__(self):
        if self.q < 1 or not 0 <= self.frac_bits <= 62:
            raise ValueError(f"invalid fixed-point format q={self.q}, frac_bits={self.frac_bits}")

    @property
    def resolution(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def int_range(self) -> tuple[int, int]:
        if self.signed:
            return -(1 << (self.q - 1)), (1 << (self.q - 1)) - 1
        return 0, (1 << self.q) - 1

    @property
    def min_value(self) -> float:
        return self.int_range[0] * self.resolution

    @property
    def max_value(self) -> float:
        return self.int_range[1] * self.resolution

    def to_int(self, value: float) -> int:
        """Scaled integer for ``value`` (no range check)."""
        return round_half_away(value * (1 << self.frac_bits))

    def fits(self, n: int) -> bool:
        lo, hi = self.int_range
        return lo <= n <= hi

    def wrap(self, n: int) -> int:
        """Two's-complement raw register value of the integer ``n``."""
        return n % (1 << self.q)

    def signed_int(self, raw: int) -> int:
        raw %= 1 << self.q
        if self.signed and raw >= 1 << (self.q - 1):
            return raw - (1 << self.q)
        return raw

    def encode(self, value: float) -> int:
        n = self.to_int(value)
        if not self.fits(n):
            raise OverflowError(f"{value} outside [{self.min_value}, {self.max_value}] for {self}")
        return self.wrap(n)

    def decode(self, raw: int) -> float:
        if not 0 <= raw < 1 << self.q:
            raise ValueError(f"raw value {raw} outside {self.q}-bit register")
        return self.signed_int(raw) * self.resolution

    def quantize(self, value: float) -> float:
        return self.decode(self.encode(value))

    @classmethod
    def for_range(cls, bound: float, q: int, signed: bool = True) -> "FixedPoint":
        """Widest fraction that still holds values in [-bound, bound] within q bits."""
        int_bits = max(0, math.ceil(math.log2(bound + 1))) if bound > 0 else 0
        frac = q - int_bits - (1 if signed else 0)
        if frac < 0:
            raise OverflowError(f"{q} bits cannot hold magnitude {bound}")
        return cls(q, frac, signed)
