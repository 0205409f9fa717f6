"""Hash commitments over canonically encoded bids.

SHA-256 over a domain tag, the length-prefixed message and a 32-byte nonce.
This is binding and computationally hiding; it is not perfectly hiding.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass
from decimal import Decimal

DOMAIN_TAG = b"adra/commit/v1"
NONCE_BYTES = 32
BID_PRECISION = 12  # decimal places kept by the canonical bid encoding


@dataclass(frozen=True)
class Commitment:
    digest: bytes

    def __post_init__(self):
        if len(self.digest) != 32:
            raise ValueError("commitment digest must be 32 bytes")

    def hex(self) -> str:
        return self.digest.hex()


def encode_bid(b: float, precision: int = BID_PRECISION) -> bytes:
    """Fixed-point decimal text of ``b`` rounded to ``precision`` places."""
    q = Decimal(b).quantize(Decimal(1).scaleb(-precision))
    if q == 0:
        q = abs(q)
    return f"{q:f}".encode("ascii")


def fresh_nonce(rng=None) -> bytes:
    """32 random bytes; from ``rng`` (a numpy Generator) when reproducibility matters."""
    if rng is None:
        return secrets.token_bytes(NONCE_BYTES)
    return rng.bytes(NONCE_BYTES)


def _digest(message: bytes, nonce: bytes) -> bytes:
    h = hashlib.sha256()
    h.update(DOMAIN_TAG)
    h.update(len(message).to_bytes(4, "big"))
    h.update(message)
    h.update(nonce)
    return h.digest()


def commit(message: bytes, nonce: bytes) -> Commitment:
    if len(nonce) != NONCE_BYTES:
        raise ValueError(f"nonce must be exactly {NONCE_BYTES} bytes, got {len(nonce)}")
    return Commitment(_digest(message, nonce))


def verify(c: Commitment, message: bytes, nonce: bytes) -> bool:
    if len(nonce) != NONCE_BYTES:
        return False
    return hmac.compare_digest(c.digest, _digest(message, nonce))
