"""Additively homomorphic transport for model updates.

Clients quantize their parameter vectors to fixed point, encrypt each
coordinate under a Paillier-style public key, and ship ciphertexts; the
server can sum ciphertexts without decrypting and only ever decrypts the
aggregate (for an equal-weight mean), or decrypt individual updates first
when the aggregation rule needs sorting (trimming cannot run on
ciphertexts under a purely additive scheme).

The scheme is the classic n+1-generator construction: n = p*q, encryption
c = (1 + m*n) * r^n mod n^2, decryption m = L(c^lambda mod n^2) * mu mod n
with L(x) = (x-1)/n, lambda = (p-1)(q-1), mu = lambda^-1 mod n. Additive
homomorphism is ciphertext multiplication mod n^2. Signed values are stored
mod n and folded back at n/2.

Key sizes here are deliberately small (256-bit test keys, 1024-bit demo
keys) and the primality test is probabilistic; nothing in this module is
claimed production-secure. It exists to demonstrate that the transport
layer is semantically transparent to aggregation up to quantization error.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass

import numpy as np

from fedfall.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

# 40 rounds of the probabilistic primality test bound the error per prime
# by 4^-40 = 2^-80, comfortably past the 2^-64 requirement.
MILLER_RABIN_ROUNDS = 40

TEST_KEY_BITS = 256
DEMO_KEY_BITS = 1024


def _is_probable_prime(n: int, rng: random.Random, rounds: int = MILLER_RABIN_ROUNDS) -> bool:
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def _random_prime(bits: int, rng: random.Random) -> int:
    while True:
        cand = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if _is_probable_prime(cand, rng):
            return cand


@dataclass(frozen=True)
class HeKeyPair:
    """Public modulus/generator plus the private decryption exponents."""

    n: int
    g: int
    lam: int
    mu: int
    key_bits: int

    @property
    def n_squared(self) -> int:
        return self.n * self.n

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(hex(self.n).encode()).hexdigest()[:16]


def keygen(bits: int = DEMO_KEY_BITS, seed: int = 0) -> HeKeyPair:
    """Deterministic key generation from a seed.

    ``bits`` is the size of the modulus n; each prime gets bits/2.
    """
    if bits < 128:
        raise ValueError(f"key size must be at least 128 bits, got {bits}")
    rng = random.Random(seed)
    half = bits // 2
    p = _random_prime(half, rng)
    q = _random_prime(half, rng)
    while q == p:
        q = _random_prime(half, rng)
    n = p * q
    lam = (p - 1) * (q - 1)
    mu = pow(lam, -1, n)
    return HeKeyPair(n=n, g=n + 1, lam=lam, mu=mu, key_bits=bits)


def encrypt(m: int, key: HeKeyPair, rng: random.Random) -> int:
    """Encrypt one plaintext residue mod n."""
    m %= key.n
    n, n2 = key.n, key.n_squared
    while True:
        r = rng.randrange(1, n)
        if math.gcd(r, n) == 1:
            break
    # (n+1)^m = 1 + m*n (mod n^2), so the generator power needs no pow()
    return ((1 + m * n) % n2) * pow(r, n, n2) % n2


def decrypt(c: int, key: HeKeyPair) -> int:
    """Decrypt to the plaintext residue in [0, n)."""
    if not 0 <= c < key.n_squared:
        raise ValueError("ciphertext out of range")
    x = pow(c, key.lam, key.n_squared)
    return ((x - 1) // key.n) * key.mu % key.n


@dataclass(frozen=True)
class FixedPointCodec:
    """Maps reals to integers at 2^scale_bits resolution within +-clip_range.

    Round-trip error within range is at most 2^-(scale_bits+1).
    """

    scale_bits: int = 20
    clip_range: float = 100.0

    def __post_init__(self):
        if self.scale_bits < 1 or self.clip_range <= 0:
            raise ValueError("scale_bits must be >= 1 and clip_range positive")

    @property
    def scale(self) -> int:
        return 1 << self.scale_bits

    def encode(self, x: float) -> tuple[int, bool]:
        clipped = x > self.clip_range or x < -self.clip_range
        x = min(max(x, -self.clip_range), self.clip_range)
        # round-half-away-from-zero keeps the error bound symmetric
        return int(math.floor(x * self.scale + 0.5)), clipped

    def decode(self, v: int) -> float:
        return v / self.scale


def _to_signed(m: int, n: int) -> int:
    return m - n if m > n // 2 else m


@dataclass(frozen=True)
class EncryptedVector:
    """Per-coordinate ciphertexts plus enough metadata to refuse mixing.

    ``modulus`` is the public n, carried so ciphertext addition can run
    without the private key.
    """

    ciphertexts: tuple[int, ...]
    modulus: int
    scale_bits: int
    clip_range: float
    clipped_count: int = 0

    @property
    def key_fingerprint(self) -> str:
        return hashlib.sha256(hex(self.modulus).encode()).hexdigest()[:16]

    def __len__(self) -> int:
        return len(self.ciphertexts)

    def _compatible(self, other: "EncryptedVector") -> None:
        if self.modulus != other.modulus:
            raise ValueError("ciphertexts under different keys cannot be combined")
        if (self.scale_bits, self.clip_range) != (other.scale_bits, other.clip_range):
            raise ValueError("ciphertexts under different codecs cannot be combined")
        if len(self) != len(other):
            raise ShapeMismatchError(f"length mismatch: {len(self)} vs {len(other)}")


def encrypt_vector(
    params: np.ndarray,
    key: HeKeyPair,
    codec: FixedPointCodec,
    rng: random.Random | None = None,
) -> EncryptedVector:
    """Quantize and encrypt a flat parameter vector.

    Out-of-range coordinates are clipped; the count is carried on the
    result and logged.
    """
    rng = rng or random.Random()
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1:
        raise ShapeMismatchError(f"expected a flat vector, got shape {params.shape}")
    cts = []
    clipped = 0
    for x in params.tolist():
        m, was_clipped = codec.encode(x)
        clipped += was_clipped
        cts.append(encrypt(m, key, rng))
    if clipped:
        logger.warning("clipped %d of %d coordinates to +-%g", clipped, len(cts), codec.clip_range)
    return EncryptedVector(
        ciphertexts=tuple(cts),
        modulus=key.n,
        scale_bits=codec.scale_bits,
        clip_range=codec.clip_range,
        clipped_count=clipped,
    )


def decrypt_vector(enc: EncryptedVector, key: HeKeyPair, codec: FixedPointCodec) -> np.ndarray:
    if enc.modulus != key.n:
        raise ValueError("vector was encrypted under a different key")
    if (enc.scale_bits, enc.clip_range) != (codec.scale_bits, codec.clip_range):
        raise ValueError("vector was encoded under a different codec")
    out = np.empty(len(enc))
    for i, c in enumerate(enc.ciphertexts):
        out[i] = codec.decode(_to_signed(decrypt(c, key), key.n))
    return out


def add_encrypted(a: EncryptedVector, b: EncryptedVector) -> EncryptedVector:
    """Coordinate-wise ciphertext combination; decrypts to the plaintext sum.

    Runs entirely on public material (ciphertext product mod n^2).
    """
    a._compatible(b)
    n2 = a.modulus * a.modulus
    cts = tuple(x * y % n2 for x, y in zip(a.ciphertexts, b.ciphertexts))
    return EncryptedVector(
        ciphertexts=cts,
        modulus=a.modulus,
        scale_bits=a.scale_bits,
        clip_range=a.clip_range,
        clipped_count=a.clipped_count + b.clipped_count,
    )


def secure_mean_demo(
    updates: list[np.ndarray],
    key: HeKeyPair,
    codec: FixedPointCodec,
    rng: random.Random | None = None,
) -> np.ndarray:
    """Equal-weight mean computed on ciphertexts, decrypted once.

    Each client encrypts its vector; the server multiplies ciphertexts
    coordinate-wise (plaintext addition), decrypts the single aggregate,
    and divides by the client count. Only the aggregate ever leaves the
    encrypted domain. Sorting-based rules cannot run in this domain: a
    robust trimming step requires the server to decrypt individual updates
    first, which is the decrypt-then-aggregate variant the round loop uses.
    """
    if not updates:
        raise ValueError("no updates")
    rng = rng or random.Random()
    encrypted = [encrypt_vector(u, key, codec, rng) for u in updates]
    total = encrypted[0]
    for e in encrypted[1:]:
        total = add_encrypted(total, e)
    summed = decrypt_vector(total, key, codec)
    return summed / len(updates)


# Payload file format: magic, JSON header (fingerprint, codec, length),
# then each ciphertext as a 4-byte big-endian length prefix + big-endian
# integer bytes.
_PAYLOAD_MAGIC = b"EPFLHE1\n"


def save_payload(path, enc: EncryptedVector) -> None:
    header = {
        "key_fingerprint": enc.key_fingerprint,
        "modulus_hex": hex(enc.modulus),
        "scale_bits": enc.scale_bits,
        "clip_range": enc.clip_range,
        "clipped_count": enc.clipped_count,
        "length": len(enc),
    }
    with open(path, "wb") as fh:
        fh.write(_PAYLOAD_MAGIC)
        blob = json.dumps(header).encode("utf-8")
        fh.write(len(blob).to_bytes(4, "big"))
        fh.write(blob)
        for c in enc.ciphertexts:
            raw = c.to_bytes((c.bit_length() + 7) // 8 or 1, "big")
            fh.write(len(raw).to_bytes(4, "big"))
            fh.write(raw)


def load_payload(path) -> EncryptedVector:
    with open(path, "rb") as fh:
        if fh.read(len(_PAYLOAD_MAGIC)) != _PAYLOAD_MAGIC:
            raise ValueError(f"{path}: not an encrypted payload file")
        hlen = int.from_bytes(fh.read(4), "big")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        cts = []
        for _ in range(header["length"]):
            clen = int.from_bytes(fh.read(4), "big")
            raw = fh.read(clen)
            if len(raw) != clen:
                raise ValueError(f"{path}: truncated payload")
            cts.append(int.from_bytes(raw, "big"))
    vec = EncryptedVector(
        ciphertexts=tuple(cts),
        modulus=int(header["modulus_hex"], 16),
        scale_bits=header["scale_bits"],
        clip_range=header["clip_range"],
        clipped_count=header["clipped_count"],
    )
    if vec.key_fingerprint != header["key_fingerprint"]:
        raise ValueError(f"{path}: fingerprint does not match modulus")
    return vec
