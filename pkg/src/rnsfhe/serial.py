"""Bit-exact little-endian serialization for parameters, keys, and data.

Record layout (all integers little-endian):

    magic "CATF" | version u16 | kind u8 | scheme u8 | n u32 | L u16
    | moduli u64 x L
    | size_poly u16 | level u16 | domain_bitmap u16 | flags u16
    | scale f64 | aux u64
    | body (u64 words or raw bytes, kind-specific)
    | crc32 u32 over everything before it

The body of every polynomial block follows the rns-poly layout law
((p * level) + j) * n + i.  ``aux`` carries the plain modulus (params), the
Galois element (galois keys), or the plaintext correction factor (BGV
ciphertexts).  Flag bit 0 marks a seed-compressed public-key ``a`` part.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .context import EncryptionParams, Scheme

MAGIC = b"CATF"
VERSION = 1

KIND_PARAMS = 0
KIND_PK = 1
KIND_SK = 2
KIND_RELIN = 3
KIND_GALOIS = 4
KIND_CIPHERTEXT = 5
KIND_PLAINTEXT = 6

FLAG_SEEDED_A = 1

_SCHEME_CODE = {Scheme.CKKS: 0, Scheme.BFV: 1, Scheme.BGV: 2}
_CODE_SCHEME = {v: k for k, v in _SCHEME_CODE.items()}

_COMMON = struct.Struct("<4sHBBIH")
_HEADER = struct.Struct("<HHHHdQ")


class SerializationError(ValueError):
    pass


@dataclass
class Record:
    kind: int
    scheme: Scheme
    n: int
    moduli: tuple[int, ...]
    size_poly: int
    level: int
    domain_bitmap: int
    flags: int
    scale: float
    aux: int
    body: bytes


def _pack(rec: Record) -> bytes:
    parts = [
        _COMMON.pack(MAGIC, VERSION, rec.kind, _SCHEME_CODE[rec.scheme],
                     rec.n, len(rec.moduli)),
        np.array(rec.moduli, dtype="<u8").tobytes(),
        _HEADER.pack(rec.size_poly, rec.level, rec.domain_bitmap, rec.flags,
                     rec.scale, rec.aux),
        rec.body,
    ]
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


class Reader:
    """Sequential parser over one or more concatenated records."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def _take(self, count: int) -> bytes:
        if self.remaining() < count:
            raise SerializationError("truncated record")
        out = self.data[self.pos : self.pos + count]
        self.pos += count
        return out

    def read_record(self, body_words) -> Record:
        """Parse one record.  ``body_words(rec_fields) -> byte length`` maps
        the parsed headers to the expected body size."""
        start = self.pos
        magic, version, kind, scheme_code, n, L = _COMMON.unpack(
            self._take(_COMMON.size)
        )
        if magic != MAGIC:
            raise SerializationError(f"bad magic {magic!r}")
        if version != VERSION:
            raise SerializationError(f"unsupported version {version}")
        if scheme_code not in _CODE_SCHEME:
            raise SerializationError(f"unknown scheme code {scheme_code}")
        moduli = tuple(
            int(v) for v in np.frombuffer(self._take(8 * L), dtype="<u8")
        )
        size_poly, level, domain_bitmap, flags, scale, aux = _HEADER.unpack(
            self._take(_HEADER.size)
        )
        rec = Record(kind, _CODE_SCHEME[scheme_code], n, moduli, size_poly,
                     level, domain_bitmap, flags, scale, aux, b"")
        body_len = body_words(rec)
        rec.body = self._take(body_len)
        crc = struct.unpack("<I", self._take(4))[0]
        if crc != zlib.crc32(self.data[start : self.pos - 4]):
            raise SerializationError("checksum mismatch")
        return rec


# ---------------------------------------------------------------------------
# Body size rules per kind.


def _body_len(rec: Record) -> int:
    if rec.kind == KIND_PARAMS:
        return 0
    if rec.kind == KIND_SK:
        return 8 * rec.n
    if rec.kind == KIND_PK:
        if rec.flags & FLAG_SEEDED_A:
            return 8 * rec.level * rec.n + 32
        return 8 * 2 * rec.level * rec.n
    if rec.kind in (KIND_RELIN, KIND_GALOIS):
        digits = rec.size_poly  # digit count stored here
        return 8 * digits * 2 * rec.level * rec.n
    if rec.kind in (KIND_CIPHERTEXT, KIND_PLAINTEXT):
        return 8 * rec.size_poly * rec.level * rec.n
    raise SerializationError(f"unknown record kind {rec.kind}")


def parse_record(data: bytes, expected_kind: int | None = None) -> Record:
    rec = Reader(data).read_record(_body_len)
    if expected_kind is not None and rec.kind != expected_kind:
        raise SerializationError(f"expected kind {expected_kind}, got {rec.kind}")
    return rec


def _common_fields(params: EncryptionParams) -> dict:
    return {
        "scheme": params.scheme,
        "n": params.n,
        "moduli": tuple(params.coeff_moduli),
    }


def _check_params(rec: Record, params: EncryptionParams):
    if (rec.scheme, rec.n, rec.moduli) != (
        params.scheme, params.n, tuple(params.coeff_moduli)
    ):
        raise SerializationError("record parameters do not match context")


# -- params ------------------------------------------------------------------


def serialize_params(params: EncryptionParams) -> bytes:
    rec = Record(
        kind=KIND_PARAMS, **_common_fields(params),
        size_poly=0, level=params.level_count, domain_bitmap=0, flags=0,
        scale=params.default_scale or 0.0,
        aux=params.plain_modulus or 0, body=b"",
    )
    return _pack(rec)


def deserialize_params(data: bytes) -> EncryptionParams:
    rec = parse_record(data, KIND_PARAMS)
    return EncryptionParams(
        scheme=rec.scheme, n=rec.n, coeff_moduli=rec.moduli,
        plain_modulus=rec.aux or None,
        default_scale=rec.scale or None,
    )


# -- polynomial blocks -------------------------------------------------------


def _rows_bytes(rows: np.ndarray) -> bytes:
    return np.ascontiguousarray(rows, dtype="<u8").tobytes()


def _rows_from(body: bytes, shape) -> np.ndarray:
    return np.frombuffer(body, dtype="<u8").reshape(shape).astype(np.uint64)


def _domain_bitmap(domains) -> int:
    from .rnspoly import Domain

    bm = 0
    for p, d in enumerate(domains):
        if d is Domain.EVALUATION:
            bm |= 1 << p
    return bm


def _domains_from(bitmap: int, size_poly: int):
    from .rnspoly import Domain

    return [
        Domain.EVALUATION if bitmap & (1 << p) else Domain.COEFFICIENT
        for p in range(size_poly)
    ]


def serialize_block(params: EncryptionParams, kind: int, cd, *,
                    scale: float = 0.0, aux: int = 0) -> bytes:
    """Serialize one CData as a ciphertext or plaintext record."""
    rec = Record(
        kind=kind, **_common_fields(params),
        size_poly=cd.size_poly, level=cd.size_modulus,
        domain_bitmap=_domain_bitmap(cd.domains), flags=0,
        scale=scale, aux=aux,
        body=_rows_bytes(cd.view()),
    )
    return _pack(rec)


def deserialize_block(params: EncryptionParams, data: bytes, kind: int):
    from .rnspoly import cdata_new

    rec = parse_record(data, kind)
    _check_params(rec, params)
    cd = cdata_new(None, rec.size_poly, rec.level, rec.n)
    cd.view()[:] = _rows_from(rec.body, (rec.size_poly, rec.level, rec.n))
    cd.domains = _domains_from(rec.domain_bitmap, rec.size_poly)
    return cd, rec


# -- keys --------------------------------------------------------------------


def serialize_secret_key(params: EncryptionParams, sk) -> bytes:
    body = np.asarray(sk.coeffs, dtype="<i8").tobytes()
    rec = Record(
        kind=KIND_SK, **_common_fields(params),
        size_poly=1, level=params.level_count, domain_bitmap=0, flags=0,
        scale=0.0, aux=0, body=body,
    )
    return _pack(rec)


def deserialize_secret_key(ctx, data: bytes):
    from .keys import SecretKey
    from .rnspoly import Domain, cdata_new
    from .keys import _ntt_signed

    rec = parse_record(data, KIND_SK)
    _check_params(rec, ctx.params)
    coeffs = np.frombuffer(rec.body, dtype="<i8").astype(np.int64)
    s = cdata_new(ctx.pool, 1, ctx.params.level_count, ctx.n, Domain.EVALUATION)
    s.view()[0] = _ntt_signed(ctx, coeffs)
    return SecretKey(coeffs=coeffs, s=s, seed=b"\0" * 32)


def serialize_public_key(params: EncryptionParams, pk, seeded: bool = False) -> bytes:
    v = pk.data.view()
    if seeded and pk.a_seed is not None:
        flags = FLAG_SEEDED_A
        body = _rows_bytes(v[0]) + pk.a_seed
    else:
        flags = 0
        body = _rows_bytes(v)
    rec = Record(
        kind=KIND_PK, **_common_fields(params),
        size_poly=2, level=params.level_count,
        domain_bitmap=_domain_bitmap(pk.data.domains), flags=flags,
        scale=0.0, aux=0, body=body,
    )
    return _pack(rec)


def deserialize_public_key(ctx, data: bytes):
    from .coremath.sampling import Rng
    from .keys import PublicKey
    from .rnspoly import Domain, cdata_new

    rec = parse_record(data, KIND_PK)
    _check_params(rec, ctx.params)
    L, n = rec.level, rec.n
    cd = cdata_new(ctx.pool, 2, L, n, Domain.EVALUATION)
    if rec.flags & FLAG_SEEDED_A:
        b_rows = _rows_from(rec.body[: 8 * L * n], (L, n))
        seed = rec.body[8 * L * n :]
        a_rows = ctx.ntt_chain.forward(
            Rng(seed).uniform_residues(ctx.q_arr(), n), np.arange(L)
        )
        cd.view()[0] = b_rows
        cd.view()[1] = a_rows
        return PublicKey(data=cd, a_seed=seed)
    cd.view()[:] = _rows_from(rec.body, (2, L, n))
    cd.domains = _domains_from(rec.domain_bitmap, 2)
    return PublicKey(data=cd, a_seed=None)


def serialize_kswitch_key(params: EncryptionParams, ksk, kind: int = KIND_RELIN) -> bytes:
    bodies = b"".join(_rows_bytes(d.view()) for d in ksk.digits)
    rec = Record(
        kind=kind, **_common_fields(params),
        size_poly=len(ksk.digits), level=params.level_count,
        domain_bitmap=0, flags=0, scale=0.0,
        aux=ksk.target_elt or 0, body=bodies,
    )
    return _pack(rec)


def _ksk_from_record(ctx, rec: Record):
    from .keys import KSwitchKey
    from .rnspoly import Domain, cdata_new

    L, n = rec.level, rec.n
    words = 2 * L * n
    digits = []
    raw = np.frombuffer(rec.body, dtype="<u8")
    for i in range(rec.size_poly):
        cd = cdata_new(ctx.pool, 2, L, n, Domain.EVALUATION)
        cd.view()[:] = raw[i * words : (i + 1) * words].reshape(2, L, n)
        digits.append(cd)
    return KSwitchKey(digits=digits, target_elt=rec.aux or None)


def deserialize_kswitch_key(ctx, data: bytes, kind: int = KIND_RELIN):
    rec = parse_record(data, kind)
    _check_params(rec, ctx.params)
    return _ksk_from_record(ctx, rec)


def serialize_galois_keys(params: EncryptionParams, gks) -> bytes:
    records = [
        serialize_kswitch_key(params, ksk, KIND_GALOIS)
        for _, ksk in sorted(gks.keys.items())
    ]
    return struct.pack("<I", len(records)) + b"".join(records)


def deserialize_galois_keys(ctx, data: bytes):
    from .keys import GaloisKeys

    count = struct.unpack("<I", data[:4])[0]
    reader = Reader(data[4:])
    out = GaloisKeys()
    for _ in range(count):
        rec = reader.read_record(_body_len)
        if rec.kind != KIND_GALOIS:
            raise SerializationError("expected galois record")
        _check_params(rec, ctx.params)
        out.keys[rec.aux] = _ksk_from_record(ctx, rec)
    return out
