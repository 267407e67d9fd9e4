"""Software simulation of TEE data sealing and local attestation.

An "enclave" here is a module boundary with a measured identity, not a
memory-protection boundary. A platform holds a root secret from which
sealing keys and report keys are derived on demand (they are never stored);
sealed payloads are AES-128-GCM containers bound to the platform and, per
policy, to either the enclave's code measurement (MRENCLAVE) or to its
signer + product id (MRSIGNER).

Sealed blob layout (all integers little-endian), 560-byte header followed
by the ciphertext:

    [  0..  4) magic            b"SSB1"
    [  4..  8) format_version   u32 = 1
    [  8.. 10) policy           u16 (1=MRENCLAVE, 2=MRSIGNER)
    [ 10.. 12) isv_svn          u16 (of the sealing enclave)
    [ 12.. 28) cpu_svn          16 bytes
    [ 28.. 60) key_id           32 bytes (fresh random per seal)
    [ 60.. 92) measurement      32 bytes
    [ 92..124) signer           32 bytes
    [124..126) product_id       u16
    [126..128) reserved         zeros
    [128..132) payload_len      u32
    [132..136) aad_len          u32 (always 0; caller AAD is authenticated
                                     but never stored)
    [136..532) reserved         zeros (396 bytes)
    [532..544) IV               12 bytes
    [544..560) AEAD tag         16 bytes
    [560..   ) ciphertext       payload_len bytes

The first 532 header bytes, concatenated with the caller's AAD, form the
associated data of the AEAD, so any header tamper fails authentication
even where it does not already fail parsing.

All operations are pure functions of their inputs plus os.urandom; they are
safe for unrestricted concurrent use.
"""

from __future__ import annotations

import enum
import hashlib
import hmac as _hmac
import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.ciphers import algorithms
from cryptography.hazmat.primitives.cmac import CMAC

from .errors import AuthenticationFailure, MalformedBlob, PayloadTooLarge, SvnViolation

BLOB_MAGIC = b"SSB1"
BLOB_FORMAT_VERSION = 1
HEADER_SIZE = 560
AAD_PREFIX_SIZE = 532  # header bytes covered by the AEAD associated data
MAX_PAYLOAD = 2**32 - HEADER_SIZE - 1

_HEAD = struct.Struct("<4sIHH16s32s32s32sH2sII")  # 136 bytes; then 396 reserved
_RESERVED_TAIL = bytes(396)

_SEAL_LABEL = b"SEALKEYv1"
_REPORT_LABEL = b"REPORTv1"

_PLATFORM_DOMAIN = b"SVPLATFORMv1"
REPORT_DATA_SIZE = 64


class SealingPolicy(enum.IntEnum):
    """What identity a sealed blob is bound to."""

    MRENCLAVE = 1  # exact code measurement
    MRSIGNER = 2  # signer identity + product id


@dataclass(frozen=True)
class PlatformIdentity:
    """A simulated platform: root sealing secret plus public identifiers.

    platform_key never appears in any serialized output; it only feeds the
    CMAC-based key derivations.
    """

    platform_key: bytes  # 32-byte root secret
    cpu_svn: bytes  # 16 bytes
    platform_id: bytes  # 16 bytes, public

    def __repr__(self) -> str:  # keep the root secret out of logs/reprs
        return f"PlatformIdentity(platform_id={self.platform_id.hex()})"


@dataclass(frozen=True)
class EnclaveIdentity:
    measurement: bytes  # 32-byte digest of the code blob
    signer: bytes  # 32-byte digest of the signer identity
    product_id: int
    isv_svn: int


def _header_prefix(
    policy: SealingPolicy,
    isv_svn: int,
    cpu_svn: bytes,
    key_id: bytes,
    measurement: bytes,
    signer: bytes,
    product_id: int,
    payload_len: int,
) -> bytes:
    """First 532 header bytes (everything before IV); the AAD prefix."""
    head = _HEAD.pack(
        BLOB_MAGIC,
        BLOB_FORMAT_VERSION,
        int(policy),
        isv_svn,
        cpu_svn,
        key_id,
        measurement,
        signer,
        product_id,
        b"\x00\x00",
        payload_len,
        0,
    )
    return head + _RESERVED_TAIL


@dataclass(frozen=True)
class SealedBlob:
    """Parsed sealed container; `to_bytes` re-emits the bit-exact layout."""

    policy: SealingPolicy
    isv_svn: int
    cpu_svn: bytes
    key_id: bytes
    measurement: bytes
    signer: bytes
    product_id: int
    iv: bytes
    tag: bytes
    ciphertext: bytes

    def header_prefix(self) -> bytes:
        return _header_prefix(
            self.policy,
            self.isv_svn,
            self.cpu_svn,
            self.key_id,
            self.measurement,
            self.signer,
            self.product_id,
            len(self.ciphertext),
        )

    def to_bytes(self) -> bytes:
        return self.header_prefix() + self.iv + self.tag + self.ciphertext

    def __len__(self) -> int:
        return HEADER_SIZE + len(self.ciphertext)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SealedBlob":
        """Parse and structurally validate a sealed blob.

        Raises MalformedBlob on wrong magic/version, bad sizes, a nonzero
        aad_len, or nonzero reserved regions.
        """
        if len(raw) < HEADER_SIZE:
            raise MalformedBlob(f"blob shorter than header: {len(raw)} < {HEADER_SIZE}")
        (
            magic,
            version,
            policy_code,
            isv_svn,
            cpu_svn,
            key_id,
            measurement,
            signer,
            product_id,
            reserved2,
            payload_len,
            aad_len,
        ) = _HEAD.unpack_from(raw, 0)
        if magic != BLOB_MAGIC:
            raise MalformedBlob("bad magic")
        if version != BLOB_FORMAT_VERSION:
            raise MalformedBlob(f"unsupported format version {version}")
        try:
            policy = SealingPolicy(policy_code)
        except ValueError:
            raise MalformedBlob(f"unknown sealing policy {policy_code}") from None
        if reserved2 != b"\x00\x00" or raw[_HEAD.size:AAD_PREFIX_SIZE] != _RESERVED_TAIL:
            raise MalformedBlob("reserved region not zero")
        if aad_len != 0:
            raise MalformedBlob("aad_len must be 0")
        if len(raw) != HEADER_SIZE + payload_len:
            raise MalformedBlob(
                f"size mismatch: have {len(raw)}, header says {HEADER_SIZE + payload_len}"
            )
        return cls(
            policy=policy,
            isv_svn=isv_svn,
            cpu_svn=cpu_svn,
            key_id=key_id,
            measurement=measurement,
            signer=signer,
            product_id=product_id,
            iv=raw[AAD_PREFIX_SIZE:544],
            tag=raw[544:HEADER_SIZE],
            ciphertext=raw[HEADER_SIZE:],
        )


@dataclass(frozen=True)
class Report:
    """Local attestation report: identity of the reporting enclave plus a MAC
    that only the target enclave on the same platform can recompute."""

    measurement: bytes
    signer: bytes
    product_id: int
    isv_svn: int
    report_data: bytes  # 64 bytes
    mac: bytes  # 16 bytes

    def body_bytes(self) -> bytes:
        return (
            self.measurement
            + self.signer
            + struct.pack("<HH", self.product_id, self.isv_svn)
            + self.report_data
        )


def _sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _cmac(key: bytes, message: bytes) -> bytes:
    c = CMAC(algorithms.AES(key))
    c.update(message)
    return c.finalize()


def create_platform(seed: bytes) -> PlatformIdentity:
    """Derive a deterministic test platform from a 32-byte seed.

    Each field uses a distinct domain-separation label under HMAC-SHA-256 so
    the public identifiers reveal nothing about the root secret.
    """
    if len(seed) != 32:
        raise ValueError("platform seed must be exactly 32 bytes")
    return PlatformIdentity(
        platform_key=_hmac.new(seed, _PLATFORM_DOMAIN + b"/key", "sha256").digest(),
        cpu_svn=_hmac.new(seed, _PLATFORM_DOMAIN + b"/cpu-svn", "sha256").digest()[:16],
        platform_id=_hmac.new(seed, _PLATFORM_DOMAIN + b"/id", "sha256").digest()[:16],
    )


def random_platform() -> PlatformIdentity:
    return create_platform(os.urandom(32))


def measure_enclave(
    code_blob: bytes, signer_identity: bytes, product_id: int, isv_svn: int
) -> EnclaveIdentity:
    """Measure an enclave: identity digests are pure functions of the inputs."""
    return EnclaveIdentity(
        measurement=_sha256(code_blob),
        signer=_sha256(signer_identity),
        product_id=product_id,
        isv_svn=isv_svn,
    )


def _identity_field(enclave: EnclaveIdentity, policy: SealingPolicy) -> bytes:
    if policy is SealingPolicy.MRENCLAVE:
        return enclave.measurement
    return enclave.signer + struct.pack("<H", enclave.product_id)


def derive_sealing_key(
    platform: PlatformIdentity,
    enclave: EnclaveIdentity,
    policy: SealingPolicy,
    key_id: bytes,
    isv_svn_request: int,
    cpu_svn_request: bytes,
) -> bytes:
    """Derive the 128-bit sealing key for a key request.

    The key is the AES-CMAC, under the platform root secret, of the
    fixed-order request serialization:

        "SEALKEYv1" | policy u16 | key_id (32) | isv_svn u16 | cpu_svn (16)
                    | identity field

    where the identity field is the measurement under MRENCLAVE and
    signer | product_id u16 under MRSIGNER (so MRSIGNER keys are independent
    of the measurement by construction). An enclave may request keys for its
    own or older security versions only.
    """
    if len(key_id) != 32:
        raise ValueError("key_id must be 32 bytes")
    if len(cpu_svn_request) != 16:
        raise ValueError("cpu_svn must be 16 bytes")
    if isv_svn_request > enclave.isv_svn:
        raise SvnViolation(
            f"requested isv_svn {isv_svn_request} > enclave isv_svn {enclave.isv_svn}"
        )
    message = (
        _SEAL_LABEL
        + struct.pack("<H", int(policy))
        + key_id
        + struct.pack("<H", isv_svn_request)
        + cpu_svn_request
        + _identity_field(enclave, policy)
    )
    return _cmac(platform.platform_key, message)


def seal(
    platform: PlatformIdentity,
    enclave: EnclaveIdentity,
    policy: SealingPolicy,
    payload: bytes,
    aad: bytes = b"",
) -> SealedBlob:
    """Seal a payload to this platform under the given policy.

    A fresh key_id and IV are drawn per call; the caller AAD is authenticated
    but not stored (readers must be able to recompute it). Output size is
    always exactly 560 + len(payload).
    """
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    key_id = os.urandom(32)
    iv = os.urandom(12)
    key = derive_sealing_key(
        platform, enclave, policy, key_id, enclave.isv_svn, platform.cpu_svn
    )
    prefix = _header_prefix(
        policy,
        enclave.isv_svn,
        platform.cpu_svn,
        key_id,
        enclave.measurement,
        enclave.signer,
        enclave.product_id,
        len(payload),
    )
    ct_and_tag = AESGCM(key).encrypt(iv, bytes(payload), prefix + aad)
    return SealedBlob(
        policy=policy,
        isv_svn=enclave.isv_svn,
        cpu_svn=platform.cpu_svn,
        key_id=key_id,
        measurement=enclave.measurement,
        signer=enclave.signer,
        product_id=enclave.product_id,
        iv=iv,
        tag=ct_and_tag[-16:],
        ciphertext=ct_and_tag[:-16],
    )


def unseal(
    platform: PlatformIdentity,
    enclave: EnclaveIdentity,
    blob: SealedBlob | bytes,
    aad: bytes = b"",
) -> bytes:
    """Recover a sealed payload.

    The key is re-derived from the blob's recorded policy/key_id/SVNs and the
    *caller's* enclave identity, so a different platform, a different
    measurement (MRENCLAVE), a different signer (MRSIGNER), a wrong AAD, or
    any bit tamper all fail authentication.
    """
    if isinstance(blob, (bytes, bytearray, memoryview)):
        blob = SealedBlob.from_bytes(bytes(blob))
    if enclave.isv_svn < blob.isv_svn:
        raise SvnViolation(
            f"enclave isv_svn {enclave.isv_svn} < blob isv_svn {blob.isv_svn}"
        )
    key = derive_sealing_key(
        platform, enclave, blob.policy, blob.key_id, blob.isv_svn, blob.cpu_svn
    )
    try:
        return AESGCM(key).decrypt(
            blob.iv, blob.ciphertext + blob.tag, blob.header_prefix() + aad
        )
    except InvalidTag:
        raise AuthenticationFailure(
            "unseal failed: wrong platform/identity, wrong AAD, or tampered blob"
        ) from None


def _report_key(platform: PlatformIdentity, target: EnclaveIdentity) -> bytes:
    return _cmac(platform.platform_key, _REPORT_LABEL + target.measurement)


def create_report(
    platform: PlatformIdentity,
    self_enclave: EnclaveIdentity,
    target: EnclaveIdentity,
    report_data: bytes,
) -> Report:
    """Produce a local-attestation report about self_enclave for target.

    The MAC key is derived from the platform secret and the target's
    measurement, so only the target enclave on the same platform can verify.
    report_data is zero-padded to 64 bytes.
    """
    if len(report_data) > REPORT_DATA_SIZE:
        raise ValueError(f"report_data must be at most {REPORT_DATA_SIZE} bytes")
    report_data = report_data.ljust(REPORT_DATA_SIZE, b"\x00")
    body = Report(
        measurement=self_enclave.measurement,
        signer=self_enclave.signer,
        product_id=self_enclave.product_id,
        isv_svn=self_enclave.isv_svn,
        report_data=report_data,
        mac=b"",
    )
    mac = _cmac(_report_key(platform, target), body.body_bytes())
    return Report(
        measurement=body.measurement,
        signer=body.signer,
        product_id=body.product_id,
        isv_svn=body.isv_svn,
        report_data=report_data,
        mac=mac,
    )


def verify_report(
    platform: PlatformIdentity, target: EnclaveIdentity, report: Report
) -> bool:
    """True iff the report MAC recomputes under the target's report key."""
    expected = _cmac(_report_key(platform, target), report.body_bytes())
    return _hmac.compare_digest(expected, report.mac)
