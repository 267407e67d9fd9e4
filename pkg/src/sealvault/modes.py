"""Crypto mode registry: block/content encryption, key wrapping, filenames.

Two interchangeable modes share one contract:

  * v1     - password-derived keys; a block is IV(12) | ciphertext | tag(16)
             under AES-256-GCM, 28 bytes of overhead.
  * sealed - platform-bound sealing via an enclave session; a block is a
             SealedBlob, 560 bytes of overhead.

Cleartext blocks are at most 32768 bytes; every block is bound to its
position with AAD = file_id (16 bytes) | block index (u64 big-endian), so
blocks cannot be swapped between files or reordered within one.

Filename encryption is deterministic (AES-SIV keyed by the name key, with
the directory id as associated data) because lookup-by-name requires the
same name to encrypt to the same string. Encoded names are unpadded
URL-safe base64 plus a ".sc" suffix and never exceed 255 characters.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import os
import struct
import threading
from dataclasses import dataclass
from enum import Enum

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM, AESSIV

from . import tee
from .errors import (
    AlreadyDestroyed,
    AlreadyInitialized,
    AuthenticationFailure,
    BlockTooLarge,
    EmptyBlock,
    EmptyPassword,
    MalformedBlob,
    MalformedBlock,
    MalformedName,
    InvalidName,
    NameTooLong,
    SessionDestroyed,
)

BLOCK_SIZE = 32768
V1_BLOCK_OVERHEAD = 28  # 12-byte IV + 16-byte tag
SEALED_BLOCK_OVERHEAD = tee.HEADER_SIZE  # 560
WRAPPED_KEY_SIZE = 60  # 12-byte IV + 32-byte ct + 16-byte tag
MAX_NAME_BYTES = 160
NAME_SUFFIX = ".sc"
MAX_ENCODED_NAME = 255
DEFAULT_PBKDF2_ITERATIONS = 600_000


class ModeId(str, Enum):
    V1 = "v1"
    SEALED = "sealed"

    @property
    def block_overhead(self) -> int:
        return V1_BLOCK_OVERHEAD if self is ModeId.V1 else SEALED_BLOCK_OVERHEAD


@dataclass(frozen=True)
class MasterKeys:
    """Vault master keys: content_key protected per mode, name_key always
    password-wrapped."""

    content_key: bytes  # 32 bytes
    name_key: bytes  # 32 bytes

    def __repr__(self) -> str:
        return "MasterKeys(<redacted>)"


def derive_kek(password: str, salt: bytes, iterations: int) -> bytes:
    """PBKDF2-HMAC-SHA-256 key-encryption key, 32 bytes, deterministic."""
    if not password:
        raise EmptyPassword("password must not be empty")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if len(salt) != 16:
        raise ValueError("salt must be 16 bytes")
    return hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations, 32)


def wrap_key(kek: bytes, key: bytes, label: bytes) -> bytes:
    """AEAD-wrap a 32-byte key under the KEK; label is authenticated."""
    if len(key) != 32:
        raise ValueError("only 32-byte keys are wrapped")
    iv = os.urandom(12)
    return iv + AESGCM(kek).encrypt(iv, key, bytes(label))


def unwrap_key(kek: bytes, wrapped: bytes, label: bytes) -> bytes:
    """Inverse of wrap_key; AuthenticationFailure signals a wrong KEK or label."""
    if len(wrapped) != WRAPPED_KEY_SIZE:
        raise ValueError(f"wrapped key must be {WRAPPED_KEY_SIZE} bytes")
    try:
        return AESGCM(kek).decrypt(wrapped[:12], wrapped[12:], bytes(label))
    except InvalidTag:
        raise AuthenticationFailure("key unwrap failed (wrong password or label)") from None


def block_aad(file_id: bytes, index: int) -> bytes:
    """Associated data binding a block to its file and position."""
    if len(file_id) != 16:
        raise ValueError("file_id must be 16 bytes")
    if index < 0:
        raise ValueError("block index must be non-negative")
    return file_id + struct.pack(">Q", index)


class EnclaveSession:
    """Handle to an initialized enclave context (the four entry points:
    initialize, encrypt_bytes, decrypt_bytes, destroy).

    A session is initialized at most once and unusable after destroy.
    Concurrent encrypt/decrypt calls are safe; destroy must be exclusive
    (reader-writer contract: many crypto calls OR one destroy).
    """

    def __init__(
        self,
        platform: tee.PlatformIdentity,
        enclave_code: bytes,
        signer_identity: bytes,
        product_id: int = 1,
        isv_svn: int = 1,
        policy: tee.SealingPolicy = tee.SealingPolicy.MRENCLAVE,
    ):
        self._platform = platform
        self._code = bytes(enclave_code)
        self._signer = bytes(signer_identity)
        self._product_id = product_id
        self._isv_svn = isv_svn
        self.policy = policy
        self.enclave: tee.EnclaveIdentity | None = None
        self._initialized = False
        self._destroyed = False
        self._lock = threading.Lock()

    def initialize(self) -> "EnclaveSession":
        with self._lock:
            if self._destroyed:
                raise SessionDestroyed("session was destroyed")
            if self._initialized:
                raise AlreadyInitialized("session already initialized")
            self.enclave = tee.measure_enclave(
                self._code, self._signer, self._product_id, self._isv_svn
            )
            self._initialized = True
        return self

    @property
    def identity(self) -> tee.EnclaveIdentity:
        self._require_live()
        assert self.enclave is not None
        return self.enclave

    def _require_live(self) -> None:
        if self._destroyed:
            raise SessionDestroyed("session was destroyed")
        if not self._initialized:
            raise SessionDestroyed("session not initialized")

    def encrypt_bytes(self, payload: bytes, aad: bytes = b"") -> tee.SealedBlob:
        self._require_live()
        return tee.seal(self._platform, self.enclave, self.policy, payload, aad)

    def decrypt_bytes(self, blob: tee.SealedBlob | bytes, aad: bytes = b"") -> bytes:
        self._require_live()
        return tee.unseal(self._platform, self.enclave, blob, aad)

    def destroy(self) -> None:
        """Tear the session down; drops cached key material references."""
        with self._lock:
            if self._destroyed:
                raise AlreadyDestroyed("session already destroyed")
            self._destroyed = True
            self._platform = None  # type: ignore[assignment]
            self._code = b""
            self.enclave = None


def init_enclave(
    platform: tee.PlatformIdentity,
    enclave_code: bytes,
    signer_identity: bytes,
    product_id: int = 1,
    isv_svn: int = 1,
    policy: tee.SealingPolicy = tee.SealingPolicy.MRENCLAVE,
) -> EnclaveSession:
    """Create and initialize an enclave session for sealed-mode crypto."""
    return EnclaveSession(
        platform, enclave_code, signer_identity, product_id, isv_svn, policy
    ).initialize()


def destroy_enclave(session: EnclaveSession) -> None:
    session.destroy()


def _content_key(keys: MasterKeys | bytes) -> bytes:
    key = keys.content_key if isinstance(keys, MasterKeys) else keys
    if len(key) != 32:
        raise ValueError("content key must be 32 bytes")
    return key


def encrypt_block(
    mode: ModeId,
    keys: MasterKeys | bytes | EnclaveSession,
    file_id: bytes,
    index: int,
    cleartext: bytes,
) -> bytes:
    """Encrypt one cleartext block (1..32768 bytes) at a given position.

    v1 takes MasterKeys (or a raw 32-byte content key); sealed takes an
    initialized EnclaveSession.
    """
    if len(cleartext) == 0:
        raise EmptyBlock("blocks must contain at least 1 byte")
    if len(cleartext) > BLOCK_SIZE:
        raise BlockTooLarge(f"block of {len(cleartext)} bytes exceeds {BLOCK_SIZE}")
    aad = block_aad(file_id, index)
    if mode is ModeId.SEALED:
        if not isinstance(keys, EnclaveSession):
            raise TypeError("sealed mode requires an EnclaveSession")
        return keys.encrypt_bytes(bytes(cleartext), aad).to_bytes()
    iv = os.urandom(12)
    return iv + AESGCM(_content_key(keys)).encrypt(iv, bytes(cleartext), aad)


def decrypt_block(
    mode: ModeId,
    keys: MasterKeys | bytes | EnclaveSession,
    file_id: bytes,
    index: int,
    block: bytes,
) -> bytes:
    """Inverse of encrypt_block under the identical (file_id, index) AAD."""
    aad = block_aad(file_id, index)
    if mode is ModeId.SEALED:
        if not isinstance(keys, EnclaveSession):
            raise TypeError("sealed mode requires an EnclaveSession")
        try:
            cleartext = keys.decrypt_bytes(bytes(block), aad)
        except MalformedBlob as exc:
            raise MalformedBlock(str(exc)) from None
        if not 1 <= len(cleartext) <= BLOCK_SIZE:
            raise MalformedBlock("block cleartext outside 1..32768")
        return cleartext
    if len(block) < V1_BLOCK_OVERHEAD + 1:
        raise MalformedBlock("v1 block shorter than overhead plus one byte")
    if len(block) > V1_BLOCK_OVERHEAD + BLOCK_SIZE:
        raise MalformedBlock("v1 block longer than a full block")
    try:
        return AESGCM(_content_key(keys)).decrypt(block[:12], block[12:], aad)
    except InvalidTag:
        raise AuthenticationFailure(
            f"block {index} failed authentication (tamper or wrong position)"
        ) from None


def _validate_name(name: str) -> bytes:
    if not isinstance(name, str):
        raise InvalidName("name must be a string")
    raw = name.encode("utf-8")
    if len(raw) == 0:
        raise InvalidName("empty name")
    if "/" in name or "\\" in name or "\x00" in name:
        raise InvalidName("name contains a path separator or NUL")
    if len(raw) > MAX_NAME_BYTES:
        raise NameTooLong(
            f"name is {len(raw)} bytes; at most {MAX_NAME_BYTES} allowed so the "
            f"encoding stays within {MAX_ENCODED_NAME} characters"
        )
    return raw


def encrypt_filename(name_key: bytes, dir_id: bytes, name: str) -> str:
    """Deterministically encrypt a name within a directory.

    Output is base64url(siv(16) | ciphertext) without padding, plus ".sc".
    The directory id is associated data, so equal names in different
    directories encode differently.
    """
    raw = _validate_name(name)
    if len(dir_id) != 16:
        raise ValueError("dir_id must be 16 bytes")
    sealed = AESSIV(name_key).encrypt(raw, [dir_id])
    encoded = base64.urlsafe_b64encode(sealed).rstrip(b"=").decode("ascii") + NAME_SUFFIX
    assert len(encoded) <= MAX_ENCODED_NAME
    return encoded


def decrypt_filename(name_key: bytes, dir_id: bytes, encoded: str) -> str:
    """Inverse of encrypt_filename; authentication fails on tamper or a
    wrong directory id."""
    if not encoded.endswith(NAME_SUFFIX):
        raise MalformedName(f"missing {NAME_SUFFIX} suffix")
    body = encoded[: -len(NAME_SUFFIX)]
    if not body:
        raise MalformedName("empty name body")
    try:
        raw = base64.b64decode(
            body + "=" * (-len(body) % 4), altchars=b"-_", validate=True
        )
    except (binascii.Error, ValueError):
        raise MalformedName("invalid base64 body") from None
    if len(raw) < 17:  # 16-byte SIV plus at least one ciphertext byte
        raise MalformedName("encoded name too short")
    try:
        cleartext = AESSIV(name_key).decrypt(raw, [dir_id])
    except InvalidTag:
        raise AuthenticationFailure("filename failed authentication") from None
    return cleartext.decode("utf-8")
