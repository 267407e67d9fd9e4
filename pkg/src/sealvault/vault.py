"""The on-disk encrypted container: creation, unlock, and file operations.

Physical layout under a vault root:

    vault.cfg                      versioned binary config record (see below)
    d/<2 hex>/<30 hex>/            one physical directory per directory id,
                                   sharded by HMAC-SHA-256(name_key, dir_id)
        <encrypted-name>.sc        a file object (regular file)
        <encrypted-name>.sc/       a subdirectory entry, containing only
            dirid.sc               the child directory id, encrypted

The root directory has dir_id = 16 zero bytes. File objects start with a
fixed 640-byte header (file_id, the per-file content key protected per
mode, zero padding), followed by encrypted 32 KiB blocks in index order,
so the ciphertext size is always

    640 + overhead * ceil(cleartext / 32768) + cleartext

with overhead 28 (v1) or 560 (sealed). The law is invertible, which lets
directory listings report cleartext sizes without touching file contents.

vault.cfg is a length-prefixed record protected by a SHA-256 trailer; any
bit flip surfaces as CorruptConfig before key material is touched. It
stores only wrapped or sealed secrets and is safe to sync to a remote.
"""

from __future__ import annotations

import errno
import hmac
import os
import shutil
import struct
import threading
from dataclasses import dataclass
from hashlib import sha256
from pathlib import Path
from typing import BinaryIO, Iterator

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import modes, tee
from .errors import (
    AuthenticationFailure,
    CorruptConfig,
    DirectoryNotEmpty,
    InvalidName,
    MalformedBlob,
    MalformedBlock,
    MissingPlatform,
    NotFound,
    StorageFull,
    SvnViolation,
    TargetNotEmpty,
    UnsealFailure,
    VaultLocked,
    WrongPassword,
)

CONFIG_NAME = "vault.cfg"
DATA_DIR = "d"
FILE_HEADER_SIZE = 640
ROOT_DIR_ID = bytes(16)
DIRID_NAME = "dirid.sc"
TEMP_PREFIX = ".tmp-"

CONFIG_MAGIC = b"SVC1"
CONFIG_VERSION = 1

# Built-in enclave identity for sealed vaults. The code blob stands in for
# an enclave binary; bumping it changes the measurement and orphans old
# vaults, so treat it as part of the on-disk format.
VAULT_ENCLAVE_CODE = b"sealvault block-sealing enclave r1\n"
VAULT_ENCLAVE_SIGNER = b"sealvault signing identity r1"
VAULT_ENCLAVE_PRODUCT_ID = 1
VAULT_ENCLAVE_ISV_SVN = 1

_LABEL_NAME_KEY = b"SVNAMEKEY"
_LABEL_CONTENT_KEY = b"SVCONTENTKEY"
_LABEL_FILE_KEY = b"SVFILEKEY"
_LABEL_DIR_ID = b"SVDIRID"

_WRAPPED = 1
_SEALED = 2

_SEALED_KEY_SIZE = tee.HEADER_SIZE + 32  # sealed blob carrying a 32-byte key


@dataclass
class VaultConfig:
    """Parsed vault.cfg contents."""

    format_version: int
    vault_id: bytes
    mode: modes.ModeId
    kdf_salt: bytes
    kdf_iterations: int
    wrapped_name_key: bytes
    protection_kind: int  # _WRAPPED or _SEALED
    content_key_protection: bytes
    enclave_measurement: bytes | None = None
    enclave_signer: bytes | None = None

    def to_bytes(self) -> bytes:
        body = bytearray()
        body += self.vault_id
        body += struct.pack("<B", 1 if self.mode is modes.ModeId.V1 else 2)
        body += self.kdf_salt
        body += struct.pack("<I", self.kdf_iterations)
        body += struct.pack("<H", len(self.wrapped_name_key)) + self.wrapped_name_key
        body += struct.pack("<B", self.protection_kind)
        body += struct.pack("<I", len(self.content_key_protection))
        body += self.content_key_protection
        if self.enclave_measurement is not None:
            body += b"\x01" + self.enclave_measurement + self.enclave_signer
        else:
            body += b"\x00"
        record = CONFIG_MAGIC + struct.pack("<II", self.format_version, len(body)) + bytes(body)
        return record + sha256(record).digest()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "VaultConfig":
        if len(raw) < 12 + 32 or raw[:4] != CONFIG_MAGIC:
            raise CorruptConfig("not a vault config record")
        if sha256(raw[:-32]).digest() != raw[-32:]:
            raise CorruptConfig("config integrity check failed")
        version, body_len = struct.unpack_from("<II", raw, 4)
        if version != CONFIG_VERSION:
            raise CorruptConfig(f"unsupported config version {version}")
        body = raw[12:-32]
        if len(body) != body_len:
            raise CorruptConfig("config length mismatch")
        try:
            off = 0
            vault_id = body[off:off + 16]; off += 16
            (mode_code,) = struct.unpack_from("<B", body, off); off += 1
            salt = body[off:off + 16]; off += 16
            (iterations,) = struct.unpack_from("<I", body, off); off += 4
            (nk_len,) = struct.unpack_from("<H", body, off); off += 2
            wrapped_name_key = body[off:off + nk_len]; off += nk_len
            (kind,) = struct.unpack_from("<B", body, off); off += 1
            (prot_len,) = struct.unpack_from("<I", body, off); off += 4
            protection = body[off:off + prot_len]; off += prot_len
            (has_enclave,) = struct.unpack_from("<B", body, off); off += 1
            measurement = signer = None
            if has_enclave:
                measurement = body[off:off + 32]; off += 32
                signer = body[off:off + 32]; off += 32
            if off != len(body):
                raise CorruptConfig("trailing bytes in config body")
        except struct.error:
            raise CorruptConfig("truncated config body") from None
        if mode_code not in (1, 2):
            raise CorruptConfig(f"unknown mode code {mode_code}")
        mode = modes.ModeId.V1 if mode_code == 1 else modes.ModeId.SEALED
        if len(wrapped_name_key) != modes.WRAPPED_KEY_SIZE or len(salt) != 16:
            raise CorruptConfig("bad field sizes in config")
        if mode is modes.ModeId.V1 and (kind != _WRAPPED or prot_len != modes.WRAPPED_KEY_SIZE):
            raise CorruptConfig("v1 config must carry a wrapped content key")
        if mode is modes.ModeId.SEALED and (
            kind != _SEALED or prot_len != _SEALED_KEY_SIZE or measurement is None
        ):
            raise CorruptConfig("sealed config must carry a sealed content key and enclave descriptor")
        return cls(
            format_version=version,
            vault_id=vault_id,
            mode=mode,
            kdf_salt=salt,
            kdf_iterations=iterations,
            wrapped_name_key=wrapped_name_key,
            protection_kind=kind,
            content_key_protection=protection,
            enclave_measurement=measurement,
            enclave_signer=signer,
        )


def describe_config(config: VaultConfig) -> str:
    """Human-readable diagnostic dump of a config record (no secrets beyond
    their wrapped/sealed forms)."""
    lines = [
        f"format_version:  {config.format_version}",
        f"vault_id:        {config.vault_id.hex()}",
        f"mode:            {config.mode.value}",
        f"kdf:             PBKDF2-HMAC-SHA256, salt={config.kdf_salt.hex()}, "
        f"iterations={config.kdf_iterations}",
        f"name_key:        wrapped, {len(config.wrapped_name_key)} bytes",
        f"content_key:     {'wrapped' if config.protection_kind == _WRAPPED else 'sealed'}, "
        f"{len(config.content_key_protection)} bytes",
    ]
    if config.enclave_measurement is not None:
        lines.append(f"enclave:         measurement={config.enclave_measurement.hex()}")
        lines.append(f"                 signer={config.enclave_signer.hex()}")
    return "\n".join(lines)


@dataclass(frozen=True)
class DirEntry:
    """One directory listing entry; kind is 'file', 'dir', or 'unreadable'
    (an entry whose name does not decrypt under this vault's keys)."""

    name: str
    kind: str
    size: int | None


def object_size(cleartext_size: int, block_overhead: int) -> int:
    """Forward size law: ciphertext object size for a given cleartext size."""
    if cleartext_size < 0:
        raise ValueError("negative size")
    n_blocks = -(-cleartext_size // modes.BLOCK_SIZE)
    return FILE_HEADER_SIZE + block_overhead * n_blocks + cleartext_size


def invert_object_size(ciphertext_size: int, block_overhead: int) -> int:
    """Recover the cleartext size from a ciphertext object size.

    The law pt -> 640 + ovh*ceil(pt/32768) + pt is strictly increasing, so
    the inverse is unique: n = ceil((ct-640) / (32768+ovh)), pt = ct-640-ovh*n.
    Raises ValueError for sizes no valid object can have.
    """
    if ciphertext_size == FILE_HEADER_SIZE:
        return 0
    body = ciphertext_size - FILE_HEADER_SIZE
    if body <= block_overhead:
        raise ValueError(f"no cleartext size maps to ciphertext size {ciphertext_size}")
    full = modes.BLOCK_SIZE + block_overhead
    n_blocks = -(-body // full)
    cleartext = body - block_overhead * n_blocks
    if cleartext < 0 or -(-cleartext // modes.BLOCK_SIZE) != n_blocks:
        raise ValueError(f"no cleartext size maps to ciphertext size {ciphertext_size}")
    return cleartext


def _hmac256(key: bytes, message: bytes) -> bytes:
    return hmac.new(key, message, "sha256").digest()


def _file_key_label(file_id: bytes) -> bytes:
    return _LABEL_FILE_KEY + file_id


def _split_path(logical_path: str) -> list[str]:
    """Split and validate a logical vault path into components."""
    parts = [p for p in str(logical_path).replace("\\", "/").split("/") if p]
    for part in parts:
        if part in (".", ".."):
            raise InvalidName(f"path component {part!r} not allowed")
        modes._validate_name(part)
    return parts


class VaultHandle:
    """An unlocked vault. Obtained from unlock_vault; rejects all I/O after
    lock(). Concurrent readers are fine; writes serialize per logical path."""

    def __init__(
        self,
        root: Path,
        config: VaultConfig,
        master: modes.MasterKeys,
        session: modes.EnclaveSession | None,
    ):
        self.root = Path(root)
        self.config = config
        self.mode = config.mode
        self._master: modes.MasterKeys | None = master
        self._session = session
        self._locks_guard = threading.Lock()
        self._path_locks: dict[str, threading.Lock] = {}

    # -- lifecycle ---------------------------------------------------------

    @property
    def is_locked(self) -> bool:
        return self._master is None

    def lock(self) -> None:
        """Drop key material; the handle rejects all further I/O."""
        if self._session is not None:
            try:
                self._session.destroy()
            except Exception:
                pass
            self._session = None
        self._master = None

    def __enter__(self) -> "VaultHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.lock()

    def _keys(self) -> modes.MasterKeys:
        if self._master is None:
            raise VaultLocked("vault handle is locked")
        return self._master

    def _block_keysource(self, file_key: bytes):
        if self.mode is modes.ModeId.SEALED:
            return self._session
        return file_key

    def _write_lock(self, logical: str) -> threading.Lock:
        with self._locks_guard:
            return self._path_locks.setdefault(logical, threading.Lock())

    # -- path resolution ----------------------------------------------------

    def _shard_dir(self, dir_id: bytes) -> Path:
        digest = _hmac256(self._keys().name_key, dir_id).hex()
        return self.root / DATA_DIR / digest[:2] / digest[2:32]

    def _encrypt_name(self, dir_id: bytes, name: str) -> str:
        return modes.encrypt_filename(self._keys().name_key, dir_id, name)

    def _read_dirid(self, entry_dir: Path, parent_id: bytes) -> bytes:
        raw = (entry_dir / DIRID_NAME).read_bytes()
        if len(raw) != 44:
            raise MalformedBlock("directory id object has wrong size")
        try:
            return AESGCM(self._keys().name_key).decrypt(
                raw[:12], raw[12:], _LABEL_DIR_ID + parent_id
            )
        except InvalidTag:
            raise AuthenticationFailure("directory id failed authentication") from None

    def _write_dirid(self, entry_dir: Path, parent_id: bytes, child_id: bytes) -> None:
        iv = os.urandom(12)
        blob = iv + AESGCM(self._keys().name_key).encrypt(
            iv, child_id, _LABEL_DIR_ID + parent_id
        )
        (entry_dir / DIRID_NAME).write_bytes(blob)

    def _resolve_dir(self, parts: list[str], create: bool = False) -> tuple[bytes, Path]:
        """Walk directory components to (dir_id, physical path)."""
        self._keys()
        dir_id = ROOT_DIR_ID
        phys = self._shard_dir(dir_id)
        for comp in parts:
            ename = self._encrypt_name(dir_id, comp)
            entry = phys / ename
            if entry.is_dir():
                child_id = self._read_dirid(entry, dir_id)
            elif create:
                child_id = self._create_dir_entry(phys, entry, dir_id)
            elif entry.exists():
                raise NotFound(f"{comp!r} is a file, not a directory")
            else:
                raise NotFound(f"no such directory: {comp!r}")
            dir_id = child_id
            phys = self._shard_dir(dir_id)
        if create:
            # a synced replica may lack shard dirs for empty directories
            phys.mkdir(parents=True, exist_ok=True)
        return dir_id, phys

    def _create_dir_entry(self, phys: Path, entry: Path, parent_id: bytes) -> bytes:
        """Create a subdirectory entry atomically: stage the entry with its
        dirid object, rename into place, and defer to a concurrent winner."""
        child_id = os.urandom(16)
        staging = phys / (TEMP_PREFIX + os.urandom(8).hex())
        staging.mkdir(parents=True)
        self._write_dirid(staging, parent_id, child_id)
        try:
            os.rename(staging, entry)
        except OSError:
            shutil.rmtree(staging, ignore_errors=True)
            if entry.is_dir():
                child_id = self._read_dirid(entry, parent_id)
            elif entry.exists():
                raise NotFound(
                    f"a file occupies the directory slot at {entry.name!r}"
                ) from None
            else:
                raise
        self._shard_dir(child_id).mkdir(parents=True, exist_ok=True)
        return child_id

    def map_path(self, logical_path: str) -> Path:
        """Physical location of a logical path (pure function of the keys)."""
        parts = _split_path(logical_path)
        if not parts:
            _, phys = self._resolve_dir([])
            return phys
        dir_id, phys = self._resolve_dir(parts[:-1])
        return phys / self._encrypt_name(dir_id, parts[-1])

    def exists(self, logical_path: str) -> bool:
        try:
            return self.map_path(logical_path).exists()
        except NotFound:
            return False

    def make_dir(self, logical_path: str) -> None:
        """Create a directory (and any missing parents)."""
        parts = _split_path(logical_path)
        if not parts:
            return
        self._resolve_dir(parts, create=True)

    # -- file objects --------------------------------------------------------

    def _build_header(self, file_id: bytes, file_key: bytes) -> bytes:
        if self.mode is modes.ModeId.V1:
            prot = modes.wrap_key(
                self._keys().content_key, file_key, _file_key_label(file_id)
            )
        else:
            prot = self._session.encrypt_bytes(
                file_key, _file_key_label(file_id)
            ).to_bytes()
        header = file_id + prot
        return header + bytes(FILE_HEADER_SIZE - len(header))

    def _parse_header(self, raw: bytes) -> tuple[bytes, bytes]:
        """Validate a 640-byte header and recover (file_id, file_key)."""
        if len(raw) < FILE_HEADER_SIZE:
            raise MalformedBlock("file object shorter than its header")
        file_id = raw[:16]
        prot_len = (
            modes.WRAPPED_KEY_SIZE if self.mode is modes.ModeId.V1 else _SEALED_KEY_SIZE
        )
        prot = raw[16:16 + prot_len]
        if any(raw[16 + prot_len:FILE_HEADER_SIZE]):
            raise MalformedBlock("file header padding not zero")
        if self.mode is modes.ModeId.V1:
            file_key = modes.unwrap_key(
                self._keys().content_key, prot, _file_key_label(file_id)
            )
        else:
            try:
                file_key = self._session.decrypt_bytes(prot, _file_key_label(file_id))
            except MalformedBlob as exc:
                raise MalformedBlock(str(exc)) from None
        if len(file_key) != 32:
            raise MalformedBlock("protected file key has wrong size")
        return file_id, file_key

    def _chunks(self, content) -> Iterator[bytes]:
        if isinstance(content, (bytes, bytearray, memoryview)):
            data = memoryview(content)
            for off in range(0, len(data), modes.BLOCK_SIZE):
                yield bytes(data[off:off + modes.BLOCK_SIZE])
            return
        while True:
            chunk = content.read(modes.BLOCK_SIZE)
            if not chunk:
                return
            # top up short reads so only the final block may be partial
            while len(chunk) < modes.BLOCK_SIZE:
                more = content.read(modes.BLOCK_SIZE - len(chunk))
                if not more:
                    break
                chunk += more
            yield chunk

    def write_file(self, logical_path: str, content: bytes | BinaryIO) -> int:
        """Encrypt and store content at a logical path, creating parent
        directories as needed. Overwrites atomically (temp file + rename).
        Returns the number of cleartext bytes stored."""
        parts = _split_path(logical_path)
        if not parts:
            raise InvalidName("cannot write to the vault root")
        logical = "/".join(parts)
        with self._write_lock(logical):
            dir_id, phys = self._resolve_dir(parts[:-1], create=True)
            target = phys / self._encrypt_name(dir_id, parts[-1])
            if target.is_dir():
                raise InvalidName(f"{parts[-1]!r} is a directory")
            file_id = os.urandom(16)
            file_key = os.urandom(32)
            keysource = self._block_keysource(file_key)
            tmp = phys / (TEMP_PREFIX + os.urandom(8).hex())
            stored = 0
            try:
                with open(tmp, "wb") as out:
                    out.write(self._build_header(file_id, file_key))
                    for index, chunk in enumerate(self._chunks(content)):
                        out.write(
                            modes.encrypt_block(
                                self.mode, keysource, file_id, index, chunk
                            )
                        )
                        stored += len(chunk)
                    out.flush()
                    os.fsync(out.fileno())
                os.replace(tmp, target)
            except OSError as exc:
                tmp.unlink(missing_ok=True)
                if exc.errno == errno.ENOSPC:
                    raise StorageFull(str(exc)) from None
                raise
            except BaseException:
                tmp.unlink(missing_ok=True)
                raise
            return stored

    def _locate_file(self, logical_path: str) -> Path:
        parts = _split_path(logical_path)
        if not parts:
            raise NotFound("the vault root is not a file")
        dir_id, phys = self._resolve_dir(parts[:-1])
        target = phys / self._encrypt_name(dir_id, parts[-1])
        if not target.is_file():
            raise NotFound(f"no such file: {logical_path!r}")
        return target

    def _decrypt_body(self, file_id: bytes, file_key: bytes, body: bytes,
                      first_index: int = 0) -> bytes:
        step = modes.BLOCK_SIZE + self.mode.block_overhead
        out = bytearray()
        keysource = self._block_keysource(file_key)
        for i, off in enumerate(range(0, len(body), step)):
            chunk = body[off:off + step]
            try:
                out += modes.decrypt_block(
                    self.mode, keysource, file_id, first_index + i, chunk
                )
            except MalformedBlob as exc:
                raise MalformedBlock(str(exc)) from None
        return bytes(out)

    def read_file(self, logical_path: str) -> bytes:
        """Decrypt a stored file back to its exact original bytes."""
        target = self._locate_file(logical_path)
        raw = target.read_bytes()
        file_id, file_key = self._parse_header(raw)
        return self._decrypt_body(file_id, file_key, raw[FILE_HEADER_SIZE:])

    def read_range(self, logical_path: str, offset: int, length: int) -> bytes:
        """Random-access read at block granularity: decrypts only the blocks
        covering [offset, offset+length) and slices the result."""
        if offset < 0 or length < 0:
            raise ValueError("offset and length must be non-negative")
        target = self._locate_file(logical_path)
        step = modes.BLOCK_SIZE + self.mode.block_overhead
        with open(target, "rb") as handle:
            header = handle.read(FILE_HEADER_SIZE)
            file_id, file_key = self._parse_header(header)
            total_ct = target.stat().st_size
            try:
                total_pt = invert_object_size(total_ct, self.mode.block_overhead)
            except ValueError as exc:
                raise MalformedBlock(str(exc)) from None
            if offset >= total_pt:
                return b""
            length = min(length, total_pt - offset)
            first = offset // modes.BLOCK_SIZE
            last = (offset + length - 1) // modes.BLOCK_SIZE
            handle.seek(FILE_HEADER_SIZE + first * step)
            body = handle.read((last - first + 1) * step)
        cleartext = self._decrypt_body(file_id, file_key, body, first_index=first)
        start = offset - first * modes.BLOCK_SIZE
        return cleartext[start:start + length]

    def list_dir(self, logical_path: str = "/") -> list[DirEntry]:
        """List a directory. Sizes come from the ciphertext size law alone;
        entries whose names do not decrypt are surfaced as 'unreadable'."""
        parts = _split_path(logical_path)
        dir_id, phys = self._resolve_dir(parts)
        entries: list[DirEntry] = []
        if not phys.is_dir():  # empty directory on a freshly pulled replica
            return entries
        for item in os.scandir(phys):
            if item.name.startswith(TEMP_PREFIX):
                continue
            try:
                name = modes.decrypt_filename(self._keys().name_key, dir_id, item.name)
            except Exception:
                entries.append(DirEntry(name=item.name, kind="unreadable", size=None))
                continue
            if item.is_dir():
                entries.append(DirEntry(name=name, kind="dir", size=None))
            else:
                try:
                    size = invert_object_size(
                        item.stat().st_size, self.mode.block_overhead
                    )
                except ValueError:
                    entries.append(DirEntry(name=item.name, kind="unreadable", size=None))
                    continue
                entries.append(DirEntry(name=name, kind="file", size=size))
        entries.sort(key=lambda e: e.name)
        return entries

    def remove_file(self, logical_path: str) -> None:
        """Remove a file, or an empty directory."""
        parts = _split_path(logical_path)
        if not parts:
            raise InvalidName("cannot remove the vault root")
        dir_id, phys = self._resolve_dir(parts[:-1])
        target = phys / self._encrypt_name(dir_id, parts[-1])
        if target.is_file():
            target.unlink()
            return
        if target.is_dir():
            child_id = self._read_dirid(target, dir_id)
            shard = self._shard_dir(child_id)
            if shard.exists() and any(os.scandir(shard)):
                raise DirectoryNotEmpty(f"directory not empty: {logical_path!r}")
            if shard.exists():
                shard.rmdir()
            (target / DIRID_NAME).unlink(missing_ok=True)
            target.rmdir()
            return
        raise NotFound(f"no such entry: {logical_path!r}")

    def rename_file(self, src_path: str, dst_path: str) -> None:
        """Re-encrypt an entry's name; file content objects are untouched
        (bit-identical before and after)."""
        src_parts = _split_path(src_path)
        dst_parts = _split_path(dst_path)
        if not src_parts or not dst_parts:
            raise InvalidName("cannot rename the vault root")
        src_dir_id, src_phys = self._resolve_dir(src_parts[:-1])
        src = src_phys / self._encrypt_name(src_dir_id, src_parts[-1])
        if not src.exists():
            raise NotFound(f"no such entry: {src_path!r}")
        dst_dir_id, dst_phys = self._resolve_dir(dst_parts[:-1])
        dst = dst_phys / self._encrypt_name(dst_dir_id, dst_parts[-1])
        if src.is_dir():
            if dst.exists():
                raise TargetNotEmpty(f"destination exists: {dst_path!r}")
            child_id = self._read_dirid(src, src_dir_id)
            os.rename(src, dst)
            self._write_dirid(dst, dst_dir_id, child_id)  # AAD binds the parent
        else:
            if dst.is_dir():
                raise TargetNotEmpty(f"destination is a directory: {dst_path!r}")
            os.replace(src, dst)

    def walk(self, logical_path: str = "/") -> Iterator[tuple[str, list[str], list[str]]]:
        """os.walk-style traversal of the logical namespace."""
        base = "/".join(_split_path(logical_path))
        dirs = [e.name for e in self.list_dir(logical_path) if e.kind == "dir"]
        files = [e.name for e in self.list_dir(logical_path) if e.kind == "file"]
        yield base, dirs, files
        for d in dirs:
            yield from self.walk(f"{base}/{d}" if base else d)


def _require_empty_target(root: Path) -> None:
    if root.exists():
        if not root.is_dir():
            raise TargetNotEmpty(f"{root} exists and is not a directory")
        if any(root.iterdir()):
            raise TargetNotEmpty(f"{root} is not empty")


def _open_session(platform: tee.PlatformIdentity) -> modes.EnclaveSession:
    return modes.init_enclave(
        platform,
        VAULT_ENCLAVE_CODE,
        VAULT_ENCLAVE_SIGNER,
        product_id=VAULT_ENCLAVE_PRODUCT_ID,
        isv_svn=VAULT_ENCLAVE_ISV_SVN,
    )


def create_vault(
    root: str | Path,
    password: str,
    mode: modes.ModeId,
    platform: tee.PlatformIdentity | None = None,
    iterations: int = modes.DEFAULT_PBKDF2_ITERATIONS,
) -> VaultConfig:
    """Initialize a new vault in an empty (or absent) directory.

    Sealed mode requires a platform identity; its content key is sealed to
    that platform, while the name key is always password-wrapped (so opening
    a sealed vault needs both the password and the platform).
    """
    root = Path(root)
    _require_empty_target(root)
    if mode is modes.ModeId.SEALED and platform is None:
        raise MissingPlatform("sealed mode requires a platform identity")
    vault_id = os.urandom(16)
    salt = os.urandom(16)
    master = modes.MasterKeys(content_key=os.urandom(32), name_key=os.urandom(32))
    kek = modes.derive_kek(password, salt, iterations)
    wrapped_name_key = modes.wrap_key(kek, master.name_key, _LABEL_NAME_KEY)
    measurement = signer = None
    if mode is modes.ModeId.V1:
        kind = _WRAPPED
        protection = modes.wrap_key(kek, master.content_key, _LABEL_CONTENT_KEY)
    else:
        session = _open_session(platform)
        try:
            kind = _SEALED
            protection = session.encrypt_bytes(
                master.content_key, _LABEL_CONTENT_KEY
            ).to_bytes()
            measurement = session.identity.measurement
            signer = session.identity.signer
        finally:
            session.destroy()
    config = VaultConfig(
        format_version=CONFIG_VERSION,
        vault_id=vault_id,
        mode=mode,
        kdf_salt=salt,
        kdf_iterations=iterations,
        wrapped_name_key=wrapped_name_key,
        protection_kind=kind,
        content_key_protection=protection,
        enclave_measurement=measurement,
        enclave_signer=signer,
    )
    root.mkdir(parents=True, exist_ok=True)
    (root / CONFIG_NAME).write_bytes(config.to_bytes())
    # materialize the root directory's physical shard
    shard = _hmac256(master.name_key, ROOT_DIR_ID).hex()
    (root / DATA_DIR / shard[:2] / shard[2:32]).mkdir(parents=True)
    return config


def read_config(root: str | Path) -> VaultConfig:
    path = Path(root) / CONFIG_NAME
    if not path.is_file():
        raise CorruptConfig(f"no {CONFIG_NAME} under {root}")
    return VaultConfig.from_bytes(path.read_bytes())


def unlock_vault(
    root: str | Path,
    password: str,
    platform: tee.PlatformIdentity | None = None,
) -> VaultHandle:
    """Unlock a vault: derive the KEK, unwrap the name key, and recover the
    content key per mode. All-or-nothing: on any failure no handle exists."""
    root = Path(root)
    config = read_config(root)
    kek = modes.derive_kek(password, config.kdf_salt, config.kdf_iterations)
    try:
        name_key = modes.unwrap_key(kek, config.wrapped_name_key, _LABEL_NAME_KEY)
    except AuthenticationFailure:
        raise WrongPassword("vault password is incorrect") from None
    session = None
    if config.mode is modes.ModeId.V1:
        try:
            content_key = modes.unwrap_key(
                kek, config.content_key_protection, _LABEL_CONTENT_KEY
            )
        except AuthenticationFailure:
            raise WrongPassword("vault password is incorrect") from None
    else:
        if platform is None:
            raise MissingPlatform("sealed vault requires a platform identity")
        session = _open_session(platform)
        try:
            if (
                session.identity.measurement != config.enclave_measurement
                or session.identity.signer != config.enclave_signer
            ):
                raise UnsealFailure(
                    "vault was sealed by a different enclave identity"
                )
            content_key = session.decrypt_bytes(
                config.content_key_protection, _LABEL_CONTENT_KEY
            )
        except (AuthenticationFailure, SvnViolation, MalformedBlob) as exc:
            session.destroy()
            raise UnsealFailure(f"content key unseal failed: {exc}") from None
        except Exception:
            session.destroy()
            raise
    master = modes.MasterKeys(content_key=content_key, name_key=name_key)
    return VaultHandle(root, config, master, session)
