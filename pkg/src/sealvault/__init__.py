"""sealvault: client-side encrypted vault with interchangeable crypto modes.

Files live in an obfuscated on-disk container as block-wise authenticated
ciphertext. Two modes share one contract: `v1` derives keys from a password
(PBKDF2 + AES-GCM), `sealed` binds content to one platform via a simulated
TEE data-sealing primitive (CMAC key derivation + AES-GCM, 560-byte sealed
headers). A sync client pushes the already-encrypted objects to a remote
store, and a benchmark harness measures read/write throughput across modes.
"""

from . import bench, errors, fsbridge, modes, sync, tee, vault
from .errors import VaultError
from .modes import ModeId
from .tee import PlatformIdentity, SealingPolicy, create_platform
from .vault import VaultHandle, create_vault, unlock_vault

__version__ = "0.1.0"

__all__ = [
    "ModeId",
    "PlatformIdentity",
    "SealingPolicy",
    "VaultError",
    "VaultHandle",
    "bench",
    "create_platform",
    "create_vault",
    "errors",
    "fsbridge",
    "modes",
    "sync",
    "tee",
    "unlock_vault",
    "vault",
    "__version__",
]
