"""Operator command-line entry point.

Commands are sessionless: each one prompts for the password (or reads it
from the file named by SEALVAULT_PASSWORD_FILE, which may be a /dev/fd
path), unlocks the vault, acts, and exits. Secrets never appear on the
command line. Sealed-mode commands fail fast when no platform seed source
is configured (--platform-seed-file or SEALVAULT_PLATFORM_SEED_FILE; the
file holds 64 hex characters or 32 raw bytes).

Exit codes: 0 success, 1 generic error, 2 usage error, 3 authentication or
unseal failure, 4 not found.
"""

from __future__ import annotations

import argparse
import fcntl
import getpass
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from . import bench as bench_mod
from . import sync as sync_mod
from . import vault as vault_mod
from .errors import (
    AuthenticationFailure,
    EmptyPassword,
    InvalidName,
    InvalidSpec,
    MalformedName,
    MissingPlatform,
    NameTooLong,
    NotFound,
    TargetNotEmpty,
    UnsealFailure,
    VaultError,
    WrongPassword,
)
from .modes import DEFAULT_PBKDF2_ITERATIONS, ModeId
from .tee import PlatformIdentity, create_platform

PASSWORD_FILE_ENV = "SEALVAULT_PASSWORD_FILE"
PLATFORM_SEED_ENV = "SEALVAULT_PLATFORM_SEED_FILE"

EXIT_OK = 0
EXIT_GENERIC = 1
EXIT_USAGE = 2
EXIT_AUTH = 3
EXIT_NOT_FOUND = 4

_USAGE_ERRORS = (TargetNotEmpty, NameTooLong, InvalidName, MalformedName,
                 InvalidSpec, EmptyPassword, ValueError)
_AUTH_ERRORS = (WrongPassword, UnsealFailure, AuthenticationFailure, MissingPlatform)


@dataclass
class CliConfig:
    vault_root: Path | None
    platform_seed_file: str | None
    remote_url: str | None = None
    remote_token: str | None = None
    verbose: bool = False

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CliConfig":
        return cls(
            vault_root=Path(args.vault) if getattr(args, "vault", None) else None,
            platform_seed_file=(
                getattr(args, "platform_seed_file", None) or os.environ.get(PLATFORM_SEED_ENV)
            ),
            remote_url=getattr(args, "remote", None),
            remote_token=getattr(args, "token", None),
            verbose=getattr(args, "verbose", False),
        )


def _read_password(confirm: bool = False) -> str:
    path = os.environ.get(PASSWORD_FILE_ENV)
    if path:
        return Path(path).read_text().rstrip("\r\n")
    password = getpass.getpass("Vault password: ")
    if confirm:
        if getpass.getpass("Confirm password: ") != password:
            raise ValueError("passwords do not match")
    return password


def _load_platform(config: CliConfig, required: bool) -> PlatformIdentity | None:
    if not config.platform_seed_file:
        if required:
            raise MissingPlatform(
                "sealed mode needs a platform seed: pass --platform-seed-file "
                f"or set {PLATFORM_SEED_ENV}"
            )
        return None
    raw = Path(config.platform_seed_file).read_bytes()
    text = raw.decode("ascii", errors="ignore").strip()
    if len(text) == 64:
        try:
            return create_platform(bytes.fromhex(text))
        except ValueError:
            pass
    if len(raw) == 32:
        return create_platform(raw)
    raise ValueError(
        f"platform seed file {config.platform_seed_file!r} must hold 64 hex "
        "characters or 32 raw bytes"
    )


@contextmanager
def _vault_lock(root: Path):
    """Advisory lock serializing mutating commands on one vault."""
    lockfile = root / ".lock"
    with open(lockfile, "a+") as handle:
        try:
            fcntl.flock(handle, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            raise VaultError(f"another command holds the lock on {root}") from None
        yield


def _open_vault(config: CliConfig) -> vault_mod.VaultHandle:
    cfg = vault_mod.read_config(config.vault_root)
    platform = _load_platform(config, required=cfg.mode is ModeId.SEALED)
    password = _read_password()
    return vault_mod.unlock_vault(config.vault_root, password, platform=platform)


def cmd_init(args: argparse.Namespace) -> int:
    config = CliConfig.from_args(args)
    mode = ModeId(args.mode)
    platform = _load_platform(config, required=mode is ModeId.SEALED)
    password = _read_password(confirm=sys.stdin.isatty())
    vault_mod.create_vault(
        config.vault_root, password, mode, platform=platform, iterations=args.iterations
    )
    print(f"initialized {mode.value} vault at {config.vault_root}")
    return EXIT_OK


def cmd_put(args: argparse.Namespace) -> int:
    config = CliConfig.from_args(args)
    src = Path(args.src)
    if not src.is_file():
        raise NotFound(f"no such source file: {src}")
    with _vault_lock(config.vault_root):
        with _open_vault(config) as handle:
            with open(src, "rb") as stream:
                stored = handle.write_file(args.vpath, stream)
    if config.verbose:
        print(f"stored {stored} bytes at {args.vpath}")
    return EXIT_OK


def cmd_get(args: argparse.Namespace) -> int:
    config = CliConfig.from_args(args)
    with _open_vault(config) as handle:
        data = handle.read_file(args.vpath)
    dst = Path(args.dst)
    dst.parent.mkdir(parents=True, exist_ok=True)
    tmp = dst.parent / f".sealvault-get-{os.getpid()}.tmp"
    tmp.write_bytes(data)
    os.replace(tmp, dst)
    if config.verbose:
        print(f"wrote {len(data)} bytes to {dst}")
    return EXIT_OK


def cmd_ls(args: argparse.Namespace) -> int:
    config = CliConfig.from_args(args)
    with _open_vault(config) as handle:
        entries = handle.list_dir(args.vpath)
    for entry in entries:
        if entry.kind == "dir":
            print(f"{'<DIR>':>12}  {entry.name}")
        elif entry.kind == "file":
            print(f"{entry.size:>12}  {entry.name}")
        else:
            print(f"{'<?>':>12}  {entry.name}")
    return EXIT_OK


def cmd_rm(args: argparse.Namespace) -> int:
    config = CliConfig.from_args(args)
    with _vault_lock(config.vault_root):
        with _open_vault(config) as handle:
            handle.remove_file(args.vpath)
    return EXIT_OK


def cmd_mv(args: argparse.Namespace) -> int:
    config = CliConfig.from_args(args)
    with _vault_lock(config.vault_root):
        with _open_vault(config) as handle:
            handle.rename_file(args.src, args.dst)
    return EXIT_OK


def _make_store(url: str, token: str | None) -> sync_mod.RemoteStore:
    if url.startswith(("http://", "https://")):
        return sync_mod.HttpStore(url, token=token)
    return sync_mod.LocalDirStore(url)


def cmd_sync(args: argparse.Namespace) -> int:
    config = CliConfig.from_args(args)
    store = _make_store(config.remote_url, config.remote_token)
    state_path = Path(args.state) if args.state else config.vault_root / sync_mod.STATE_NAME
    with _vault_lock(config.vault_root):
        state = sync_mod.SyncState(state_path)
        report = sync_mod.sync(config.vault_root, store, state)
    print(report)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    config = CliConfig.from_args(args)
    modes = [bench_mod.BenchMode(m) for m in args.modes.split(",")]
    kinds = [bench_mod.WorkloadKind(w) for w in args.workload.split(",")]
    directions = [bench_mod.Direction(d) for d in args.directions.split(",")]
    workloads = []
    for kind in kinds:
        if kind is bench_mod.WorkloadKind.SINGLE:
            workloads.append(bench_mod.Workload(kind, args.bytes, seed=args.seed))
        else:
            workloads.append(
                bench_mod.Workload(kind, args.bytes, file_count=args.tree_files, seed=args.seed)
            )
    platform = _load_platform(config, required=False)  # ephemeral if absent
    records = bench_mod.run_bench(
        modes,
        workloads,
        directions=directions,
        repetitions=args.reps,
        staging=args.staging,
        workdir=args.workdir,
        platform=platform,
        parallel_workers=args.parallel,
    )
    bench_mod.write_csv(records, args.out)
    print(bench_mod.render_summary(bench_mod.summarize(records)))
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def cmd_dump_config(args: argparse.Namespace) -> int:
    config = CliConfig.from_args(args)
    print(vault_mod.describe_config(vault_mod.read_config(config.vault_root)))
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sealvault",
        description="Client-side encrypted vault with password-derived (v1) and "
                    "platform-bound (sealed) crypto modes.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def vault_arg(p):
        p.add_argument("--vault", required=True, help="vault root directory")
        p.add_argument("--platform-seed-file", help="file with the platform seed (sealed mode)")

    p = sub.add_parser("init", help="create a new vault (password is prompted)")
    vault_arg(p)
    p.add_argument("--mode", choices=[m.value for m in ModeId], required=True)
    p.add_argument("--iterations", type=int, default=DEFAULT_PBKDF2_ITERATIONS,
                   help="PBKDF2 iteration count")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("put", help="store a local file into the vault")
    vault_arg(p)
    p.add_argument("src")
    p.add_argument("vpath")
    p.set_defaults(func=cmd_put)

    p = sub.add_parser("get", help="read a vault file out to a local path")
    vault_arg(p)
    p.add_argument("vpath")
    p.add_argument("dst")
    p.set_defaults(func=cmd_get)

    p = sub.add_parser("ls", help="list a vault directory")
    vault_arg(p)
    p.add_argument("vpath", nargs="?", default="/")
    p.set_defaults(func=cmd_ls)

    p = sub.add_parser("rm", help="remove a vault file or empty directory")
    vault_arg(p)
    p.add_argument("vpath")
    p.set_defaults(func=cmd_rm)

    p = sub.add_parser("mv", help="rename a vault entry (content bytes untouched)")
    vault_arg(p)
    p.add_argument("src")
    p.add_argument("dst")
    p.set_defaults(func=cmd_mv)

    p = sub.add_parser("sync", help="push/pull encrypted objects to a remote store")
    vault_arg(p)
    p.add_argument("--remote", required=True, help="http(s) base URL or local directory")
    p.add_argument("--token", help="bearer token for the HTTP backend")
    p.add_argument("--state", help="sync state file (default: <vault>/sync.state)")
    p.set_defaults(func=cmd_sync)

    p = sub.add_parser("bench", help="run the throughput benchmark matrix")
    p.add_argument("--modes", default="plain,v1,sealed")
    p.add_argument("--workload", default="single", help="comma list of single,tree")
    p.add_argument("--directions", default="read,write")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--bytes", type=int, default=bench_mod.DEFAULT_SINGLE_BYTES)
    p.add_argument("--tree-files", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--staging", default="bench-staging",
                   help="corpus staging directory (pick a fast medium)")
    p.add_argument("--workdir", default="bench-work")
    p.add_argument("--parallel", type=int, default=1,
                   help="worker pool size (1 = the default single-threaded run)")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--platform-seed-file")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("dump-config", help="print a textual dump of vault.cfg")
    vault_arg(p)
    p.set_defaults(func=cmd_dump_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _AUTH_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_AUTH
    except NotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VaultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERIC


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
