"""File formats: key files, config files, chain exports, round logs, CSV.

All armored formats are strict: hex lines must be lowercase and even-length,
key files carry a one-line header, and config parsers name the offending line
in their errors. Strictness is deliberate; a log whose bytes can be rewritten
without changing their meaning would weaken the tamper-evidence of the chain.
"""

from __future__ import annotations

import base64
import binascii
import csv
import string
from pathlib import Path

from . import codec
from .chain import (
    Block,
    ChainState,
    ClaimTemplate,
    GenesisConfig,
    GenesisStaker,
    apply_block,
    apply_rejection,
    decode_block,
)
from .codec import canonical_encode
from .envelope import Identity, KeyMaterialError, PRIVATE_KEY_LEN, PUBLIC_KEY_LEN
from .errors import CodecError, ConfigError
from .simulation import MetricsTable, ScenarioConfig

PUBLIC_KEY_HEADER = "claimstake public key v1"
PRIVATE_KEY_HEADER = "claimstake secret key v1"

_HEX_DIGITS = set("0123456789abcdef")


# ---------------------------------------------------------------------------
# Key files
# ---------------------------------------------------------------------------

def write_key_files(identity: Identity, out_prefix: str | Path) -> tuple[Path, Path]:
    """Write `<prefix>.pub` and `<prefix>.sec`, base64-armored."""
    prefix = Path(out_prefix)
    public_path = prefix.with_name(prefix.name + ".pub")
    private_path = prefix.with_name(prefix.name + ".sec")
    public_path.write_text(
        PUBLIC_KEY_HEADER + "\n" + base64.b64encode(identity.public_key).decode() + "\n"
    )
    private_path.write_text(
        PRIVATE_KEY_HEADER + "\n" + base64.b64encode(identity.private_key).decode() + "\n"
    )
    return public_path, private_path


def _read_armored(path: str | Path, header: str, expected_len: int) -> bytes:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2 or lines[0] != header:
        raise KeyMaterialError(f"{path}: missing {header!r} header")
    try:
        material = base64.b64decode(lines[1], validate=True)
    except (binascii.Error, ValueError) as exc:
        raise KeyMaterialError(f"{path}: invalid base64 key body") from exc
    if len(material) != expected_len:
        raise KeyMaterialError(f"{path}: key body has wrong length")
    return material


def read_public_key_file(path: str | Path) -> bytes:
    return _read_armored(path, PUBLIC_KEY_HEADER, PUBLIC_KEY_LEN)


def read_identity_file(public_path: str | Path, private_path: str | Path) -> Identity:
    return Identity(
        public_key=read_public_key_file(public_path),
        private_key=_read_armored(private_path, PRIVATE_KEY_HEADER, PRIVATE_KEY_LEN),
    )


# ---------------------------------------------------------------------------
# Flat key = value config files
# ---------------------------------------------------------------------------

def _config_lines(path: str | Path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected 'key = value'")
        key, _, value = line.partition("=")
        yield number, key.strip(), value.strip()


def _parse_bool(path, number, value: str) -> bool:
    if value.lower() in ("true", "yes", "1"):
        return True
    if value.lower() in ("false", "no", "0"):
        return False
    raise ConfigError(f"{path}:{number}: expected a boolean, got {value!r}")


_SCENARIO_FIELDS = {
    "population": int,
    "pool_ratio": float,
    "disturbance_ratio": float,
    "rounds": int,
    "tickets_per_round": int,
    "rng_seed": int,
    "stake_per_validator": int,
}
_SCENARIO_FLAGS = ("push_unsafe", "punish_honest_blocks", "record_rounds")


def load_scenario_file(path: str | Path, **overrides) -> ScenarioConfig:
    """Parse a scenario config; keyword overrides replace file values."""
    values: dict = {}
    for number, key, value in _config_lines(path):
        if key in _SCENARIO_FIELDS:
            try:
                values[key] = _SCENARIO_FIELDS[key](value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{number}: bad value for {key}: {value!r}") from exc
        elif key in _SCENARIO_FLAGS:
            values[key] = _parse_bool(path, number, value)
        else:
            raise ConfigError(f"{path}:{number}: unknown scenario key {key!r}")

    missing = [k for k in _SCENARIO_FIELDS if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing scenario keys: {', '.join(missing)}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig(**values)


def write_scenario_file(config: ScenarioConfig, path: str | Path) -> None:
    lines = [f"{key} = {getattr(config, key)}" for key in _SCENARIO_FIELDS]
    lines += [f"{key} = {str(getattr(config, key)).lower()}" for key in _SCENARIO_FLAGS]
    Path(path).write_text("\n".join(lines) + "\n")


def load_genesis_file(path: str | Path) -> GenesisConfig:
    """Parse a genesis config; identity lines name public key files whose
    paths are resolved relative to the config file."""
    base = Path(path).parent
    seed: bytes | None = None
    min_stake: int | None = None
    stakers: list[GenesisStaker] = []
    templates: list[ClaimTemplate] = []

    for number, key, value in _config_lines(path):
        if key == "seed":
            if len(value) != 64 or not set(value) <= _HEX_DIGITS:
                raise ConfigError(f"{path}:{number}: seed must be 64 lowercase hex chars")
            seed = bytes.fromhex(value)
        elif key == "min_stake":
            try:
                min_stake = int(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{number}: bad min_stake {value!r}") from exc
        elif key == "identity":
            parts = value.rsplit(None, 1)
            if len(parts) != 2:
                raise ConfigError(
                    f"{path}:{number}: identity line needs '<pubkey file> <stake>'"
                )
            key_file, stake_text = parts
            try:
                stake = int(stake_text)
            except ValueError as exc:
                raise ConfigError(f"{path}:{number}: bad stake {stake_text!r}") from exc
            try:
                public_key = read_public_key_file(base / key_file)
            except (OSError, KeyMaterialError) as exc:
                raise ConfigError(f"{path}:{number}: {exc}") from exc
            stakers.append(GenesisStaker(public_key=public_key, stake=stake))
        elif key == "template":
            template_id, sep, criteria = value.partition("|")
            if not sep:
                raise ConfigError(
                    f"{path}:{number}: template line needs '<id> | <criteria>'"
                )
            templates.append(
                ClaimTemplate(template_id.strip(), criteria.strip())
            )
        else:
            raise ConfigError(f"{path}:{number}: unknown genesis key {key!r}")

    if seed is None:
        raise ConfigError(f"{path}: missing 'seed'")
    if min_stake is None:
        raise ConfigError(f"{path}: missing 'min_stake'")
    if not stakers:
        raise ConfigError(f"{path}: no identities listed")
    return GenesisConfig(
        identities=tuple(stakers),
        templates=tuple(templates),
        genesis_seed=seed,
        min_stake=min_stake,
    )


# ---------------------------------------------------------------------------
# Hex-armored chain data
# ---------------------------------------------------------------------------

def _decode_hex_line(line: str, where: str) -> bytes:
    if not line or len(line) % 2 or not set(line) <= _HEX_DIGITS:
        raise CodecError(f"{where}: not a lowercase hex line")
    return bytes.fromhex(line)


def write_chain_export(state: ChainState, path: str | Path) -> None:
    """Newline-delimited hex of each accepted block's canonical encoding."""
    with open(path, "w") as handle:
        for block in state.blocks:
            handle.write(canonical_encode(block).hex() + "\n")


def read_chain_export(path: str | Path) -> list[Block]:
    blocks = []
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        data = _decode_hex_line(line, f"{path}:{number}")
        blocks.append(codec.decode_with(data, decode_block))
    return blocks


def replay_blocks(start: ChainState, blocks: list[Block], directory) -> ChainState:
    state = start
    for block in blocks:
        state = apply_block(state, block, directory)
    return state


def write_round_log(events: list[tuple[bool, Block]], path: str | Path) -> None:
    """One hex line per round: the accept/reject flag and the round's block
    (with attestations), exactly the inputs replay consumes."""
    with open(path, "w") as handle:
        for accepted, block in events:
            payload = codec.encode_bool(accepted) + codec.segment(canonical_encode(block))
            handle.write(payload.hex() + "\n")


def read_round_log(path: str | Path) -> list[tuple[bool, Block]]:
    events = []
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        data = _decode_hex_line(line, f"{path}:{number}")
        reader = codec.Reader(data)
        accepted = reader.bool_()
        block = decode_block(codec.Reader(reader.segment()))
        reader.expect_end()
        events.append((accepted, block))
    return events


def round_log_events(report) -> list[tuple[bool, Block]]:
    """Project a simulation report onto its replayable chain events."""
    return [
        (outcome.accepted, outcome.block)
        for outcome in report.per_round
        if outcome.block is not None
    ]


def replay_round_log(
    start: ChainState, events: list[tuple[bool, Block]], directory
) -> ChainState:
    """Rebuild the final state by re-applying every logged round."""
    state = start
    for accepted, block in events:
        if accepted:
            state = apply_block(state, block, directory)
        else:
            state = apply_rejection(state, block, directory)
    return state


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def write_csv(path: str | Path, header, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def write_metrics_csv(table: MetricsTable, path: str | Path) -> None:
    write_csv(path, table.header, table.rows)
