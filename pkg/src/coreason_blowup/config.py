# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_blowup

"""
Plain-text run manifests.

Grammar: one `key = value` per line, `#` starts a comment, blank lines are ignored. Keys are
the flat field names of RunManifest and its sections; list values are comma separated and the
literal `None` clears an optional value.
"""

import os
import re
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Type

from pydantic import BaseModel, ValidationError

from coreason_blowup.exceptions import ConfigError
from coreason_blowup.models import (
    Command,
    EvolutionConfig,
    ExperimentSettings,
    MeshSettings,
    RunManifest,
    ShootingSettings,
    SnapshotSchedule,
)
from coreason_blowup.utils.logger import logger

OUTPUT_ENV = "BLOWUP_OUTPUT_DIR"

# Section path inside RunManifest -> model owning the keys of that section.
SECTIONS: List[Tuple[Tuple[str, ...], Type[BaseModel]]] = [
    ((), RunManifest),
    (("evolution",), EvolutionConfig),
    (("evolution", "mesh"), MeshSettings),
    (("evolution", "snapshots"), SnapshotSchedule),
    (("shooting",), ShootingSettings),
    (("experiment",), ExperimentSettings),
]
NESTED = {"evolution", "mesh", "snapshots", "shooting", "experiment"}


def _key_index() -> Dict[str, Tuple[str, ...]]:
    index: Dict[str, Tuple[str, ...]] = {}
    for path, model in SECTIONS:
        for name in model.model_fields:
            if name in NESTED:
                continue
            if name in index:  # pragma: no cover
                raise RuntimeError(f"Manifest key {name!r} is ambiguous")
            index[name] = path + (name,)
    return index


KEYS = _key_index()


def _is_list(path: Tuple[str, ...]) -> bool:
    model = dict(SECTIONS)[path[:-1]]
    annotation = model.model_fields[path[-1]].annotation
    return getattr(annotation, "__origin__", None) is list


def parse_lines(text: str) -> List[Tuple[int, str, str]]:
    """Splits manifest text into (line number, key, raw value) triples."""
    entries: List[Tuple[int, str, str]] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("missing key", line=number)
        entries.append((number, key, value))
    return entries


def _convert(path: Tuple[str, ...], value: str) -> Any:
    if value == "None":
        return None
    if _is_list(path):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def _assign(tree: Dict[str, Any], path: Tuple[str, ...], value: Any) -> None:
    node = tree
    for part in path[:-1]:
        node = node.setdefault(part, {})
    node[path[-1]] = value


def _error_key(names: Sequence[str], message: str, origin: Mapping[str, Optional[int]]) -> Optional[str]:
    """
    The manifest key a validation error points at. Errors raised by a section's model validator
    carry only the section path, so the key is taken from the section's keys named in the message,
    else from all keys given for that section, preferring the one on the latest line.
    """
    key = next((name for name in reversed(names) if name in origin), None)
    if key is not None or not names:
        return key
    section = tuple(names)
    given = [name for name in origin if KEYS[name][: len(section)] == section]
    named = [name for name in given if re.search(rf"(?<![\w.]){re.escape(name)}(?![\w])", message)]
    candidates = named or given
    if not candidates:
        return None
    return max(candidates, key=lambda name: origin[name] or 0)


def build_manifest(
    entries: Sequence[Tuple[Optional[int], str, str]],
    command: Optional[Command | str] = None,
) -> RunManifest:
    """
    Validates (line, key, value) entries into a RunManifest; later entries win.

    Raises:
        ConfigError: On unknown keys or values rejected by validation, citing the line when known.
    """
    tree: Dict[str, Any] = {}
    origin: Dict[str, Optional[int]] = {}
    for number, key, value in entries:
        path = KEYS.get(key)
        if path is None:
            raise ConfigError(f"unknown key {key!r}", line=number)
        _assign(tree, path, _convert(path, value))
        origin[key] = number
    if command is not None:
        tree["command"] = Command(command)
    if "command" not in tree:
        raise ConfigError("no command given")

    try:
        return RunManifest.model_validate(tree)
    except ValidationError as exc:
        error = exc.errors()[0]
        names = [str(part) for part in error["loc"] if isinstance(part, str)]
        key = _error_key(names, error["msg"], origin)
        label = key or ".".join(names) or "manifest"
        raise ConfigError(f"{label}: {error['msg']}", line=origin.get(key) if key else None) from exc


def parse_overrides(overrides: Sequence[str]) -> List[Tuple[Optional[int], str, str]]:
    """`key=value` strings from the command line."""
    parsed: List[Tuple[Optional[int], str, str]] = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        parsed.append((None, key, value))
    return parsed


def parse_config(
    source: Optional[str | Path] = None,
    command: Optional[Command | str] = None,
    overrides: Sequence[str] = (),
    output: Optional[Path] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunManifest:
    """
    Resolves a manifest with precedence file < overrides < environment < explicit output.

    Args:
        source: Manifest text, or a path to a manifest file.
        command: Command to run; overrides a `command` key in the file.
        overrides: `key=value` strings.
        output: Output directory given on the command line.
        environ: Environment used for BLOWUP_OUTPUT_DIR; defaults to os.environ.

    Returns:
        The validated manifest with all defaults resolved.
    """
    text = ""
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif source is not None:
        text = source
    entries: List[Tuple[Optional[int], str, str]] = list(parse_lines(text))
    entries.extend(parse_overrides(overrides))

    env = os.environ if environ is None else environ
    if env.get(OUTPUT_ENV):
        entries.append((None, "output_dir", env[OUTPUT_ENV]))
    if output is not None:
        entries.append((None, "output_dir", str(output)))

    manifest = build_manifest(entries, command)
    logger.info(f"Resolved manifest:\n{render_manifest(manifest)}")
    return manifest


def _render_value(value: Any) -> str:
    if value is None:
        return "None"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(_render_value(item) for item in value)
    if isinstance(value, Command):
        return value.value
    if isinstance(value, Path):
        return value.as_posix()
    return str(value)


def render_manifest(manifest: RunManifest) -> str:
    """The fully resolved manifest in the file grammar; parsing it yields an equal manifest."""
    lines = [f"command = {manifest.command.value}", f"output_dir = {manifest.output_dir.as_posix()}"]
    for path, _ in SECTIONS[1:]:
        node: Any = manifest
        for part in path:
            node = getattr(node, part)
        lines.append("")
        lines.append(f"# {'.'.join(path)}")
        for name in type(node).model_fields:
            if name in NESTED:
                continue
            lines.append(f"{name} = {_render_value(getattr(node, name))}")
    return "\n".join(lines) + "\n"


def write_manifest(manifest: RunManifest, directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "manifest.txt"
    path.write_text(render_manifest(manifest), encoding="utf-8")
    return path
