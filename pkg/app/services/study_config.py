"""
Study config loading.

Study configs are TOML files with the sections

    [study]               name, size_ladder, beta, lambda_grid, samples_per_size,
                          master_seed
    [model]               spin_two_s, lattice, coupling
    [model.distribution]  coupling law (kind = gaussian | two_point | uniform | constant)
    [model.random_field]  optional random-field law
    [model.order]         order operator
    [replica]             n_replicas, path
    [replica.overlap]     axis, supports, replica_pair, powers_and_coeffs

Syntax errors and validation errors are raised as StudyConfigError naming the
file, the dotted field path and, when it can be found, the line.
"""

import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from pydantic import ValidationError

from app.core.provenance import generate_config_hash
from app.models.study import StudyConfig
from app.utils.logging import get_logger

logger = get_logger(__name__)

KNOWN_SECTIONS = ("study", "model", "replica")


class StudyConfigError(Exception):
    """Config file missing, unreadable, malformed or invalid."""

    def __init__(self, message: str, path: Optional[Path] = None,
                 field: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.field = field
        self.line = line
        location = str(path) if path is not None else "<config>"
        if line is not None:
            location += f":{line}"
        if field:
            location += f" [{field}]"
        super().__init__(f"{location}: {message}")


@dataclass(frozen=True)
class LoadedConfig:
    """
    A validated study config with its provenance.

    Attributes:
        config: Validated StudyConfig (seed override applied)
        config_hash: SHA-256 of the canonical JSON dump of ``config``
        source: File the config was read from (None for in-memory text)
    """
    config: StudyConfig
    config_hash: str
    source: Optional[Path] = None


def _flatten(document: Dict[str, Any], path: Optional[Path]) -> Dict[str, Any]:
    unknown = sorted(set(document) - set(KNOWN_SECTIONS))
    if unknown:
        raise StudyConfigError(f"unknown section(s) {unknown}", path=path, field=unknown[0])
    if "study" not in document:
        raise StudyConfigError("missing [study] section", path=path, field="study")
    data = dict(document["study"])
    if "model" in document:
        data["model"] = document["model"]
    if "replica" in document:
        data["replica"] = document["replica"]
    return data


def _field_path(loc: Tuple[Any, ...]) -> Tuple[str, str]:
    """
    Map a pydantic error location to (toml section, dotted field path).

    Discriminated-union tags (e.g. "gaussian") are dropped from the path.
    """
    parts = [str(item) for item in loc if not isinstance(item, int)]
    parts = [p for p in parts if p not in ("gaussian", "two_point", "uniform", "constant")]
    if not parts:
        return "study", "study"
    if parts[0] in ("model", "replica"):
        section = ".".join(parts[:-1]) if len(parts) > 1 else parts[0]
        return section, ".".join(parts)
    return "study", "study." + ".".join(parts)


def _locate(text: str, section: str, key: str) -> Optional[int]:
    """1-based line of ``key =`` inside ``[section]``, or of the section header."""
    current = None
    header_line = None
    key_pattern = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line.strip("[]").strip()
            if current == section:
                header_line = number
            continue
        if current == section and key_pattern.match(raw):
            return number
    return header_line


def parse_study_config(
    text: str,
    path: Optional[Path] = None,
    seed_override: Optional[int] = None,
) -> LoadedConfig:
    """
    Parse and validate TOML config text.

    Args:
        text: TOML document
        path: Source file, used in diagnostics
        seed_override: Replaces [study].master_seed when given

    Raises:
        StudyConfigError: TOML syntax error (with line) or validation error
            (with dotted field path and line)
    """
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise StudyConfigError(
            f"malformed TOML: {exc}", path=path, line=int(match.group(1)) if match else None
        ) from exc

    data = _flatten(document, path)
    if seed_override is not None:
        data["master_seed"] = seed_override

    try:
        config = StudyConfig.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        section, field = _field_path(tuple(error["loc"]))
        key = field.rsplit(".", 1)[-1]
        raise StudyConfigError(
            error["msg"], path=path, field=field, line=_locate(text, section, key)
        ) from exc

    config_hash = generate_config_hash(config.model_dump(mode="json"))
    logger.info(
        "Loaded study config",
        extra={"study": config.name, "config_hash": config_hash, "seed": config.master_seed},
    )
    return LoadedConfig(config=config, config_hash=config_hash, source=path)


def load_study_config(path: Union[str, Path], seed_override: Optional[int] = None) -> LoadedConfig:
    """
    Read and validate a study config file.

    Raises:
        StudyConfigError: file missing or unreadable, or any parse/validation error
    """
    source = Path(path)
    try:
        text = source.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise StudyConfigError("config file not found", path=source) from exc
    except OSError as exc:
        raise StudyConfigError(f"cannot read config file: {exc}", path=source) from exc
    return parse_study_config(text, path=source, seed_override=seed_override)
